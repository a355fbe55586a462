//! Experiment configuration file (TOML) for the `run` and `sweep` commands.
//!
//! Unknown keys are rejected. Exactly one of `[data]` or `[synthetic]` must
//! be present.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::kernel::{Bandwidth, KernelKind, KernelSpec};
use crate::pipeline::{PipelineConfig, SolverChoice};
use crate::solver::HyperParams;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSection>,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: PathBuf,
    /// Zero-based column index holding the source labels.
    pub source_label_column: usize,
    pub target: PathBuf,
    /// Optional zero-based label column in the target file; used for
    /// evaluation only.
    #[serde(default)]
    pub target_label_column: Option<usize>,
    /// Skip one header line in both files.
    #[serde(default)]
    pub header: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    #[serde(default = "default_source_centers")]
    pub source_centers: Vec<[f64; 2]>,
    #[serde(default = "default_target_centers")]
    pub target_centers: Vec<[f64; 2]>,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_std_dev")]
    pub std_dev: f64,
}

fn default_source_centers() -> Vec<[f64; 2]> {
    vec![[0.0, 2.0], [2.0, 0.0]]
}
fn default_target_centers() -> Vec<[f64; 2]> {
    vec![[-1.0, -1.0], [2.0, 0.0]]
}
fn default_per_class() -> usize {
    100
}
fn default_std_dev() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub kernel: String,
    /// "auto" or a positive number.
    pub bandwidth: toml::Value,
    pub jitter: Option<f64>,
    pub gamma_m: f64,
    pub gamma_a: f64,
    pub gamma_i: f64,
    pub gamma_d: f64,
    pub p: usize,
    pub iterations: usize,
    pub solver: String,
    pub normalize_m: bool,
    pub normalize_l: bool,
    pub svm_max_iters: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            kernel: "gaussian".into(),
            bandwidth: toml::Value::String("auto".into()),
            jitter: None,
            gamma_m: 1.0,
            gamma_a: 0.1,
            gamma_i: 1.0,
            gamma_d: 1.0,
            p: 5,
            iterations: 10,
            solver: "rls".into(),
            normalize_m: true,
            normalize_l: true,
            svm_max_iters: 5000,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

pub fn parse_kernel_kind(s: &str) -> Result<KernelKind> {
    match s.to_ascii_lowercase().as_str() {
        "linear" => Ok(KernelKind::Linear),
        "gaussian" => Ok(KernelKind::Gaussian),
        other => Err(Error::Config(format!(
            "unknown kernel {other:?}, expected \"linear\" or \"gaussian\""
        ))),
    }
}

pub fn parse_bandwidth(v: &toml::Value) -> Result<Bandwidth> {
    match v {
        toml::Value::String(s) if s.eq_ignore_ascii_case("auto") => Ok(Bandwidth::Auto),
        toml::Value::Float(f) if *f > 0.0 => Ok(Bandwidth::Fixed(*f)),
        toml::Value::Integer(i) if *i > 0 => Ok(Bandwidth::Fixed(*i as f64)),
        other => Err(Error::Config(format!(
            "bandwidth must be \"auto\" or a positive number, got {other}"
        ))),
    }
}

pub fn parse_solver(s: &str) -> Result<SolverChoice> {
    match s.to_ascii_lowercase().as_str() {
        "rls" => Ok(SolverChoice::Rls),
        "svm" => Ok(SolverChoice::Svm),
        "shared" => Ok(SolverChoice::SharedBaseline),
        other => Err(Error::Config(format!(
            "unknown solver {other:?}, expected \"rls\", \"svm\", or \"shared\""
        ))),
    }
}

impl PipelineSection {
    pub fn to_pipeline_config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            kernel: KernelSpec {
                kind: parse_kernel_kind(&self.kernel)?,
                bandwidth: parse_bandwidth(&self.bandwidth)?,
                jitter: self.jitter,
            },
            hp: HyperParams {
                gamma_m_hat: self.gamma_m,
                gamma_a_hat: self.gamma_a,
                gamma_i_hat: self.gamma_i,
                gamma_d_hat: self.gamma_d,
            },
            neighbor_count: self.p,
            iterations: self.iterations,
            solver: parse_solver(&self.solver)?,
            normalize_m: self.normalize_m,
            normalize_l: self.normalize_l,
            ..PipelineConfig::default()
        };
        cfg.svm_options.max_iters = self.svm_max_iters;
        cfg.hp.validate()?;
        cfg.kernel.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate(path.parent().unwrap_or_else(|| Path::new(".")))?;
        Ok(cfg)
    }

    fn validate(&self, base: &Path) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "config has both [data] and [synthetic]; pick one".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "config needs a [data] or [synthetic] section".into(),
                ))
            }
            _ => {}
        }
        if let Some(data) = &self.data {
            for p in [&data.source, &data.target] {
                let resolved = resolve(base, p);
                if !resolved.exists() {
                    return Err(Error::Config(format!(
                        "referenced file does not exist: {}",
                        resolved.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        self.synthetic.as_ref().map(|s| SyntheticSpec {
            source_centers: s.source_centers.clone(),
            target_centers: s.target_centers.clone(),
            per_class_count: s.per_class,
            std_dev: s.std_dev,
            rng_seed: self.seed,
        })
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
