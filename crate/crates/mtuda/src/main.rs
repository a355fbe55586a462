//! Command-line front end: synthetic demo, config-driven runs, and
//! parameter sweeps. Tables are TSV; `--json` mirrors them for programmatic
//! use. Log verbosity is controlled by the MTUDA_LOG environment variable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use mtuda::config::{self, ExperimentConfig};
use mtuda::data::{self, generate_synthetic, Dataset, LabeledDataset, SyntheticSpec, UnlabeledDataset};
use mtuda::error::Error;
use mtuda::kernel::{Bandwidth, KernelKind, KernelSpec};
use mtuda::pipeline::{self, decision_grid, PipelineConfig, SolverChoice};
use mtuda::solver::{nn_baseline, Head, HyperParams};

#[derive(Parser)]
#[command(name = "mtuda", version, about = "Multi-task unsupervised domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-Gaussian datasets and compare all methods
    /// with linear and Gaussian kernels.
    Synth(SynthArgs),
    /// Run one experiment from a config file.
    Run(RunArgs),
    /// Run one pipeline per value of a swept parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct HyperFlags {
    /// Classifier-similarity trade-off.
    #[arg(long = "gamma-m", default_value_t = 1.0)]
    gamma_m: f64,
    /// Shrinkage trade-off.
    #[arg(long = "gamma-a", default_value_t = 0.1)]
    gamma_a: f64,
    /// Manifold trade-off.
    #[arg(long = "gamma-i", default_value_t = 1.0)]
    gamma_i: f64,
    /// MMD trade-off.
    #[arg(long = "gamma-d", default_value_t = 1.0)]
    gamma_d: f64,
    /// Neighbor count for the target graph.
    #[arg(long, default_value_t = 5)]
    p: usize,
    /// Pseudo-label refinement iterations.
    #[arg(long, default_value_t = 10)]
    iters: usize,
}

impl HyperFlags {
    fn hp(&self) -> HyperParams {
        HyperParams {
            gamma_m_hat: self.gamma_m,
            gamma_a_hat: self.gamma_a,
            gamma_i_hat: self.gamma_i,
            gamma_d_hat: self.gamma_d,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the synthetic Gaussians.
    #[arg(long = "std-dev", default_value_t = 0.5)]
    std_dev: f64,
    /// Samples per class per domain.
    #[arg(long = "per-class", default_value_t = 100)]
    per_class: usize,
    /// Gaussian bandwidth: "auto" or a positive number.
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    #[command(flatten)]
    hyper: HyperFlags,
    /// Decision grid resolution.
    #[arg(long = "grid-resolution", default_value_t = 60)]
    grid_resolution: usize,
    #[arg(long, default_value = "mtuda-out")]
    out: PathBuf,
    /// Also write JSON mirrors of every table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory (overrides the config's [output].dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (TOML) providing the base setting.
    config: PathBuf,
    /// One of: gamma_m_hat, gamma_a_hat, gamma_i_hat, gamma_d_hat, p, bandwidth.
    #[arg(long)]
    param: String,
    /// Comma-separated values for the swept parameter.
    #[arg(long)]
    values: String,
    /// Parallel runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Any failed sweep point becomes fatal.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MTUDA_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn parse_bandwidth_flag(s: &str) -> Result<Bandwidth, Error> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Bandwidth::Auto);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Config(format!("bad bandwidth {s:?}")))?;
    if v > 0.0 {
        Ok(Bandwidth::Fixed(v))
    } else {
        Err(Error::Config("bandwidth must be positive".into()))
    }
}

fn fmt_acc(a: f64) -> String {
    format!("{a:.6}")
}

fn write_grid(path: &Path, grid: &[(f64, f64, usize)]) -> Result<(), Error> {
    let mut out = String::from("x\ty\tclass\n");
    for (x, y, c) in grid {
        let _ = writeln!(out, "{x:.6}\t{y:.6}\t{c}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, Error> {
    let spec = SyntheticSpec {
        per_class_count: args.per_class,
        std_dev: args.std_dev,
        rng_seed: args.seed,
        ..SyntheticSpec::default()
    };
    let (source, target_full) = generate_synthetic(&spec)?;
    let target = target_full.strip_labels();
    std::fs::create_dir_all(&args.out)?;

    let bandwidth = parse_bandwidth_flag(&args.bandwidth)?;
    let mut table: Vec<(String, String, f64)> = Vec::new();
    let mut json_rows = Vec::new();

    // padded bounding box over both domains for the decision grids
    let all = mtuda::kernel::stacked_features(&source, &target);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for j in 0..all.ncols() {
        x0 = x0.min(all[(0, j)]);
        x1 = x1.max(all[(0, j)]);
        y0 = y0.min(all[(1, j)]);
        y1 = y1.max(all[(1, j)]);
    }
    let bounds = (x0 - 1.0, x1 + 1.0, y0 - 1.0, y1 + 1.0);

    for (kernel_name, kind) in [("linear", KernelKind::Linear), ("gaussian", KernelKind::Gaussian)] {
        let kernel = KernelSpec {
            kind,
            bandwidth,
            jitter: None,
        };
        for (method, solver) in [
            ("mtuda-rls", Some(SolverChoice::Rls)),
            ("mtuda-svm", Some(SolverChoice::Svm)),
            ("shared-rls", Some(SolverChoice::SharedBaseline)),
            ("nn", None),
        ] {
            let acc = match solver {
                Some(choice) => {
                    let cfg = PipelineConfig {
                        kernel,
                        hp: args.hyper.hp(),
                        neighbor_count: args.hyper.p,
                        iterations: args.hyper.iters,
                        solver: choice,
                        ..PipelineConfig::default()
                    };
                    let result = pipeline::run(&source, &target, &cfg, Some(&target_full.labels))?;
                    if matches!(choice, SolverChoice::Rls | SolverChoice::SharedBaseline) {
                        let grid = decision_grid(
                            &result.model,
                            bounds,
                            args.grid_resolution,
                            Head::Target,
                        )?;
                        let name = format!("decision_{method}_{kernel_name}.tsv");
                        write_grid(&args.out.join(&name), &grid)?;
                        if args.json {
                            let rows: Vec<_> = grid
                                .iter()
                                .map(|(x, y, c)| json!({"x": x, "y": y, "class": c}))
                                .collect();
                            std::fs::write(
                                args.out.join(format!("decision_{method}_{kernel_name}.json")),
                                serde_json::to_string_pretty(&rows).unwrap(),
                            )?;
                        }
                    }
                    result.final_accuracy.expect("eval labels supplied")
                }
                None => {
                    let pseudo = nn_baseline(&source, &target.features)?;
                    pipeline::accuracy(&pseudo.labels, &target_full.labels)?
                }
            };
            table.push((method.to_string(), kernel_name.to_string(), acc));
            json_rows.push(json!({"method": method, "kernel": kernel_name, "accuracy": acc}));
        }
    }

    let mut tsv = String::from("method\tkernel\taccuracy\n");
    for (m, k, a) in &table {
        let _ = writeln!(tsv, "{m}\t{k}\t{}", fmt_acc(*a));
    }
    std::fs::write(args.out.join("accuracy.tsv"), &tsv)?;
    if args.json {
        std::fs::write(
            args.out.join("accuracy.json"),
            serde_json::to_string_pretty(&json_rows).unwrap(),
        )?;
    }
    print!("{tsv}");
    Ok(ExitCode::SUCCESS)
}

struct LoadedExperiment {
    source: LabeledDataset,
    target: UnlabeledDataset,
    eval_labels: Option<Vec<usize>>,
    pipeline: PipelineConfig,
    out_dir: PathBuf,
}

fn load_experiment(cfg: &ExperimentConfig, config_path: &Path, out_flag: Option<&Path>) -> Result<LoadedExperiment, Error> {
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let (source, target, eval_labels) = if let Some(spec) = cfg.synthetic_spec() {
        let (source, target_full) = generate_synthetic(&spec)?;
        let target = target_full.strip_labels();
        (source, target, Some(target_full.labels))
    } else {
        let datacfg = cfg.data.as_ref().expect("validated");
        let source = match data::load_csv(
            config::resolve(base, &datacfg.source),
            Some(datacfg.source_label_column),
            datacfg.header,
        )? {
            Dataset::Labeled(d) => d,
            Dataset::Unlabeled(_) => unreachable!("label column requested"),
        };
        match data::load_csv(
            config::resolve(base, &datacfg.target),
            datacfg.target_label_column,
            datacfg.header,
        )? {
            Dataset::Labeled(d) => {
                let labels = d.labels.clone();
                (source, d.strip_labels(), Some(labels))
            }
            Dataset::Unlabeled(d) => (source, d, None),
        }
    };
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            context: "source vs target CSV feature dimension".into(),
            expected: source.dim(),
            got: target.dim(),
        });
    }
    let out_dir = out_flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.as_ref().map(|d| config::resolve(base, d)))
        .unwrap_or_else(|| PathBuf::from("mtuda-out"));
    Ok(LoadedExperiment {
        source,
        target,
        eval_labels,
        pipeline: cfg.pipeline.to_pipeline_config()?,
        out_dir,
    })
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Error> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let exp = load_experiment(&cfg, &args.config, args.out.as_deref())?;
    std::fs::create_dir_all(&exp.out_dir)?;

    let result = pipeline::run(
        &exp.source,
        &exp.target,
        &exp.pipeline,
        exp.eval_labels.as_deref(),
    )?;

    let hp = &exp.pipeline.hp;
    let mut report = String::from("key\tvalue\n");
    let kernel_name = match exp.pipeline.kernel.kind {
        KernelKind::Linear => "linear",
        KernelKind::Gaussian => "gaussian",
    };
    let mut push = |k: &str, v: String| {
        let _ = writeln!(report, "{k}\t{v}");
    };
    push("solver", format!("{:?}", exp.pipeline.solver).to_lowercase());
    push("kernel", kernel_name.to_string());
    push(
        "bandwidth",
        result
            .resolved_bandwidth
            .map(|b| format!("{b:.6}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    push("gamma_m_hat", format!("{}", hp.gamma_m_hat));
    push("gamma_a_hat", format!("{}", hp.gamma_a_hat));
    push("gamma_i_hat", format!("{}", hp.gamma_i_hat));
    push("gamma_d_hat", format!("{}", hp.gamma_d_hat));
    push("p", format!("{}", exp.pipeline.neighbor_count));
    push("iterations", format!("{}", exp.pipeline.iterations));
    push("wall_time_s", format!("{:.3}", result.report.wall_time));
    push("objective", format!("{:.6e}", result.report.objective_value));
    push(
        "final_accuracy",
        result
            .final_accuracy
            .map(fmt_acc)
            .unwrap_or_else(|| "NA".into()),
    );
    std::fs::write(exp.out_dir.join("report.tsv"), &report)?;

    let mut iters = String::from("iteration\tpseudo_changes\taccuracy\n");
    for (i, changes) in result.change_counts.iter().enumerate() {
        let acc = result
            .per_iter_accuracy
            .as_ref()
            .map(|v| fmt_acc(v[i]))
            .unwrap_or_else(|| "NA".into());
        let _ = writeln!(iters, "{}\t{changes}\t{acc}", i + 1);
    }
    std::fs::write(exp.out_dir.join("iterations.tsv"), &iters)?;

    if args.json {
        let j = json!({
            "solver": format!("{:?}", exp.pipeline.solver).to_lowercase(),
            "kernel": kernel_name,
            "bandwidth": result.resolved_bandwidth,
            "gamma_m_hat": hp.gamma_m_hat,
            "gamma_a_hat": hp.gamma_a_hat,
            "gamma_i_hat": hp.gamma_i_hat,
            "gamma_d_hat": hp.gamma_d_hat,
            "p": exp.pipeline.neighbor_count,
            "iterations": exp.pipeline.iterations,
            "wall_time_s": result.report.wall_time,
            "objective": result.report.objective_value,
            "final_accuracy": result.final_accuracy,
            "pseudo_changes": result.change_counts,
            "per_iteration_accuracy": result.per_iter_accuracy,
        });
        std::fs::write(
            exp.out_dir.join("report.json"),
            serde_json::to_string_pretty(&j).unwrap(),
        )?;
    }
    print!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    const PARAMS: &[&str] = &[
        "gamma_m_hat",
        "gamma_a_hat",
        "gamma_i_hat",
        "gamma_d_hat",
        "p",
        "bandwidth",
    ];
    if !PARAMS.contains(&args.param.as_str()) {
        return Err(Error::Config(format!(
            "unknown sweep parameter {:?}, expected one of {PARAMS:?}",
            args.param
        )));
    }
    let cfg = ExperimentConfig::load(&args.config)?;
    let exp = load_experiment(&cfg, &args.config, args.out.as_deref())?;
    std::fs::create_dir_all(&exp.out_dir)?;

    let values: Vec<f64> = args
        .values
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad sweep value {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(Error::Config("empty value list".into()));
    }

    // Gram and Laplacian are label-free; cache whichever the swept parameter
    // leaves untouched.
    let cached_gram = if args.param == "bandwidth" {
        None
    } else {
        Some(mtuda::kernel::gram(&exp.source, &exp.target, &exp.pipeline.kernel)?)
    };
    let cached_lap = if args.param == "p" {
        None
    } else {
        Some(mtuda::graph::build_laplacian(
            &exp.target,
            exp.pipeline.neighbor_count,
            exp.pipeline.normalize_l,
        )?)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let results: Vec<Result<f64, Error>> = pool.install(|| {
        values
            .par_iter()
            .map(|&v| {
                let mut cfg = exp.pipeline.clone();
                match args.param.as_str() {
                    "gamma_m_hat" => cfg.hp.gamma_m_hat = v,
                    "gamma_a_hat" => cfg.hp.gamma_a_hat = v,
                    "gamma_i_hat" => cfg.hp.gamma_i_hat = v,
                    "gamma_d_hat" => cfg.hp.gamma_d_hat = v,
                    "p" => {
                        if v.fract() != 0.0 || v < 1.0 {
                            return Err(Error::Config(format!("p must be a positive integer, got {v}")));
                        }
                        cfg.neighbor_count = v as usize;
                    }
                    "bandwidth" => cfg.kernel.bandwidth = Bandwidth::Fixed(v),
                    _ => unreachable!(),
                }
                cfg.hp.validate()?;
                cfg.kernel.validate()?;
                let result = pipeline::run_cached(
                    &exp.source,
                    &exp.target,
                    &cfg,
                    exp.eval_labels.as_deref(),
                    cached_gram.as_ref(),
                    cached_lap.as_ref(),
                )?;
                result.final_accuracy.ok_or_else(|| {
                    Error::Config("sweep requires evaluation labels (synthetic data or a target label column)".into())
                })
            })
            .collect()
    });

    let mut tsv = String::from("value\taccuracy\tstatus\n");
    let mut json_rows = Vec::new();
    let mut any_failed = false;
    for (v, r) in values.iter().zip(&results) {
        match r {
            Ok(acc) => {
                let _ = writeln!(tsv, "{v}\t{}\tok", fmt_acc(*acc));
                json_rows.push(json!({"value": v, "accuracy": acc, "status": "ok"}));
            }
            Err(e) => {
                any_failed = true;
                let msg = e.to_string().replace(['\t', '\n'], " ");
                let _ = writeln!(tsv, "{v}\tNA\t{msg}");
                json_rows.push(json!({"value": v, "accuracy": null, "status": msg}));
            }
        }
    }
    std::fs::write(exp.out_dir.join("sweep.tsv"), &tsv)?;
    if args.json {
        std::fs::write(
            exp.out_dir.join("sweep.json"),
            serde_json::to_string_pretty(&json_rows).unwrap(),
        )?;
    }
    print!("{tsv}");
    if any_failed && args.strict {
        eprintln!("error: sweep had failures and --strict is set");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
