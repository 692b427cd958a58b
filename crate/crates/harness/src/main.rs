use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use floodbench::dataset::ValidationError;
use floodbench::serve::{serve_eval, ResultSettings, ServeConfig, DEFAULT_PROMPT, DEFAULT_QUOTA};
use floodbench::synth::{generate, SynthOptions};
use floodbench::verify::{VerifyOptions, DEFAULT_INSTANCES};
use floodbench::{cmd_ablate, cmd_evaluate, cmd_verify, StudyManifest, UsageError};
use floodbench_core::gradcheck::DEFAULT_TOLERANCE;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "floodbench", version, about = "Evaluation harness for flood-mask studies")]
struct Cli {
    /// Worker threads for data-parallel steps (default: all cores).
    #[arg(long, global = true, env = "FLOODBENCH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every model's masks against the labels.
    Evaluate(StudyArgs),
    /// Paired with/without comparison of each technique.
    Ablate(StudyArgs),
    /// Finite-difference and invariant checks of the loss kernels.
    Verify(VerifyArgs),
    /// Run the pairwise rating service.
    Serve(ServeArgs),
    /// Write a synthetic study with planted technique effects.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides the manifest's bootstrap seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the manifest's bootstrap resample count.
    #[arg(long)]
    resamples: Option<usize>,
    /// Overrides the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per kernel.
    #[arg(long, default_value_t = DEFAULT_INSTANCES)]
    instances: usize,
    /// Largest accepted relative deviation.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Directory holding pairs.csv and the images it references.
    #[arg(long)]
    pairs_dir: PathBuf,
    #[arg(long)]
    vote_log: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Votes collected per pair.
    #[arg(long, default_value_t = DEFAULT_QUOTA)]
    quota: usize,
    /// Seconds a served pair stays reserved for its rater.
    #[arg(long, default_value_t = 600)]
    lease_secs: u64,
    #[arg(long, default_value = DEFAULT_PROMPT)]
    prompt: String,
    /// Static front-end bundle served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bootstrap resamples for the reported intervals.
    #[arg(long, default_value_t = 100_000)]
    resamples: usize,
    #[arg(long, default_value_t = floodbench_core::bootstrap::DEFAULT_CONF)]
    conf: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (receives study.toml, models.csv and data/).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 180)]
    images: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Resample count written into the manifest.
    #[arg(long, default_value_t = 100_000)]
    resamples: usize,
}

fn load_manifest(args: &StudyArgs) -> Result<StudyManifest> {
    let mut m = StudyManifest::load(&args.manifest)?;
    if let Some(seed) = args.seed {
        m.bootstrap.seed = seed;
    }
    if let Some(n) = args.resamples {
        m.bootstrap.n_resamples = n;
    }
    if let Some(out) = &args.out {
        m.out = out.clone();
    }
    Ok(m)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Evaluate(args) => {
            let out = cmd_evaluate(&load_manifest(&args)?)?;
            println!(
                "{} records -> {}\nsummary -> {}",
                out.records.len(),
                out.metrics_csv.display(),
                out.summary_json.display()
            );
        }
        Command::Ablate(args) => {
            let out = cmd_ablate(&load_manifest(&args)?)?;
            for r in &out.outcome.results {
                println!(
                    "{:<8} {:<15} {:+.3e}  [{:+.3e}, {:+.3e}]  p={:.4}",
                    r.technique, r.metric, r.estimate, r.ci_low, r.ci_high, r.p
                );
            }
            println!(
                "results -> {}\nreport -> {}",
                out.ablation_csv.display(),
                out.ablation_json.display()
            );
        }
        Command::Verify(args) => {
            let opts = VerifyOptions {
                instances: args.instances,
                seed: args.seed,
                tolerance: args.tolerance,
            };
            let report = cmd_verify(&opts)?;
            print!("{}", report.render());
            if let Some(path) = &args.out {
                write_json(path, &report)?;
            }
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Serve(args) => {
            let config = ServeConfig {
                quota: args.quota,
                lease_ttl: Duration::from_secs(args.lease_secs),
                prompt: args.prompt,
                results: ResultSettings {
                    conf: args.conf,
                    n_resamples: args.resamples,
                    seed: args.seed,
                },
                static_dir: args.static_dir,
                ..ServeConfig::new(args.pairs_dir, args.vote_log)
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve_eval(SocketAddr::new(args.bind, args.port), &config))?;
        }
        Command::Synth(args) => {
            let opts = SynthOptions {
                images: args.images,
                height: args.size,
                width: args.size,
                seed: args.seed,
                n_resamples: args.resamples,
                ..SynthOptions::default()
            };
            let ds = generate(&args.out, &opts)?;
            println!("manifest -> {}", ds.manifest.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("FLOODBENCH_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            if e.downcast_ref::<ValidationError>().is_some() {
                eprint!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
