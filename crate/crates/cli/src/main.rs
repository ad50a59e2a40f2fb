use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scorpion_core::harness::{self, phase_end_distances};
use scorpion_core::logs::write_trajectory;
use scorpion_core::tinynet::check_random_mlp;
use scorpion_core::{Checkpoint, Error, EvalConfig, RunConfig, Scenario};

/// Largest relative gradient error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "scorpion", about = "Train and evaluate the scorpion waypoint controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics and checkpoints to the output directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; falls back to `out_dir` from the config file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `ppo.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Suppresses per-iteration progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Roll out the policy mean under a waypoint schedule.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Count converged runs from random starting poses.
    FailureRate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 25)]
        runs: usize,
        #[arg(long, default_value_t = 10.0)]
        margin: f64,
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Compare backpropagated gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        nets: usize,
        /// Parameters probed per network; all of them by default.
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the version.
    Version,
}

#[derive(clap::Args)]
struct ConfigSource {
    /// Run configuration providing the environment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Refuse checkpoints trained under a different configuration.
    #[arg(long, requires = "config")]
    strict: bool,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            out,
            seed,
            quiet,
        } => train(config.as_deref(), out, seed, quiet),
        Command::Eval {
            checkpoint,
            scenario,
            out,
            seed,
            source,
        } => eval(&checkpoint, &scenario, &out, seed, &source),
        Command::FailureRate {
            checkpoint,
            runs,
            margin,
            horizon,
            seed,
            workers,
            out,
            source,
        } => {
            let eval = EvalConfig {
                runs,
                margin,
                horizon,
                seed,
                ..EvalConfig::default()
            };
            failure_rate(&checkpoint, eval, workers, &out, &source)
        }
        Command::Gradcheck {
            nets,
            probes,
            step,
            seed,
        } => gradcheck(nets, probes.unwrap_or(usize::MAX), step, seed),
        Command::Version => {
            println!("scorpion {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Validation(format!("out: cannot create {}: {e}", dir.display())))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn train(config: Option<&Path>, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> CmdResult {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.ppo.seed = seed;
    }
    let out = out
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Failure::Validation("out: no output directory given".into()))?;
    create_dir(&out)?;
    let outcome = harness::train(&cfg, &out, |m| {
        if !quiet {
            eprintln!(
                "iter {:5}  return {:9.3}  policy_loss {:9.4}  value_loss {:9.4}  entropy {:7.3}",
                m.iter, m.mean_return, m.policy_loss, m.value_loss, m.entropy
            );
        }
    })?;
    println!("final checkpoint: {}", outcome.final_checkpoint.display());
    Ok(())
}

fn load_checkpoint(path: &Path, source: &ConfigSource) -> Result<(Checkpoint, RunConfig), Failure> {
    let cfg = load_config(source.config.as_deref())?;
    let ckpt = if source.strict {
        Checkpoint::load_strict(path, &cfg.digest())?
    } else {
        Checkpoint::load(path)?
    };
    Ok((ckpt, cfg))
}

fn eval(checkpoint: &Path, scenario: &Path, out: &Path, seed: u64, source: &ConfigSource) -> CmdResult {
    let (ckpt, cfg) = load_checkpoint(checkpoint, source)?;
    let scenario = Scenario::load(scenario)?;
    create_dir(out)?;
    let rows = harness::eval_deterministic(&ckpt.policy, &cfg.env, &scenario, seed)?;
    let path = out.join("trajectory.csv");
    write_trajectory(&path, &rows)?;
    for ((start, end), d) in scenario.phases().iter().zip(phase_end_distances(&rows, &scenario)) {
        println!("phase steps {start}..{end}: final distance {d:.3}");
    }
    println!("trajectory: {}", path.display());
    Ok(())
}

fn failure_rate(
    checkpoint: &Path,
    eval: EvalConfig,
    workers: usize,
    out: &Path,
    source: &ConfigSource,
) -> CmdResult {
    let (ckpt, cfg) = load_checkpoint(checkpoint, source)?;
    create_dir(out)?;
    let report = harness::failure_rate(&ckpt.policy, &cfg.env, &eval, Some(out), workers.max(1))?;
    let path = out.join("report.json");
    report.write_json(&path)?;
    println!(
        "converged {}/{} (margin {})",
        report.n_converged, report.n_runs, report.convergence_margin
    );
    match report.mean_final_distance_converged {
        Some(d) => println!("mean final distance over converged runs: {d:.3}"),
        None => println!("mean final distance over converged runs: n/a"),
    }
    println!("report: {}", path.display());
    Ok(())
}

fn gradcheck(nets: usize, probes: usize, h: f64, seed: u64) -> CmdResult {
    if !(h > 0.0) {
        return Err(Failure::Validation("step: must be > 0".into()));
    }
    let mut worst: f64 = 0.0;
    let mut all_pass = true;
    for i in 0..nets {
        let k = if i % 2 == 0 { 1 } else { 3 };
        let sizes = [5, 128, 64, k];
        let report = check_random_mlp(&sizes, seed.wrapping_add(i as u64), probes, h)?;
        println!(
            "net {i} {sizes:?}: max relative error {:.3e} over {} parameters",
            report.max_rel_error, report.probes
        );
        all_pass &= report.max_rel_error < GRADCHECK_TOLERANCE;
        if report.max_rel_error.is_nan() || report.max_rel_error > worst {
            worst = report.max_rel_error;
        }
    }
    println!("max relative error {worst:.3e}");
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "max relative error {worst:.3e} is not below {GRADCHECK_TOLERANCE:e}"
        )))
    }
}
