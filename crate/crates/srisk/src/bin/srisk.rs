//! Shortfall-risk experiment CLI.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numeric
//! errors. `SRISK_THREADS` caps the replication worker count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use srisk::config::Config;
use srisk::studies::{
    run_estimate_study, run_grad_check, run_optimize_study, run_rate_check, RunSpec,
};

#[derive(Parser)]
#[command(name = "srisk", version, about = "Shortfall-risk estimation and optimization studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimation error distribution over an m-grid against the closed-form oracle.
    Estimate(StudyArgs),
    /// MSE-rate fit of the estimator over an m-grid.
    RateCheck(StudyArgs),
    /// Gradient-error replication study at a fixed allocation.
    GradCheck(StudyArgs),
    /// Projected stochastic gradient runs over many seeds.
    Optimize(StudyArgs),
}

#[derive(clap::Args)]
struct StudyArgs {
    /// Path to the flat `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV results.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; all replication streams derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of replications (or seeds, for optimize).
    #[arg(long)]
    reps: Option<usize>,
}

fn build_spec(args: &StudyArgs, default_reps: usize) -> srisk::Result<RunSpec> {
    let config = Config::load(&args.config)?;
    let reps = match args.reps {
        Some(r) => r,
        None => config.get_usize_or("reps", default_reps)?,
    };
    if reps == 0 {
        return Err(srisk::Error::Config {
            line: 0,
            msg: "reps must be >= 1".into(),
        });
    }
    Ok(RunSpec {
        config,
        out_dir: args.out.clone(),
        seed: args.seed,
        reps,
    })
}

fn run(cli: Cli) -> srisk::Result<()> {
    if let Ok(threads) = std::env::var("SRISK_THREADS") {
        let n: usize = threads.parse().map_err(|_| srisk::Error::Config {
            line: 0,
            msg: format!("SRISK_THREADS: not an integer: `{threads}`"),
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Estimate(args) => {
            let spec = build_spec(&args, 1000)?;
            let stats = run_estimate_study(&spec)?;
            for s in &stats {
                println!(
                    "m={:<8} mean_err={:+.6} mse={:.6e} iqr=[{:+.4}, {:+.4}]",
                    s.m, s.mean_err, s.mse, s.q25, s.q75
                );
            }
        }
        Command::RateCheck(args) => {
            let spec = build_spec(&args, 1000)?;
            let (stats, fit) = run_rate_check(&spec)?;
            for s in &stats {
                println!("m={:<8} mse={:.6e} mse*m={:.6e}", s.m, s.mse, s.mse_times_m);
            }
            println!(
                "slope={:.4} implied_constant={:.4e}{}",
                fit.slope,
                fit.implied_constant,
                fit.theoretical_constant
                    .map(|c| format!(" theoretical_constant={c:.4e}"))
                    .unwrap_or_default()
            );
        }
        Command::GradCheck(args) => {
            let spec = build_spec(&args, 500)?;
            let (stats, fit) = run_grad_check(&spec)?;
            for s in &stats {
                println!("m={:<8} mse={:.6e}", s.m, s.mse);
            }
            println!("slope={:.4}", fit.slope);
        }
        Command::Optimize(args) => {
            let spec = build_spec(&args, 20)?;
            let summary = run_optimize_study(&spec)?;
            let ts: Vec<String> = summary.theta_star.iter().map(|v| format!("{v:.6}")).collect();
            println!("theta_star = ({})", ts.join(", "));
            for warning in summary.traces.iter().flat_map(|t| &t.warnings) {
                eprintln!("warning: {warning}");
            }
            if let Some((k, d2, gap)) = summary.envelope.last() {
                println!("n={k} median_dist_sq={d2:.6e} median_h_gap={gap:.6e}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
