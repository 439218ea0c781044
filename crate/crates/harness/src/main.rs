use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use son_harness::config::ExperimentConfig;
use son_harness::experiment::{output_dir, run_experiment, Overrides, OUT_DIR_ENV};
use son_harness::sweep::run_sweep;
use son_harness::verify::{verify_suite, VerifyOptions};
use son_harness::{exit_code, EXIT_ERROR, EXIT_OK, EXIT_VERIFY_FAILED};

#[derive(Parser)]
#[command(name = "sonc", version, about = "Consensus on SO(n): experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; exit 0 converged, 3 iteration budget spent, 4 diverged.
    Run(RunArgs),
    /// Run every trial of a parameter sweep.
    Sweep(RunArgs),
    /// Run the invariant batteries and print a JSON report.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Negate the hull operator; the membership checks must then fail.
        #[arg(long)]
        flip_sign: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's, then $SONC_OUT_DIR.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Record per-iteration wall times in the CSV output.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
        let overrides = Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            max_iters: self.max_iters,
            alpha: self.alpha,
            record_wall_time: self.timing,
        };
        let cfg = ExperimentConfig::load_with(&self.config, |c| overrides.apply(c))?;
        let env_dir = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        let out = output_dir(&cfg, env_dir);
        Ok((cfg, out))
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = args.load()?;
            let report = run_experiment(&cfg, &out)?;
            let s = &report.summary;
            println!(
                "{}: {} after {} iterations, disagreement {:.3e}, relative gap {:.3e}",
                s.name, s.termination, s.iterations, s.final_disagreement, s.relative_objective_gap
            );
            println!("trace: {}\nsummary: {}", report.trace_path.display(), report.summary_path.display());
            Ok(exit_code(report.outcome.termination))
        }
        Command::Sweep(args) => {
            let (cfg, out) = args.load()?;
            let report = run_sweep(&cfg, &out)?;
            for s in &report.summary.stats {
                println!(
                    "{} = {}: median error {:.4e} (q1 {:.4e}, q3 {:.4e}), {} converged",
                    report.summary.parameter, s.param, s.error_median, s.error_q1, s.error_q3, s.converged
                );
            }
            println!("rows: {}\nsummary: {}", report.csv_path.display(), report.summary_path.display());
            Ok(EXIT_OK)
        }
        Command::Verify { seed, flip_sign } => {
            let report = verify_suite(VerifyOptions { seed, flip_sign });
            println!("{}", serde_json::to_string_pretty(&report).context("serializing report")?);
            Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
