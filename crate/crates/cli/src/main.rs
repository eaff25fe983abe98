use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nlscanon::experiments::{run, ExperimentConfig, ExperimentId};

#[derive(Parser)]
#[command(name = "nlscanon", version, about = "Canonical coordinates near finite-gap NLS tori: numerical checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in a JSON config and write report.json and rows.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to NLSCANON_THREADS, then to the rayon default.
        #[arg(long, env = "NLSCANON_THREADS")]
        threads: Option<usize>,
    },
    /// Print the experiment ids.
    ListExperiments,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for id in ExperimentId::ALL {
                println!("{:<14} {}", id.as_str(), id.description());
            }
            Ok(true)
        }
        Command::Run { config, out, seed, threads } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                anyhow::ensure!(n > 0, "--threads must be positive");
                pool = pool.num_threads(n);
            }
            let pool = pool.build().context("building the thread pool")?;
            let report = pool.install(|| run(&cfg))?;
            report.write(&out).with_context(|| format!("writing to {}", out.display()))?;
            for r in report.rows.iter().filter(|r| !r.pass) {
                eprintln!("FAIL {} {} = {:e} (tolerance {:e}) {}", r.backend, r.quantity, r.value, r.tolerance, r.diagnostics);
            }
            println!("{}: {} passed, {} failed", report.experiment, report.passed, report.failed);
            Ok(report.all_pass())
        }
    }
}
