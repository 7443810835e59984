use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bfn_core::harness::{output_root, run_command, Command, ExperimentConfig};
use bfn_core::BfnError;

#[derive(Parser)]
#[command(name = "bfn-lab", version, about = "Bayesian flow network samplers: checks, training, sampling and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the invariant suite and print a pass/fail table.
    Verify(Common),
    /// Train a ToyMLP and persist its weights.
    Train(Common),
    /// Draw samples and score them.
    Sample(Common),
    /// Error-vs-NFE sweep with fitted slopes and a log-log plot.
    Converge(Common),
    /// Paired runs with and without the categorical step.
    AblateCs(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; BFN_LAB_JOBS takes precedence.
    #[arg(long)]
    jobs: Option<usize>,
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>, String> {
    match std::env::var("BFN_LAB_JOBS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| format!("BFN_LAB_JOBS must be a positive integer, got '{v}'")),
        Err(_) => Ok(flag),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Sample(c) => (Command::Sample, c),
        Cmd::Converge(c) => (Command::Converge, c),
        Cmd::AblateCs(c) => (Command::AblateCs, c),
    };

    match jobs(common.jobs) {
        Ok(Some(0)) | Err(_) => {
            eprintln!("error: --jobs / BFN_LAB_JOBS must be a positive integer");
            return ExitCode::from(2);
        }
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
    }

    let mut cfg = match ExperimentConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = common.seed {
        cfg.experiment.seeds = vec![s];
    }
    let out = output_root(&cfg, common.out.as_deref());

    match run_command(cmd, &cfg, &out) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e @ BfnError::Config(_)) | Err(e @ BfnError::Argument(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
