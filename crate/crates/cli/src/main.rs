use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gbd_mpc::bench::{run_suite, SolverRegistry, SuiteConfig};
use gbd_mpc::cuts::CutStore;

#[derive(Parser)]
#[command(name = "gbd-mpc", version, about = "Cart-pole hybrid MPC benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the episode × solver matrix described by a config file.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Run only this solver instead of the configured list.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Write the final warm-start cut store here.
    #[arg(long)]
    save_store: Option<PathBuf>,
    /// Start warm-start solvers from this cut store.
    #[arg(long)]
    load_store: Option<PathBuf>,
}

fn run(args: RunArgs) -> gbd_mpc::Result<ExitCode> {
    let mut cfg = SuiteConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.solver {
        cfg.solvers = vec![s];
    }
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    if let Some(n) = args.steps {
        cfg.steps = n;
    }
    let store = args.load_store.as_deref().map(CutStore::load).transpose()?;
    let outcome = run_suite(&cfg, &args.out, &SolverRegistry::default(), store)?;
    if let Some(path) = &args.save_store {
        match &outcome.store {
            Some(s) => s.save(path)?,
            None => log::warn!("no solver kept a cut store; nothing saved to {}", path.display()),
        }
    }
    for (name, s) in &outcome.summary.solvers {
        println!(
            "{name}: {} episodes ({} infeasible), mean iterations {:.2}, contact steps within 5 iterations {:.1}%",
            s.episodes_run,
            s.episodes_infeasible,
            s.mean_iterations,
            100.0 * s.contact_within_5
        );
    }
    if outcome.budget_exceeded() {
        eprintln!(
            "{} failed solves exceed the budget of {}",
            outcome.failures, cfg.failure_budget
        );
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Run(args) = Cli::parse().command;
    match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
