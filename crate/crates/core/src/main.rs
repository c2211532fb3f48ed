use clap::{Parser, Subcommand};
use spillover::io::{run_workflow, RunConfig, Workflow};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "spillover", version, about = "Demand with adoption spillovers: estimation and welfare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from the model in [model] and [simulate].
    Simulate(Args),
    /// Fit the demand model.
    Estimate(Args),
    /// Equilibria and welfare of a means-tested subsidy.
    Policy(Args),
    /// Heterogeneous-belief convergence study.
    Convergence(Args),
    /// Welfare over several eligibility shares.
    ComparativeStatics(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the result bundle.
    #[arg(long, default_value = "out")]
    output: PathBuf,
    /// Overrides the configured household CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sets the interaction to zero.
    #[arg(long)]
    no_spillover: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (workflow, args) = match cli.command {
        Command::Simulate(a) => (Workflow::Simulate, a),
        Command::Estimate(a) => (Workflow::Estimate, a),
        Command::Policy(a) => (Workflow::Policy, a),
        Command::Convergence(a) => (Workflow::Convergence, a),
        Command::ComparativeStatics(a) => (Workflow::ComparativeStatics, a),
    };
    if let Some(n) = std::env::var("SPILLOVER_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(workflow, &args) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(workflow: Workflow, args: &Args) -> spillover::Result<PathBuf> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    cfg.no_spillover |= args.no_spillover;
    let bundle = run_workflow(&cfg, workflow)?;
    bundle.write(&args.output)?;
    Ok(args.output.clone())
}
