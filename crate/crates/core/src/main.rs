use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rushsim::harness::{self, AttackSelection, ExperimentConfig, Overrides, Sweep};
use rushsim::Placement;

#[derive(Parser)]
#[command(name = "rushsim", version, about = "Mesh multicast attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-run metrics as CSV.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named sweep: fig7, fig8, fig9 or paper-fig-7-9.
    #[arg(long)]
    preset: Option<String>,
    /// CSV output path.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    placement: Option<Placement>,
    #[arg(long)]
    attack: Option<AttackSelection>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Write the event log of run 0 to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    let overrides = Overrides {
        seed: args.seed,
        runs: args.runs,
        placement: args.placement,
        attack: args.attack,
        speed: args.speed,
        nodes: args.nodes,
    };
    let sweep = ExperimentConfig::load(args.config.as_deref(), &overrides).and_then(|cfg| match &args.preset {
        Some(name) => Sweep::preset(name, &cfg),
        None => Ok(Sweep::single(cfg)),
    });
    let sweep = match sweep {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    for (i, point) in sweep.points.iter().enumerate() {
        println!("# point {i}\n{}", point.echo().lines().map(|l| format!("#   {l}")).collect::<Vec<_>>().join("\n"));
    }

    if let Some(path) = &args.trace {
        let result = harness::run_single(&sweep.points[0], 0, true)
            .map_err(anyhow::Error::from)
            .and_then(|(_, trace)| {
                let log = trace.event_log.unwrap_or_default().join("\n");
                std::fs::write(path, log + "\n")?;
                Ok(())
            });
        if let Err(e) = result {
            eprintln!("trace failed: {e}");
            return ExitCode::from(2);
        }
    }

    match sweep.run() {
        Ok(rows) => {
            if let Err(e) = harness::emit_csv(&rows, &args.out) {
                eprintln!("cannot write {}: {e}", args.out.display());
                return ExitCode::from(2);
            }
            print!("{}", harness::summary(&rows));
            println!("# wrote {} rows to {}", rows.len(), args.out.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("{failure}");
            if !failure.completed.is_empty() {
                let partial = args.out.with_extension("partial.csv");
                if harness::emit_csv(&failure.completed, &partial).is_ok() {
                    eprintln!("partial results ({} rows) in {}", failure.completed.len(), partial.display());
                }
            }
            ExitCode::from(2)
        }
    }
}
