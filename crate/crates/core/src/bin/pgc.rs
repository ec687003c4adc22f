use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pgc_core::cli::{self, Overrides, RunOptions, TaskKind};

#[derive(Parser)]
#[command(name = "pgc", version, about = "Polarization-gradient cooling simulations from scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-equation cooling and heating rates over a grid.
    Semiclassical(RunArgs),
    /// Master-equation runs: rate extraction or moving gradient.
    Lindblad(RunArgs),
    /// Crystal equilibrium, normal modes and Lamb-Dicke matrix.
    Crystal(RunArgs),
    /// Carrier Rabi thermometry of ion crystals.
    #[command(subcommand)]
    Thermometry(Thermometry),
    /// List the bundled scenarios.
    Scenarios {
        /// Also write the scenario files into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Thermometry {
    /// Synthetic carrier traces from an occupation model.
    Simulate(RunArgs),
    /// Fit the occupation model to carrier traces.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Objective evaluations for DIRECT.
        #[arg(long)]
        budget: Option<usize>,
        /// Stop once the largest candidate rectangle is smaller than this.
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    scenario: String,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, env = "PGC_JOBS")]
    jobs: Option<usize>,
}

fn execute(task: TaskKind, args: RunArgs, overrides: Overrides) -> Result<(), pgc_core::Error> {
    let opts = RunOptions { out: args.out, jobs: args.jobs, overrides };
    let report = cli::run(task, &args.scenario, &opts)?;
    println!("{}: wrote {} files to {} in {:.1} s", task, report.files.len(), report.out_dir.display(), report.wall_seconds);
    Ok(())
}

fn list(export: Option<PathBuf>) -> Result<(), pgc_core::Error> {
    let entries = cli::catalog();
    let width = entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in &entries {
        println!("{:width$}  {:>7}  {}", e.name, e.budget, e.description);
    }
    if let Some(dir) = export {
        std::fs::create_dir_all(&dir)?;
        for e in &entries {
            std::fs::write(dir.join(format!("{}.toml", e.name)), e.source)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Semiclassical(a) => execute(TaskKind::Semiclassical, a, Overrides::default()),
        Command::Lindblad(a) => execute(TaskKind::Lindblad, a, Overrides::default()),
        Command::Crystal(a) => execute(TaskKind::Crystal, a, Overrides::default()),
        Command::Thermometry(Thermometry::Simulate(a)) => execute(TaskKind::ThermometrySimulate, a, Overrides::default()),
        Command::Thermometry(Thermometry::Fit { run, budget, tol }) => execute(TaskKind::ThermometryFit, run, Overrides { budget, tol }),
        Command::Scenarios { export } => list(export),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pgc: {e}");
            ExitCode::FAILURE
        }
    }
}
