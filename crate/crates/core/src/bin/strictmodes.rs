//! Command-line front end: every subcommand runs one scenario experiment.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use strictmodes::scenario::{builtin_source, list_scenarios, run, Experiment, Scenario};
use strictmodes::{Error, Result};

#[derive(Parser)]
#[command(name = "strictmodes", version, about = "Nonlinear normal modes and strict-mode design on Riemannian manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the scenario's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Relative energy drift bound; 0 disables the check.
    #[arg(long = "tol-energy", global = true)]
    tol_energy: Option<f64>,
    /// Integrator time step.
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate trajectories.
    Simulate,
    /// Shoot a geodesic.
    Geodesic,
    /// Linearized modes at the equilibrium.
    Linearize,
    /// Nonlinear mode search and strict-mode verification.
    #[command(subcommand)]
    Modes(ModesCommand),
    /// Build and certify a designed potential.
    Design,
    /// Velocity-scaling test of a curve.
    Invariance,
    /// List built-in scenarios.
    Scenarios {
        /// Print the TOML of one scenario.
        #[arg(long)]
        show: Option<String>,
    },
    /// Run a scenario file or a built-in scenario.
    Run {
        /// Built-in scenario id.
        #[arg(long)]
        scenario: Option<String>,
    },
}

#[derive(Subcommand)]
enum ModesCommand {
    /// Search modes on equipotential lines.
    Find,
    /// Check a curve against the strict-mode conditions.
    Verify,
}

fn load(common: &Common, builtin: Option<&str>, experiment: Option<Experiment>) -> Result<Scenario> {
    let mut sc = match (&common.config, builtin) {
        (Some(_), Some(_)) => return Err(Error::Config("give either --config or --scenario".into())),
        (Some(p), None) => Scenario::from_file(p)?,
        (None, Some(id)) => Scenario::builtin(id)?,
        (None, None) if experiment.is_some() => Scenario::default(),
        (None, None) => return Err(Error::Config("run needs --config or --scenario".into())),
    };
    if let Some(exp) = experiment {
        match sc.experiment {
            None => sc.experiment = Some(exp),
            Some(e) if e != exp => {
                return Err(Error::Config(format!(
                    "scenario declares experiment `{}` but the subcommand is `{}`",
                    e.as_str(),
                    exp.as_str()
                )))
            }
            Some(_) => {}
        }
    }
    if let Some(out) = &common.out {
        sc.output = out.clone();
    }
    if let Some(dt) = common.dt {
        sc.integrator.dt = dt;
    }
    if let Some(tol) = common.tol_energy {
        sc.integrator.energy_tol = tol;
    }
    Ok(sc)
}

fn execute(sc: &Scenario, jobs: Option<usize>) -> Result<i32> {
    let started = Instant::now();
    let outcome = run(sc, jobs)?;
    let dir = sc.output_dir();
    outcome.write(dir)?;
    for b in &outcome.breaches {
        eprintln!("breach: {b}");
    }
    println!(
        "{}: {} files in {} ({:.2} s)",
        sc.experiment.map_or("run", |e| e.as_str()),
        outcome.files.len(),
        dir.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (builtin, experiment) = match &cli.command {
        Command::Scenarios { show } => {
            match show {
                Some(id) => match builtin_source(id) {
                    Some(src) => print!("{src}"),
                    None => {
                        eprintln!("error: unknown scenario `{id}`");
                        return ExitCode::from(2);
                    }
                },
                None => {
                    for (id, desc) in list_scenarios() {
                        println!("{id:<12} {desc}");
                    }
                }
            }
            return ExitCode::SUCCESS;
        }
        Command::Run { scenario } => (scenario.as_deref(), None),
        Command::Simulate => (None, Some(Experiment::Simulate)),
        Command::Geodesic => (None, Some(Experiment::Geodesic)),
        Command::Linearize => (None, Some(Experiment::Linearize)),
        Command::Modes(ModesCommand::Find) => (None, Some(Experiment::ModesFind)),
        Command::Modes(ModesCommand::Verify) => (None, Some(Experiment::ModesVerify)),
        Command::Design => (None, Some(Experiment::Design)),
        Command::Invariance => (None, Some(Experiment::Invariance)),
    };
    let result = load(&cli.common, builtin, experiment).and_then(|sc| execute(&sc, cli.common.jobs));
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
