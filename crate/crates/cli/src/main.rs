use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use qnet::scenario::ExampleKind;
use qnet::{Scenario, SimConfig, Simulation, ValidationError};

#[derive(Parser)]
#[command(name = "qnet", version, about = "Entanglement-based network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and report every problem found.
    Validate { path: PathBuf },
    /// Run a scenario to quiescence.
    Run {
        path: PathBuf,
        /// Replace the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the NDJSON trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write run statistics as JSON here.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Suppress the summary on stdout.
        #[arg(long)]
        quiet: bool,
    },
    /// Print a ready-to-run example scenario.
    Example { kind: Kind },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    SameQbs,
    CrossQbs,
    Interplanet,
}

impl From<Kind> for ExampleKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::SameQbs => ExampleKind::SameQbs,
            Kind::CrossQbs => ExampleKind::CrossQbs,
            Kind::Interplanet => ExampleKind::Interplanet,
        }
    }
}

enum Failure {
    Io(anyhow::Error),
    Invalid(ValidationError),
}

impl From<ValidationError> for Failure {
    fn from(e: ValidationError) -> Self {
        Failure::Invalid(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::parse(&text)?;
    scenario.validate(SimConfig::default().max_payload_bytes)?;
    Ok(scenario)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    f(&mut out)
        .and_then(|_| out.flush())
        .with_context(|| format!("writing {}", path.display()))
}

fn validate(path: &Path) -> Result<(), Failure> {
    let s = load(path)?;
    let users: usize = s
        .planets
        .iter()
        .flat_map(|p| &p.children)
        .map(|c| c.users.len())
        .sum();
    println!(
        "ok: {} planet(s), {} user(s), {} workload item(s)",
        s.planets.len(),
        users,
        s.workload.len()
    );
    Ok(())
}

fn run(path: &Path, seed: Option<u64>, trace: Option<&Path>, stats: Option<&Path>, quiet: bool) -> Result<(), Failure> {
    let scenario = load(path)?;
    let config = SimConfig::with_seed(seed.unwrap_or(scenario.seed));
    let mut sim = Simulation::from_scenario(&scenario, config)?;
    sim.run_until_idle().context("simulation aborted")?;

    if let Some(p) = trace {
        write_file(p, |out| sim.write_trace(out))?;
    }
    let st = sim.stats();
    if let Some(p) = stats {
        write_file(p, |out| {
            serde_json::to_writer_pretty(&mut *out, &st)?;
            out.write_all(b"\n")
        })?;
    }
    if !quiet {
        println!(
            "sessions: {} requested, {} established, {} failed ({} not found, {} rejected)",
            st.sessions.requested,
            st.sessions.established,
            st.sessions.failed,
            st.sessions.failed_not_found,
            st.sessions.failed_rejected
        );
        println!("records: {}", sim.trace().len());
        println!("final tick: {}", st.final_tick);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { path } => validate(&path),
        Command::Run {
            path,
            seed,
            trace,
            stats,
            quiet,
        } => run(&path, seed, trace.as_deref(), stats.as_deref(), quiet),
        Command::Example { kind } => {
            print!("{}", Scenario::example(kind.into()).to_json_pretty());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("invalid scenario:\n{e}");
            ExitCode::from(2)
        }
    }
}
