//! Command-line front end: evaluate scenarios, run experiment sweeps to
//! CSV, validate configurations, list the built-in studies.
//!
//! Exit codes: 0 success, 1 configuration error, 2 degenerate geometry,
//! 3 numerical failure. Diagnostics go to stderr as one machine-parsable
//! line; results go to stdout or to the output file.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use locbound::experiments::StebUnits;
use locbound::scenario::{build_scenario, builtins, evaluate, load_scenario, sweep, Scenario};
use locbound::Error;

#[derive(Parser)]
#[command(name = "locbound", version, about = "Wideband localization error bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress informational notes on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file path or builtin name (see `list-builtins`).
    #[arg(long)]
    scenario: String,
    /// Dotted-path overrides, e.g. `--set priors.offset.xi=inf`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replace the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured scene: SPEB/SOEB/STEB and EFIM eigenvalues.
    Eval(ScenarioArgs),
    /// Run the configured experiment sweep and write a CSV table.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the scenario configuration without running anything.
    Validate(ScenarioArgs),
    /// Name the built-in studies.
    ListBuiltins,
}

fn error_kind(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Config(_) => ("config", 1),
        Error::InconsistentScenario(_) => ("inconsistent-scenario", 1),
        Error::InconsistentPrior(_) => ("inconsistent-prior", 1),
        Error::InvalidWaveform(_) => ("invalid-waveform", 1),
        Error::ModelParameter(_) => ("model-parameter", 1),
        Error::InvalidNoise(_) => ("invalid-noise", 1),
        Error::DegenerateGeometry(_) => ("degenerate-geometry", 2),
        Error::UnlocalizableGeometry { .. } => ("unlocalizable-geometry", 2),
        Error::SingularNuisance(_) => ("singular-nuisance", 3),
        Error::SingularPathOverlap(_) => ("singular-path-overlap", 3),
        Error::Numerical(_) => ("numerical", 3),
    }
}

fn fail(e: Error) -> ExitCode {
    let (kind, code) = error_kind(&e);
    eprintln!("error code={code} kind={kind} msg=\"{e}\"");
    ExitCode::from(code)
}

fn parse_overrides(args: &ScenarioArgs) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::with_capacity(args.set.len() + 1);
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(Error::Config(format!(
                "override {kv:?} is not of the form key=value"
            )));
        };
        out.push((k.to_string(), v.to_string()));
    }
    if let Some(seed) = args.seed {
        out.push(("seed".to_string(), seed.to_string()));
    }
    Ok(out)
}

fn build(args: &ScenarioArgs) -> Result<Scenario, Error> {
    let overrides = parse_overrides(args)?;
    let config = load_scenario(&args.scenario, &overrides)?;
    build_scenario(&config)
}

fn run_eval(args: &ScenarioArgs) -> Result<(), Error> {
    let scenario = build(args)?;
    let report = evaluate(&scenario)?;
    println!("speb_m2={}", report.speb_m2);
    if let Some(soeb) = report.soeb_rad2 {
        println!("soeb_rad2={soeb}");
    }
    if let Some((steb, units)) = report.steb {
        match units {
            StebUnits::MetersSquared => println!("steb_m2={steb}"),
            StebUnits::SecondsSquared => println!("steb_s2={steb}"),
        }
    }
    let eigs: Vec<String> = report
        .efim_eigenvalues
        .iter()
        .map(|v| format!("{v}"))
        .collect();
    println!("efim_eigenvalues={}", eigs.join(";"));
    Ok(())
}

fn run_sweep(args: &ScenarioArgs, out: Option<&PathBuf>, quiet: bool) -> Result<(), Error> {
    let scenario = build(args)?;
    let table = sweep(&scenario)?;
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| Error::Config(format!("cannot create {path:?}: {e}")))?;
            table.write_csv(std::io::BufWriter::new(file))?;
            if !quiet {
                eprintln!(
                    "note: wrote {} rows x {} columns to {}",
                    table.rows.len(),
                    table.columns.len(),
                    path.display()
                );
            }
        }
        None => {
            let stdout = std::io::stdout();
            table.write_csv(stdout.lock())?;
        }
    }
    if table.has_errors() && !quiet {
        eprintln!("note: some cells carry ERROR(...) markers");
    }
    Ok(())
}

fn run_validate(args: &ScenarioArgs) -> Result<(), Error> {
    let scenario = build(args)?;
    // Building performs the full validation; sweeps and evaluations are
    // deliberately not run here.
    let mut sections = Vec::new();
    if scenario.topology.is_some() {
        sections.push("topology");
    }
    sections.push("waveform");
    if scenario.channel.is_some() {
        sections.push("channel");
    }
    if scenario.array.is_some() {
        sections.push("array");
    }
    if scenario.offset.is_some() {
        sections.push("offset");
    }
    if scenario.experiment.is_some() {
        sections.push("experiment");
    }
    println!("ok sections={}", sections.join(","));
    Ok(())
}

fn run_list() -> Result<(), Error> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for b in builtins() {
        writeln!(out, "{}\t{}", b.name, b.description)
            .map_err(|e| Error::Config(format!("stdout: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Eval(args) => run_eval(args),
        Command::Sweep { scenario, out } => run_sweep(scenario, out.as_ref(), cli.quiet),
        Command::Validate(args) => run_validate(args),
        Command::ListBuiltins => run_list(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
