//! Command-line front end: load scenario files, run them deterministically,
//! emit traces and race reports, and cross-check the detector against the
//! happens-before oracle.
//!
//! Exit codes: 0 success (races alone are not failures), 1 usage error,
//! 2 unreadable or invalid scenario, 3 races found under `--fail-on-race`,
//! 4 detector/oracle divergence.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use dsmrace::oracle::{check_agreement, Agreement};
use dsmrace::sim::{run_configured, RunOptions, Scenario, Schedule, SimError, Trace};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_RACES: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "dsmrace",
    version,
    about = "Deterministic distributed-shared-memory simulator with vector-clock race detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, writing the trace and printing race reports.
    Run {
        /// Scenario file (TOML).
        path: PathBuf,
        /// Write the event trace to this file instead of standard output.
        #[arg(long, value_name = "PATH")]
        trace_out: Option<PathBuf>,
        /// Race report format on standard output.
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
        /// Exit 3 when at least one race is signaled.
        #[arg(long)]
        fail_on_race: bool,
        /// Also compare the detector against the happens-before oracle.
        #[arg(long)]
        oracle_check: bool,
        /// Replace the scenario's schedule with this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario and compare per-cell race sets against the oracle.
    Check {
        /// Scenario file (TOML).
        path: PathBuf,
        /// Repeat over this many seeded schedules instead of the scenario's own.
        #[arg(long, value_name = "K")]
        enumerate_schedules: Option<u64>,
        /// Base seed for seeded schedules.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path) -> Result<Scenario, u8> {
    dsmrace::load_scenario(path).map_err(|e| {
        eprintln!("dsmrace: {e}");
        EXIT_INVALID
    })
}

fn execute(scenario: &Scenario) -> Result<Trace, u8> {
    run_configured(scenario, RunOptions::default()).map_err(|e| {
        eprintln!("dsmrace: {e}");
        match e {
            SimError::Invalid(_) => EXIT_INVALID,
            _ => EXIT_INVALID,
        }
    })
}

fn print_divergence(agreement: &Agreement) {
    let (detector_only, oracle_only) = agreement.diff();
    for cell in detector_only {
        println!(r#"{{"cell":"{cell}","detector":true,"oracle":false}}"#);
    }
    for cell in oracle_only {
        println!(r#"{{"cell":"{cell}","detector":false,"oracle":true}}"#);
    }
}

fn cmd_run(
    path: PathBuf,
    trace_out: Option<PathBuf>,
    report: ReportFormat,
    fail_on_race: bool,
    oracle_check: bool,
    seed: Option<u64>,
) -> u8 {
    let mut scenario = match load(&path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(seed) = seed {
        scenario.schedule = Schedule::Seeded(seed);
    }
    let trace = match execute(&scenario) {
        Ok(t) => t,
        Err(code) => return code,
    };
    match &trace_out {
        Some(out) => {
            if let Err(e) = std::fs::write(out, trace.to_jsonl()) {
                eprintln!("dsmrace: cannot write {}: {e}", out.display());
                return EXIT_INVALID;
            }
        }
        None => print!("{}", trace.to_jsonl()),
    }
    for race in &trace.races {
        match report {
            ReportFormat::Text => println!("{race}"),
            ReportFormat::Json => {
                println!(
                    "{}",
                    serde_json::to_string(race).expect("report serializes")
                )
            }
        }
    }
    if oracle_check {
        match check_agreement(&trace) {
            Ok(agreement) if agreement.agreed() => {}
            Ok(agreement) => {
                print_divergence(&agreement);
                return EXIT_DIVERGENCE;
            }
            Err(e) => {
                eprintln!("dsmrace: {e}");
                return EXIT_INVALID;
            }
        }
    }
    if fail_on_race && !trace.races.is_empty() {
        return EXIT_RACES;
    }
    EXIT_OK
}

fn cmd_check(path: PathBuf, enumerate_schedules: Option<u64>, seed: Option<u64>) -> u8 {
    let scenario = match load(&path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let schedules: Vec<Schedule> = match enumerate_schedules {
        Some(k) => {
            let base = seed.unwrap_or(0);
            (0..k)
                .map(|i| Schedule::Seeded(base.wrapping_add(i)))
                .collect()
        }
        None => match seed {
            Some(s) => vec![Schedule::Seeded(s)],
            None => vec![scenario.schedule.clone()],
        },
    };
    for schedule in schedules {
        let mut instance = scenario.clone();
        let label = match &schedule {
            Schedule::Seeded(s) => format!("seed {s}"),
            Schedule::Explicit(_) => "explicit schedule".to_string(),
        };
        instance.schedule = schedule;
        let trace = match execute(&instance) {
            Ok(t) => t,
            Err(code) => return code,
        };
        let agreement = match check_agreement(&trace) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("dsmrace: {e}");
                return EXIT_INVALID;
            }
        };
        if !agreement.agreed() {
            println!("divergence under {label}:");
            print_divergence(&agreement);
            return EXIT_DIVERGENCE;
        }
        println!(
            "{label}: detector and oracle agree on {} racy cell(s)",
            agreement.detector.len()
        );
    }
    EXIT_OK
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run {
            path,
            trace_out,
            report,
            fail_on_race,
            oracle_check,
            seed,
        } => cmd_run(path, trace_out, report, fail_on_race, oracle_check, seed),
        Command::Check {
            path,
            enumerate_schedules,
            seed,
        } => cmd_check(path, enumerate_schedules, seed),
    };
    ExitCode::from(code)
}
