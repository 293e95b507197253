//! `needleguide`: run the server, generate recordings, calibrate offline,
//! replay sessions and report accuracy and latency.

mod calibrate;
mod io;
mod replay;
mod report;

use clap::{Parser, Subcommand};
use needleguide_core::offline::Routine;
use needleguide_core::simulator::{Scenario, SCENARIO_NAMES};
use std::path::PathBuf;
use std::process::ExitCode;

const SYNOPSIS: &str = "\
usage: needleguide serve [--config <file>] [key=value ...]
       needleguide simulate --scenario <name> [--noise-sigma <mm>] [--noise-deg <deg>] [--seed <n>]
                            [--samples <n>] [--rate <hz>] [--out <recording>] [--truth-out <file>]
       needleguide calibrate --routine sphere|circle|tip|axis|handeye|usplane --input <recording>
                             [--truth <file>] [--pixel-spacing <mm>] [--json]
       needleguide replay --input <recording> [--rate <x>] [--config <file>] [--out <file>]
       needleguide report --input <recording> [--truth <file>] [--pixel-spacing <mm>] [--config <file>] [--json]";

#[derive(Debug, Parser)]
#[command(name = "needleguide", version, about = "Tracked needle guidance middleware")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the streaming server until interrupted.
    Serve {
        /// TOML config file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Config overrides as key=value, e.g. scenario=static speed=0.
        #[arg(value_parser = parse_override)]
        overrides: Vec<(String, String)>,
    },
    /// Generate a recording from a built-in scenario.
    Simulate {
        #[arg(long, value_parser = parse_scenario)]
        scenario: String,
        /// Position noise standard deviation, millimetres.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        /// Orientation noise standard deviation, degrees.
        #[arg(long, default_value_t = 0.0)]
        noise_deg: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample, motion, pair or frame count, depending on the scenario.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = needleguide_core::simulator::DEFAULT_RATE_HZ)]
        rate: f64,
        /// Recording path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ground-truth path; defaults to <out stem>.truth.jsonl beside the
        /// recording, and is skipped when the recording goes to stdout.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Run one calibration routine over a recording.
    Calibrate {
        #[arg(long, value_parser = parse_routine)]
        routine: Routine,
        #[arg(long)]
        input: PathBuf,
        /// Ground truth to score against; truth lines in the input are used
        /// when omitted.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Known ultrasound pixel spacing in millimetres; estimated otherwise.
        #[arg(long)]
        pixel_spacing: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Feed a recording through a session and print what it would broadcast.
    Replay {
        #[arg(long)]
        input: PathBuf,
        /// Playback speed relative to recorded time; 0 runs unpaced.
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        /// Server config for session settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibration errors against truth, guidance latency and frame counts.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        pixel_spacing: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected key=value, got {s:?}")),
    }
}

fn parse_scenario(s: &str) -> Result<String, String> {
    match Scenario::by_name(s, None) {
        Some(_) => Ok(s.to_string()),
        None => Err(format!("unknown scenario {s:?}; known: {}, insertion-scripted", SCENARIO_NAMES.join(", "))),
    }
}

fn parse_routine(s: &str) -> Result<Routine, String> {
    Routine::from_name(s).ok_or_else(|| format!("unknown routine {s:?}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", e.render().to_string().trim_end());
            eprintln!("\n{SYNOPSIS}");
            return ExitCode::from(1);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,needleguide_server=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let json = matches!(&cli.command, Command::Calibrate { json: true, .. } | Command::Report { json: true, .. });
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<report::Reported>() => ExitCode::from(2),
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            if json {
                println!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Serve { config, overrides } => serve(config, overrides),
        Command::Simulate { scenario, noise_sigma, noise_deg, seed, samples, rate, out, truth_out } => {
            io::simulate(&io::SimulateArgs { scenario, noise_sigma, noise_deg, seed, samples, rate, out, truth_out })
        }
        Command::Calibrate { routine, input, truth, pixel_spacing, json } => {
            calibrate::run(routine, &input, truth.as_deref(), pixel_spacing, json)
        }
        Command::Replay { input, rate, config, out } => replay::run(&input, rate, config.as_deref(), out.as_deref()),
        Command::Report { input, truth, pixel_spacing, config, json } => {
            report::run(&input, truth.as_deref(), pixel_spacing, config.as_deref(), json)
        }
    }
}

fn serve(config: Option<PathBuf>, overrides: Vec<(String, String)>) -> anyhow::Result<()> {
    let config = match config {
        Some(path) => needleguide_server::load_config(&path, &overrides)?,
        None => needleguide_server::parse_config("", &overrides)?,
    };
    let rt = tokio::runtime::Runtime::new()?;
    let stats = rt.block_on(needleguide_server::run(config))?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}
