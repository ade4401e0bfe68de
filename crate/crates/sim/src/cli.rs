use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use rapu_core::harness::{emit_report, Replay, Report};
use rapu_core::sensors::{ingest_scenario, Scenario};
use rapu_core::{Config, Millis};
use serde_json::Value;
use thiserror::Error;
use tracing::info;
use tracing_subscriber::EnvFilter;

use crate::bridge;

pub const LOG_ENV: &str = "RAPU_LOG";

#[derive(Debug, Parser)]
#[command(name = "rapu-sim", version, about = "Driver-vigilance unit simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a scenario and write its JSON Lines report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Report destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Echoed into the report summary.
        #[arg(long)]
        seed: Option<u64>,
        /// Override one config key, e.g. `--set escape_window_ms=5000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Serve live sessions to the cockpit over WebSocket at `/session`.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        listen: SocketAddr,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check that a scenario file parses.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad scenario, config or arguments: exit code 1.
    #[error("{0}")]
    Input(String),
    /// Anything else: exit code 2.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(1),
            CliError::Internal(_) => ExitCode::from(2),
        }
    }
}

fn read(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{what} {}: {e}", path.display())))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = read(path, "scenario")?;
    ingest_scenario(&text).map_err(|e| CliError::Input(format!("scenario {}: {e}", path.display())))
}

/// Reads the config file and applies `KEY=VALUE` overrides; values parse as
/// JSON and fall back to plain strings.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<Config, CliError> {
    let text = read(path, "config")?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
    let obj = value.as_object_mut().ok_or_else(|| {
        CliError::Input(format!("config {}: expected a JSON object", path.display()))
    })?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("override {item:?} is not KEY=VALUE")))?;
        let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        obj.insert(key.to_string(), v);
    }
    Config::from_json(&value.to_string()).map_err(|e| CliError::Input(e.to_string()))
}

/// Replays `scenario`; with `config.realtime` each poll waits for its wall-clock instant.
pub fn replay(config: &Config, scenario: Scenario, seed: Option<u64>) -> Result<Report, CliError> {
    config
        .validate()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut replay = Replay::new(config.clone(), scenario);
    if config.realtime {
        let start = Instant::now();
        let step = config.sample_period_ms;
        let mut t = 0;
        while !replay.is_finished() {
            t = (t + step).min(replay.duration().as_u64());
            let due = start + Duration::from_millis(t);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
            replay
                .advance_to(Millis(t))
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    replay
        .finish(seed)
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn run(
    scenario: &Path,
    config: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<(), CliError> {
    let config = load_config(config, overrides)?;
    let scenario = load_scenario(scenario)?;
    info!(name = %scenario.name, duration_ms = scenario.duration.as_u64(), "replaying");
    let report = replay(&config, scenario, seed)?;
    let text = emit_report(&report);
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Internal(e.to_string())),
    }
}

fn serve(config: &Path, listen: SocketAddr, overrides: &[String]) -> Result<(), CliError> {
    let config = load_config(config, overrides)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    runtime.block_on(async move {
        let listener = bridge::bind(listen)
            .await
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        println!("listening on ws://{addr}/session");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        bridge::serve_on(listener, config, shutdown)
            .await
            .map_err(|e| CliError::Internal(e.to_string()))
    })
}

fn validate(scenario: &Path) -> Result<(), CliError> {
    let s = load_scenario(scenario)?;
    println!(
        "ok: {:?} duration={}ms ir={} accel={} gas={} buttons={} nmea={}",
        s.name,
        s.duration.as_u64(),
        s.ir.len(),
        s.accel.len(),
        s.gas.len(),
        s.buttons.len(),
        s.nmea.len()
    );
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            config,
            out,
            seed,
            overrides,
        } => run(&scenario, &config, out.as_deref(), seed, &overrides),
        Command::Serve {
            config,
            listen,
            overrides,
        } => serve(&config, listen, &overrides),
        Command::Validate { scenario } => validate(&scenario),
    }
}

fn init_logging() {
    let filter = EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as bad input.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rapu-sim: {e}");
            e.exit_code()
        }
    }
}
