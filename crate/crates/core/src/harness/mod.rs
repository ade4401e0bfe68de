//! Runs scenarios end to end and produces reports.

pub mod config;
pub mod engine;
pub mod report;

use thiserror::Error;

use crate::kernel::KernelError;
use crate::sensors::{ingest_scenario, ParseError, Scenario};

pub use config::{Config, ConfigInvalid};
pub use engine::{Engine, Injection, Payload, RangeError, Replay, Snapshot};
pub use report::{emit_report, Record, RecordBody, Report};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    ConfigInvalid(#[from] ConfigInvalid),
    #[error("scenario {0}")]
    Parse(#[from] ParseError),
    #[error("kernel: {0}")]
    Kernel(#[from] KernelError),
}

/// Replays `scenario` under `config` from reset to the end of its duration.
pub fn run_scenario(config: &Config, scenario: &Scenario) -> Result<Report, HarnessError> {
    run_scenario_seeded(config, scenario, None)
}

pub fn run_scenario_seeded(
    config: &Config,
    scenario: &Scenario,
    seed: Option<u64>,
) -> Result<Report, HarnessError> {
    config.validate()?;
    let replay = Replay::new(config.clone(), scenario.clone());
    Ok(replay.finish(seed)?)
}

/// Parses JSON Lines scenario text and replays it.
pub fn run_scenario_text(config: &Config, text: &str) -> Result<Report, HarnessError> {
    let scenario = ingest_scenario(text)?;
    run_scenario(config, &scenario)
}
