use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::DEFAULT_CALIB_SAMPLES;
use crate::comms::modem::{is_e164, ModemFaultScript, DEFAULT_SMS_RETRIES};
use crate::detectors::{
    DetectorConfig, WindowRule, DEFAULT_ALCOHOL_THRESHOLD, DEFAULT_CLOSED_K,
    DEFAULT_TILT_THRESHOLD_G, DEFAULT_WINDOW_N,
};
use crate::escalation::{
    render_display, EscalationConfig, DEFAULT_DISTRESS_TEXT, DEFAULT_ESCAPE_WINDOW_MS,
};
use crate::sensors::ACCEL_LIMIT_G;

pub const DEFAULT_SAMPLE_PERIOD_MS: u64 = 160;
pub const DEFAULT_RECIPIENT: &str = "+15555550100";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config: {0}")]
pub struct ConfigInvalid(pub String);

/// Every tunable of the simulated unit. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub sample_period_ms: u64,
    pub calib_samples: usize,
    pub window_n: usize,
    pub closed_k: usize,
    pub tilt_threshold_g: f64,
    pub alcohol_threshold: f64,
    pub escape_window_ms: u64,
    pub recipient: String,
    pub modem_fault_script: Option<ModemFaultScript>,
    pub realtime: bool,
    pub distress_text: String,
    pub sms_retries: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            sample_period_ms: DEFAULT_SAMPLE_PERIOD_MS,
            calib_samples: DEFAULT_CALIB_SAMPLES,
            window_n: DEFAULT_WINDOW_N,
            closed_k: DEFAULT_CLOSED_K,
            tilt_threshold_g: DEFAULT_TILT_THRESHOLD_G,
            alcohol_threshold: DEFAULT_ALCOHOL_THRESHOLD,
            escape_window_ms: DEFAULT_ESCAPE_WINDOW_MS,
            recipient: DEFAULT_RECIPIENT.to_string(),
            modem_fault_script: None,
            realtime: false,
            distress_text: DEFAULT_DISTRESS_TEXT.to_string(),
            sms_retries: DEFAULT_SMS_RETRIES,
        }
    }
}

impl Config {
    /// Parses a JSON object and validates it.
    pub fn from_json(text: &str) -> Result<Config, ConfigInvalid> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        let fail = |msg: &str| Err(ConfigInvalid(msg.to_string()));
        if self.sample_period_ms == 0 {
            return fail("sample_period_ms must be positive");
        }
        if self.escape_window_ms == 0 {
            return fail("escape_window_ms must be positive");
        }
        if self.calib_samples == 0 {
            return fail("calib_samples must be positive");
        }
        if self.window_n == 0 {
            return fail("window_n must be positive");
        }
        if self.closed_k == 0 || self.closed_k > self.window_n {
            return fail("closed_k must be in 1..=window_n");
        }
        // Largest possible distance between two points of the accelerometer cube.
        let max_deviation = 2.0 * ACCEL_LIMIT_G * 3f64.sqrt();
        if !(self.tilt_threshold_g > 0.0 && self.tilt_threshold_g <= max_deviation) {
            return fail("tilt_threshold_g must be in (0, 4*sqrt(3)] g");
        }
        if !(self.alcohol_threshold > 0.0 && self.alcohol_threshold <= 1.0) {
            return fail("alcohol_threshold must be in (0, 1]");
        }
        if !is_e164(&self.recipient) {
            return fail("recipient must be an E.164 number");
        }
        if render_display(&self.distress_text).is_err() {
            return fail("distress_text must be 4 seven-segment glyphs");
        }
        Ok(())
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            rule: WindowRule {
                window_n: self.window_n,
                closed_k: self.closed_k,
            },
            tilt_threshold_g: self.tilt_threshold_g,
            alcohol_threshold: self.alcohol_threshold,
        }
    }

    pub fn escalation_config(&self) -> EscalationConfig {
        EscalationConfig {
            escape_window_ms: self.escape_window_ms,
            distress_text: self.distress_text.clone(),
        }
    }

    pub fn fault_script(&self) -> ModemFaultScript {
        self.modem_fault_script.clone().unwrap_or_default()
    }
}
