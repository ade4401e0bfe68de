//! Trigger detectors: alcohol, eye closure and head tilt.
//!
//! Eye closure and head tilt share one re-read rule. A single nominal sample
//! does nothing. The first tripped sample opens a window of `window_n`
//! samples (itself included); when the window is full a trigger fires if at
//! least `closed_k` of them tripped, and the detector returns to idle either
//! way. Alcohol needs no confirmation: one sample at or above the threshold
//! fires.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{deviation, CalibrationReference};
use crate::kernel::Millis;
use crate::sensors::{Accel, SensorFrame};

pub const DEFAULT_WINDOW_N: usize = 15;
pub const DEFAULT_CLOSED_K: usize = 12;
pub const DEFAULT_TILT_THRESHOLD_G: f64 = 0.35;
pub const DEFAULT_ALCOHOL_THRESHOLD: f64 = 0.60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Cause {
    Alcohol,
    EyesClosed,
    HeadTilt,
}

impl Cause {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cause::Alcohol => "ALCOHOL",
            Cause::EyesClosed => "EYES_CLOSED",
            Cause::HeadTilt => "HEAD_TILT",
        }
    }

    pub fn is_fatigue(&self) -> bool {
        matches!(self, Cause::EyesClosed | Cause::HeadTilt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Trigger {
    pub cause: Cause,
    pub at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectorError {
    #[error("head tilt detection needs a calibration reference")]
    NotCalibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowRule {
    pub window_n: usize,
    pub closed_k: usize,
}

impl Default for WindowRule {
    fn default() -> Self {
        WindowRule {
            window_n: DEFAULT_WINDOW_N,
            closed_k: DEFAULT_CLOSED_K,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DetectorMode {
    Idle,
    ReReading,
}

/// Enter-on-trip, collect-N, vote-K window shared by blink and tilt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReReadWindow {
    rule: WindowRule,
    window: Vec<bool>,
    hits: usize,
}

impl ReReadWindow {
    pub fn new(rule: WindowRule) -> Self {
        ReReadWindow {
            rule,
            window: Vec::with_capacity(rule.window_n),
            hits: 0,
        }
    }

    pub fn mode(&self) -> DetectorMode {
        if self.window.is_empty() {
            DetectorMode::Idle
        } else {
            DetectorMode::ReReading
        }
    }

    pub fn collected(&self) -> usize {
        self.window.len()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn window(&self) -> &[bool] {
        &self.window
    }

    pub fn rule(&self) -> WindowRule {
        self.rule
    }

    /// Feeds one sample; true when a completed window carries enough hits.
    pub fn step(&mut self, tripped: bool) -> bool {
        if self.window.is_empty() && !tripped {
            return false;
        }
        self.window.push(tripped);
        self.hits += usize::from(tripped);
        if self.window.len() < self.rule.window_n {
            return false;
        }
        let fire = self.hits >= self.rule.closed_k;
        self.window.clear();
        self.hits = 0;
        fire
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlcoholDetector {
    pub threshold: f64,
}

impl AlcoholDetector {
    /// Memoryless: the boundary value itself trips.
    pub fn step(&self, gas: f64, t: Millis) -> Option<Trigger> {
        (gas >= self.threshold).then_some(Trigger {
            cause: Cause::Alcohol,
            at: t,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlinkDetector {
    window: ReReadWindow,
}

impl BlinkDetector {
    pub fn new(rule: WindowRule) -> Self {
        BlinkDetector {
            window: ReReadWindow::new(rule),
        }
    }

    pub fn state(&self) -> &ReReadWindow {
        &self.window
    }

    pub fn step(&mut self, ir_closed: bool, t: Millis) -> Option<Trigger> {
        self.window.step(ir_closed).then_some(Trigger {
            cause: Cause::EyesClosed,
            at: t,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltDetector {
    window: ReReadWindow,
    threshold_g: f64,
}

impl TiltDetector {
    pub fn new(rule: WindowRule, threshold_g: f64) -> Self {
        TiltDetector {
            window: ReReadWindow::new(rule),
            threshold_g,
        }
    }

    pub fn state(&self) -> &ReReadWindow {
        &self.window
    }

    pub fn threshold_g(&self) -> f64 {
        self.threshold_g
    }

    pub fn step(
        &mut self,
        accel: Accel,
        reference: Option<&CalibrationReference>,
        t: Millis,
    ) -> Result<Option<Trigger>, DetectorError> {
        let reference = reference.ok_or(DetectorError::NotCalibrated)?;
        let tripped = deviation(accel, reference) >= self.threshold_g;
        Ok(self.window.step(tripped).then_some(Trigger {
            cause: Cause::HeadTilt,
            at: t,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub rule: WindowRule,
    pub tilt_threshold_g: f64,
    pub alcohol_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            rule: WindowRule::default(),
            tilt_threshold_g: DEFAULT_TILT_THRESHOLD_G,
            alcohol_threshold: DEFAULT_ALCOHOL_THRESHOLD,
        }
    }
}

/// All three detectors, evaluated together on each poll.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBank {
    pub alcohol: AlcoholDetector,
    pub blink: BlinkDetector,
    pub tilt: TiltDetector,
}

impl DetectorBank {
    pub fn new(cfg: &DetectorConfig) -> Self {
        DetectorBank {
            alcohol: AlcoholDetector {
                threshold: cfg.alcohol_threshold,
            },
            blink: BlinkDetector::new(cfg.rule),
            tilt: TiltDetector::new(cfg.rule, cfg.tilt_threshold_g),
        }
    }

    /// Alcohol first, then eyes, then head; triggers come back in that order.
    /// Nothing is stepped when the reference is missing.
    pub fn detect(
        &mut self,
        frame: &SensorFrame,
        reference: Option<&CalibrationReference>,
    ) -> Result<Vec<Trigger>, DetectorError> {
        if reference.is_none() {
            return Err(DetectorError::NotCalibrated);
        }
        let mut fired = Vec::new();
        fired.extend(self.alcohol.step(frame.gas, frame.t));
        fired.extend(self.blink.step(frame.ir_closed, frame.t));
        fired.extend(self.tilt.step(frame.accel, reference, frame.t)?);
        Ok(fired)
    }
}
