//! Sensor samples, scenario traces and the polled sample stream.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::kernel::Millis;

/// Full-scale range of the low-g accelerometer, in g.
pub const ACCEL_LIMIT_G: f64 = 2.0;

/// Accelerometer triple in g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Accel {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Accel {
    /// Head upright: gravity entirely on the z axis.
    pub const UPRIGHT: Accel = Accel {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Accel { x, y, z }
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn in_range(&self) -> bool {
        self.components()
            .iter()
            .all(|c| c.is_finite() && c.abs() <= ACCEL_LIMIT_G)
    }
}

impl From<[f64; 3]> for Accel {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Accel { x, y, z }
    }
}

impl From<Accel> for [f64; 3] {
    fn from(a: Accel) -> Self {
        a.components()
    }
}

pub fn gas_in_range(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// One polled snapshot of every sensor channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorFrame {
    pub t: Millis,
    /// Post-threshold IR reading: a closed eye reflects the emitter.
    pub ir_closed: bool,
    pub accel: Accel,
    /// Normalised alcohol/gas level in `[0, 1]`.
    pub gas: f64,
}

/// Channel values held by the simulated hardware between set points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelValues {
    pub ir_closed: bool,
    pub accel: Accel,
    pub gas: f64,
}

impl Default for ChannelValues {
    /// Upright, alert, sober driver.
    fn default() -> Self {
        ChannelValues {
            ir_closed: false,
            accel: Accel::UPRIGHT,
            gas: 0.0,
        }
    }
}

impl ChannelValues {
    pub fn frame(&self, t: Millis) -> SensorFrame {
        SensorFrame {
            t,
            ir_closed: self.ir_closed,
            accel: self.accel,
            gas: self.gas,
        }
    }
}

/// Piecewise-constant time series with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    points: Vec<(Millis, T)>,
}

impl<T> Default for Track<T> {
    fn default() -> Self {
        Track { points: Vec::new() }
    }
}

impl<T> Track<T> {
    pub fn points(&self) -> &[(Millis, T)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Value of the latest point at or before `t`.
    pub fn value_at(&self, t: Millis) -> Option<&T> {
        let idx = self.points.partition_point(|(at, _)| *at <= t);
        idx.checked_sub(1).map(|i| &self.points[i].1)
    }

    fn push(&mut self, at: Millis, value: T) -> Result<(), &'static str> {
        if let Some((last, _)) = self.points.last() {
            if at <= *last {
                return Err("timestamps must be strictly increasing within a track");
            }
        }
        self.points.push((at, value));
        Ok(())
    }
}

/// A recorded stimulus trace: channel tracks plus discrete driver/GPS events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub name: String,
    pub duration: Millis,
    pub ir: Track<bool>,
    pub accel: Track<Accel>,
    pub gas: Track<f64>,
    pub buttons: Vec<Millis>,
    pub nmea: Vec<(Millis, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line_no}: {reason}")]
pub struct ParseError {
    pub line_no: usize,
    pub reason: String,
}

impl ParseError {
    fn new(line_no: usize, reason: impl Into<String>) -> Self {
        ParseError {
            line_no,
            reason: reason.into(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    t_ms: Option<u64>,
    ch: Option<String>,
    ev: Option<String>,
    v: Option<Value>,
    meta: Option<RawMeta>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    name: Option<String>,
    duration_ms: Option<u64>,
}

/// Reads a JSON Lines scenario. Blank lines are skipped; line numbers are 1-based.
pub fn ingest_scenario(text: &str) -> Result<Scenario, ParseError> {
    let mut scenario = Scenario::default();
    let mut declared_duration = None;
    let mut latest = Millis::ZERO;
    let mut seen_record = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let rec: RawLine = serde_json::from_str(line)
            .map_err(|e| ParseError::new(line_no, format!("malformed record: {e}")))?;

        if let Some(meta) = rec.meta {
            if seen_record {
                return Err(ParseError::new(line_no, "meta must be the first line"));
            }
            if rec.t_ms.is_some() || rec.ch.is_some() || rec.ev.is_some() || rec.v.is_some() {
                return Err(ParseError::new(line_no, "meta line carries extra keys"));
            }
            seen_record = true;
            if let Some(name) = meta.name {
                scenario.name = name;
            }
            declared_duration = meta.duration_ms.map(Millis);
            continue;
        }
        seen_record = true;

        let t = Millis(
            rec.t_ms
                .ok_or_else(|| ParseError::new(line_no, "missing t_ms"))?,
        );
        if let Some(d) = declared_duration {
            if t > d {
                return Err(ParseError::new(line_no, "timestamp beyond duration"));
            }
        }
        latest = latest.max(t);

        match (rec.ch.as_deref(), rec.ev.as_deref()) {
            (Some(ch), None) => {
                let v = rec.v.ok_or_else(|| ParseError::new(line_no, "missing v"))?;
                let pushed = match ch {
                    "ir" => scenario.ir.push(t, parse_ir(&v, line_no)?),
                    "accel" => scenario.accel.push(t, parse_accel(&v, line_no)?),
                    "gas" => scenario.gas.push(t, parse_gas(&v, line_no)?),
                    other => {
                        return Err(ParseError::new(
                            line_no,
                            format!("unknown channel {other:?}"),
                        ))
                    }
                };
                pushed.map_err(|r| ParseError::new(line_no, r))?;
            }
            (None, Some("button")) => {
                if rec.v.is_some() {
                    return Err(ParseError::new(line_no, "button event takes no value"));
                }
                if scenario.buttons.last().is_some_and(|&last| t < last) {
                    return Err(ParseError::new(line_no, "button events out of order"));
                }
                scenario.buttons.push(t);
            }
            (None, Some("nmea")) => {
                let sentence = match rec.v {
                    Some(Value::String(s)) => s,
                    _ => return Err(ParseError::new(line_no, "nmea value must be a string")),
                };
                if scenario.nmea.last().is_some_and(|(last, _)| t < *last) {
                    return Err(ParseError::new(line_no, "nmea events out of order"));
                }
                scenario.nmea.push((t, sentence));
            }
            (None, Some(other)) => {
                return Err(ParseError::new(line_no, format!("unknown event {other:?}")))
            }
            (Some(_), Some(_)) => {
                return Err(ParseError::new(line_no, "record has both ch and ev"))
            }
            (None, None) => return Err(ParseError::new(line_no, "record has neither ch nor ev")),
        }
    }

    scenario.duration = declared_duration.unwrap_or(latest);
    Ok(scenario)
}

fn parse_ir(v: &Value, line_no: usize) -> Result<bool, ParseError> {
    match v.as_u64() {
        Some(0) => Ok(false),
        Some(1) => Ok(true),
        _ => Err(ParseError::new(line_no, "ir value must be 0 or 1")),
    }
}

fn parse_accel(v: &Value, line_no: usize) -> Result<Accel, ParseError> {
    let items = v
        .as_array()
        .filter(|a| a.len() == 3)
        .ok_or_else(|| ParseError::new(line_no, "accel value must be [ax, ay, az]"))?;
    let mut c = [0.0; 3];
    for (slot, item) in c.iter_mut().zip(items) {
        *slot = item
            .as_f64()
            .ok_or_else(|| ParseError::new(line_no, "accel component must be a number"))?;
    }
    let accel = Accel::from(c);
    if !accel.in_range() {
        return Err(ParseError::new(line_no, "accel out of range"));
    }
    Ok(accel)
}

fn parse_gas(v: &Value, line_no: usize) -> Result<f64, ParseError> {
    let g = v
        .as_f64()
        .ok_or_else(|| ParseError::new(line_no, "gas value must be a number"))?;
    if !gas_in_range(g) {
        return Err(ParseError::new(line_no, "gas out of range"));
    }
    Ok(g)
}

/// Zero-order hold read of every channel at `t`.
pub fn sample_at(scenario: &Scenario, t: Millis) -> SensorFrame {
    let defaults = ChannelValues::default();
    SensorFrame {
        t,
        ir_closed: scenario
            .ir
            .value_at(t)
            .copied()
            .unwrap_or(defaults.ir_closed),
        accel: scenario
            .accel
            .value_at(t)
            .copied()
            .unwrap_or(defaults.accel),
        gas: scenario.gas.value_at(t).copied().unwrap_or(defaults.gas),
    }
}

/// Number of polls a grid starting at 0 delivers over `[0, duration]`.
pub fn poll_count(duration: Millis, period_ms: u64) -> u64 {
    duration.0 / period_ms + 1
}
