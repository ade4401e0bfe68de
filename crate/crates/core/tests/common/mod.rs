#![allow(dead_code)]

//! Reference implementations used as test oracles. Written from the rules,
//! not from the library code, and kept deliberately naive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const PERIOD: u64 = 160;
pub const CALIB: u64 = 32;
pub const WINDOW_N: usize = 15;
pub const CLOSED_K: usize = 12;
pub const ESCAPE_MS: u64 = 10_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Indices at which the enter-on-trip, collect-N, vote-K rule fires.
/// Index arithmetic only: a window opens at the first tripped index, spans
/// exactly `n` items, and scanning resumes right after it.
pub fn window_oracle(seq: &[bool], n: usize, k: usize) -> Vec<usize> {
    let mut fired = Vec::new();
    let mut i = 0;
    while i < seq.len() {
        if !seq[i] {
            i += 1;
            continue;
        }
        let end = i + n;
        if end > seq.len() {
            break;
        }
        let count = seq[i..end].iter().filter(|&&b| b).count();
        if count >= k {
            fired.push(end - 1);
        }
        i = end;
    }
    fired
}

/// First poll-grid instant at or after `t`.
pub fn grid_ceil(t: u64, period: u64) -> u64 {
    let mut g = 0;
    while g < t {
        g += period;
    }
    g
}

/// Plain Euclidean norm of the difference.
pub fn naive_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// NMEA checksum computed byte by byte from the full sentence text.
pub fn nmea_checksum_oracle(sentence: &str) -> u8 {
    let start = sentence.find('$').unwrap() + 1;
    let end = sentence.rfind('*').unwrap();
    let mut x = 0u8;
    for b in sentence[start..end].bytes() {
        x ^= b;
    }
    x
}

/// Scenario JSONL built line by line.
#[derive(Default, Clone)]
pub struct ScenarioText {
    lines: Vec<String>,
}

impl ScenarioText {
    pub fn new(name: &str, duration_ms: u64) -> Self {
        ScenarioText {
            lines: vec![json!({"meta": {"name": name, "duration_ms": duration_ms}}).to_string()],
        }
    }

    pub fn ir(mut self, t: u64, closed: bool) -> Self {
        self.lines
            .push(json!({"t_ms": t, "ch": "ir", "v": u8::from(closed)}).to_string());
        self
    }

    pub fn accel(mut self, t: u64, v: [f64; 3]) -> Self {
        self.lines
            .push(json!({"t_ms": t, "ch": "accel", "v": v}).to_string());
        self
    }

    pub fn gas(mut self, t: u64, v: f64) -> Self {
        self.lines
            .push(json!({"t_ms": t, "ch": "gas", "v": v}).to_string());
        self
    }

    pub fn button(mut self, t: u64) -> Self {
        self.lines
            .push(json!({"t_ms": t, "ev": "button"}).to_string());
        self
    }

    pub fn nmea(mut self, t: u64, sentence: &str) -> Self {
        self.lines
            .push(json!({"t_ms": t, "ev": "nmea", "v": sentence}).to_string());
        self
    }

    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

/// Random scenario: every channel gets a sorted random track, plus buttons.
pub fn random_scenario(r: &mut ChaCha8Rng, duration: u64) -> ScenarioText {
    let mut s = ScenarioText::new("fuzz", duration);
    let times = |r: &mut ChaCha8Rng, max: usize| {
        let count = r.gen_range(0..=max);
        let mut ts: Vec<u64> = (0..count).map(|_| r.gen_range(0..=duration)).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    };
    for t in times(r, 40) {
        s = s.ir(t, r.gen_bool(0.6));
    }
    for t in times(r, 20) {
        let v = if r.gen_bool(0.5) {
            [0.0, 0.0, 1.0]
        } else {
            [
                r.gen_range(-2.0..=2.0),
                r.gen_range(-2.0..=2.0),
                r.gen_range(-2.0..=2.0),
            ]
        };
        s = s.accel(t, v);
    }
    for t in times(r, 6) {
        let v = if r.gen_bool(0.15) {
            r.gen_range(0.6..=1.0)
        } else {
            r.gen_range(0.0..0.6)
        };
        s = s.gas(t, v);
    }
    for t in times(r, 30) {
        s = s.button(t);
    }
    s
}
