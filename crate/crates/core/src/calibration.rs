//! Head-pose reference learned at system reset.
//!
//! The driver sits still while a fixed number of accelerometer samples are
//! averaged per axis. Head movement is later measured as the Euclidean
//! distance from this reference.

use serde::Serialize;
use thiserror::Error;

use crate::kernel::Millis;
use crate::sensors::Accel;

pub const DEFAULT_CALIB_SAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalibrationError {
    #[error("calibration needs {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },
    #[error("calibration takes exactly {required} samples, got {got}")]
    ExcessSamples { required: usize, got: usize },
    #[error("calibration sample {index} is outside the accelerometer range")]
    OutOfRange { index: usize },
    #[error("calibration sample count must be positive")]
    ZeroSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationReference {
    pub origin: Accel,
    pub sample_count: usize,
    pub completed_at: Millis,
}

impl CalibrationReference {
    pub fn x0(&self) -> f64 {
        self.origin.x
    }

    pub fn y0(&self) -> f64 {
        self.origin.y
    }

    pub fn z0(&self) -> f64 {
        self.origin.z
    }
}

/// Correctly rounded sum of finite values (Shewchuk's non-overlapping partials).
fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // Round half-way cases using the sign of what is left below.
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

// Sorting first makes the result independent of sample order, bit for bit.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    exact_sum(&values) / values.len() as f64
}

/// Averages exactly `required` timestamped samples into a reference.
pub fn calibrate(
    samples: &[(Millis, Accel)],
    required: usize,
) -> Result<CalibrationReference, CalibrationError> {
    if required == 0 {
        return Err(CalibrationError::ZeroSamples);
    }
    if samples.len() < required {
        return Err(CalibrationError::InsufficientSamples {
            required,
            got: samples.len(),
        });
    }
    if samples.len() > required {
        return Err(CalibrationError::ExcessSamples {
            required,
            got: samples.len(),
        });
    }
    if let Some(index) = samples.iter().position(|(_, a)| !a.in_range()) {
        return Err(CalibrationError::OutOfRange { index });
    }

    let axis = |f: fn(&Accel) -> f64| order_free_mean(samples.iter().map(|(_, a)| f(a)).collect());
    let completed_at = samples.iter().map(|(t, _)| *t).max().unwrap_or_default();

    Ok(CalibrationReference {
        origin: Accel::new(axis(|a| a.x), axis(|a| a.y), axis(|a| a.z)),
        sample_count: required,
        completed_at,
    })
}

/// Euclidean distance in g between `accel` and the learned reference.
pub fn deviation(accel: Accel, reference: &CalibrationReference) -> f64 {
    distance(accel, reference.origin)
}

pub(crate) fn distance(a: Accel, b: Accel) -> f64 {
    let d = [a.x - b.x, a.y - b.y, a.z - b.z];
    // Scale by the largest component so tiny offsets never square to zero.
    let scale = d.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * d.iter().map(|c| (c / scale).powi(2)).sum::<f64>().sqrt()
}

/// Collects samples poll by poll until the reference can be computed.
#[derive(Debug, Clone)]
pub struct Calibrator {
    required: usize,
    samples: Vec<(Millis, Accel)>,
}

impl Calibrator {
    pub fn new(required: usize) -> Self {
        Calibrator {
            required,
            samples: Vec::with_capacity(required),
        }
    }

    pub fn collected(&self) -> usize {
        self.samples.len()
    }

    pub fn required(&self) -> usize {
        self.required
    }

    /// Returns the reference once the last required sample arrives.
    pub fn push(
        &mut self,
        t: Millis,
        accel: Accel,
    ) -> Option<Result<CalibrationReference, CalibrationError>> {
        if self.samples.len() >= self.required {
            return None;
        }
        self.samples.push((t, accel));
        (self.samples.len() == self.required).then(|| calibrate(&self.samples, self.required))
    }
}
