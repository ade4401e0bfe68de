//! Driver-vigilance unit simulator.
//!
//! A polled sensor loop (eye IR, head accelerometer, breath gas) feeds
//! debounced detectors; their triggers drive an alarm state machine with a
//! timed escape window, a latched distress state, and an SMS to a fixed
//! contact through a simulated GSM modem. Everything runs on a virtual clock,
//! so a scenario replay is a pure function of its inputs.

pub mod calibration;
pub mod comms;
pub mod detectors;
pub mod escalation;
pub mod harness;
pub mod kernel;
pub mod sensors;

pub use harness::{run_scenario, Config, Report};
pub use kernel::Millis;
