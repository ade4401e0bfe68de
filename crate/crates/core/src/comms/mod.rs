//! Communication unit: GPS fixes in, next-of-kin SMS out.

pub mod modem;
pub mod nmea;
pub mod sms;

pub use modem::{
    run_dialogue, FaultPoint, ModemError, ModemFaultScript, ModemSession, SessionPhase, SimModem,
    Stimulus, TranscriptEntry,
};
pub use nmea::{parse_nmea, to_decimal_degrees, GeoFix, Hemisphere, NmeaError, NmeaOutcome};
pub use sms::compose_sms;
