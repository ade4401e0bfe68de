//! Next-of-kin message text.

use crate::comms::nmea::GeoFix;
use crate::detectors::Cause;
use crate::kernel::Millis;

pub const SMS_MAX_CHARS: usize = 160;

/// Printable ASCII minus the characters GSM-7 cannot carry in its basic table
/// without an escape (`[ \ ] ^ { | } ~` and backtick).
pub fn is_gsm7_safe(c: char) -> bool {
    matches!(c, ' '..='~') && !matches!(c, '[' | '\\' | ']' | '^' | '{' | '|' | '}' | '~' | '`')
}

pub fn is_sendable_body(body: &str) -> bool {
    body.chars().count() <= SMS_MAX_CHARS && body.chars().all(is_gsm7_safe)
}

/// Builds the alert text. An invalid fix is treated as no fix at all.
pub fn compose_sms(cause: Cause, fix: Option<&GeoFix>, t: Millis) -> String {
    match fix.filter(|f| f.valid) {
        Some(f) => format!(
            "RAPU ALERT {} LAT={:.6} LON={:.6} T={}",
            cause.as_str(),
            f.lat,
            f.lon,
            t.as_u64()
        ),
        None => format!("RAPU ALERT {} LOC=UNKNOWN T={}", cause.as_str(), t.as_u64()),
    }
}
