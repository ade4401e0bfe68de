//! NMEA-0183 position sentences (RMC and GGA).

use serde::Serialize;
use thiserror::Error;

use crate::kernel::Millis;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NmeaError {
    #[error("sentence does not start with '$'")]
    MissingStart,
    #[error("sentence has no '*hh' checksum")]
    MissingChecksum,
    #[error("checksum mismatch: sentence says {stated:02X}, payload gives {computed:02X}")]
    BadChecksum { stated: u8, computed: u8 },
    #[error("malformed field {0}")]
    MalformedField(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeoFix {
    pub lat: f64,
    pub lon: f64,
    pub valid: bool,
    /// Raw `hhmmss.sss` as it appeared in the sentence.
    pub source_time: String,
    pub received_at: Millis,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NmeaOutcome {
    Fix(GeoFix),
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemisphere {
    N,
    S,
    E,
    W,
}

impl Hemisphere {
    pub fn parse(field: &str) -> Option<Hemisphere> {
        match field {
            "N" => Some(Hemisphere::N),
            "S" => Some(Hemisphere::S),
            "E" => Some(Hemisphere::E),
            "W" => Some(Hemisphere::W),
            _ => None,
        }
    }

    fn degree_digits(self) -> usize {
        match self {
            Hemisphere::N | Hemisphere::S => 2,
            Hemisphere::E | Hemisphere::W => 3,
        }
    }

    fn limit(self) -> f64 {
        match self {
            Hemisphere::N | Hemisphere::S => 90.0,
            Hemisphere::E | Hemisphere::W => 180.0,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Hemisphere::N | Hemisphere::E => 1.0,
            Hemisphere::S | Hemisphere::W => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("coordinate is not ddmm.mmmm / dddmm.mmmm or is out of range")]
pub struct CoordinateError;

/// XOR of every byte in the payload (the text between `$` and `*`).
pub fn checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0, |acc, b| acc ^ b)
}

/// Wraps a payload as `$payload*HH`.
pub fn frame_sentence(payload: &str) -> String {
    format!("${payload}*{:02X}", checksum(payload.as_bytes()))
}

/// Converts `ddmm.mmmm` (latitude) or `dddmm.mmmm` (longitude) to signed degrees.
pub fn to_decimal_degrees(field: &str, hemisphere: Hemisphere) -> Result<f64, CoordinateError> {
    let deg_digits = hemisphere.degree_digits();
    let (int_part, frac_part) = field.split_once('.').ok_or(CoordinateError)?;
    if int_part.len() != deg_digits + 2
        || frac_part.is_empty()
        || !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(CoordinateError);
    }
    let degrees: f64 = int_part[..deg_digits]
        .parse()
        .map_err(|_| CoordinateError)?;
    let minutes: f64 = field[deg_digits..].parse().map_err(|_| CoordinateError)?;
    if minutes >= 60.0 {
        return Err(CoordinateError);
    }
    let value = degrees + minutes / 60.0;
    if value > hemisphere.limit() {
        return Err(CoordinateError);
    }
    Ok(hemisphere.sign() * value)
}

/// Splits `$payload*hh`, verifying the checksum. Returns the payload.
pub fn verify_sentence(line: &str) -> Result<&str, NmeaError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let body = line.strip_prefix('$').ok_or(NmeaError::MissingStart)?;
    let (payload, stated) = body.rsplit_once('*').ok_or(NmeaError::MissingChecksum)?;
    // Uppercase only, so that no single-byte edit of the field keeps its value.
    if stated.len() != 2
        || !stated
            .bytes()
            .all(|b| matches!(b, b'0'..=b'9' | b'A'..=b'F'))
    {
        return Err(NmeaError::MissingChecksum);
    }
    let stated = u8::from_str_radix(stated, 16).map_err(|_| NmeaError::MissingChecksum)?;
    let computed = checksum(payload.as_bytes());
    if stated != computed {
        return Err(NmeaError::BadChecksum { stated, computed });
    }
    Ok(payload)
}

/// Parses one sentence. RMC and GGA (any talker) become fixes; every other
/// well-formed sentence is ignored.
pub fn parse_nmea(line: &str, received_at: Millis) -> Result<NmeaOutcome, NmeaError> {
    let payload = verify_sentence(line)?;
    let fields: Vec<&str> = payload.split(',').collect();
    let kind = fields[0];
    if kind.len() != 5 {
        return Ok(NmeaOutcome::Ignored);
    }
    let field = |i: usize| fields.get(i).copied().ok_or(NmeaError::MalformedField(i));

    let (time_idx, lat_idx, valid) = match kind.get(2..) {
        Some("RMC") => {
            let valid = match field(2)? {
                "A" => true,
                "V" => false,
                _ => return Err(NmeaError::MalformedField(2)),
            };
            (1, 3, valid)
        }
        Some("GGA") => {
            let quality: u8 = field(6)?
                .parse()
                .map_err(|_| NmeaError::MalformedField(6))?;
            (1, 2, quality >= 1)
        }
        _ => return Ok(NmeaOutcome::Ignored),
    };

    let source_time = field(time_idx)?.to_string();
    let coordinate = |idx: usize, axis: [&str; 2]| -> Result<Option<f64>, NmeaError> {
        let value = field(idx)?;
        let hemi = field(idx + 1)?;
        if value.is_empty() && hemi.is_empty() && !valid {
            return Ok(None);
        }
        let hemisphere = Hemisphere::parse(hemi)
            .filter(|_| axis.contains(&hemi))
            .ok_or(NmeaError::MalformedField(idx + 1))?;
        to_decimal_degrees(value, hemisphere)
            .map(Some)
            .map_err(|_| NmeaError::MalformedField(idx))
    };
    let lat = coordinate(lat_idx, ["N", "S"])?;
    let lon = coordinate(lat_idx + 2, ["E", "W"])?;

    Ok(NmeaOutcome::Fix(GeoFix {
        lat: lat.unwrap_or(0.0),
        lon: lon.unwrap_or(0.0),
        valid: valid && lat.is_some() && lon.is_some(),
        source_time,
        received_at,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const RMC: &str = "$GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W*6A";

    #[test]
    fn rmc_example() {
        let NmeaOutcome::Fix(fix) = parse_nmea(RMC, Millis(42)).unwrap() else {
            panic!("expected a fix");
        };
        assert!(fix.valid);
        assert!((fix.lat - 48.1173).abs() < 1e-9);
        assert!((fix.lon - 11.516_666_666).abs() < 1e-6);
        assert_eq!(fix.source_time, "123519");
        assert_eq!(fix.received_at, Millis(42));
    }

    #[test]
    fn altered_checksum() {
        let bad = RMC.replace("*6A", "*6B");
        assert_eq!(
            parse_nmea(&bad, Millis(0)),
            Err(NmeaError::BadChecksum {
                stated: 0x6B,
                computed: 0x6A
            })
        );
        let lower = RMC.replace("*6A", "*6a");
        assert_eq!(
            parse_nmea(&lower, Millis(0)),
            Err(NmeaError::MissingChecksum)
        );
        assert_eq!(verify_sentence("$J@*0A"), Ok("J@"));
        assert!(verify_sentence("$J@*+A").is_err());
    }

    #[test]
    fn gsv_is_ignored() {
        let gsv =
            frame_sentence("GPGSV,3,1,11,03,03,111,00,04,15,270,00,06,01,010,00,13,06,292,00");
        assert_eq!(parse_nmea(&gsv, Millis(0)), Ok(NmeaOutcome::Ignored));
    }

    #[test]
    fn missing_checksum_and_start() {
        assert_eq!(
            parse_nmea("$GPRMC,123519,A", Millis(0)),
            Err(NmeaError::MissingChecksum)
        );
        assert_eq!(
            parse_nmea("GPRMC*00", Millis(0)),
            Err(NmeaError::MissingStart)
        );
    }

    #[test]
    fn gga_quality_sets_validity() {
        let good = frame_sentence("GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,");
        let NmeaOutcome::Fix(fix) = parse_nmea(&good, Millis(0)).unwrap() else {
            panic!()
        };
        assert!(fix.valid);
        let none = frame_sentence("GNGGA,123519,,,,,0,00,,,M,,M,,");
        let NmeaOutcome::Fix(fix) = parse_nmea(&none, Millis(0)).unwrap() else {
            panic!()
        };
        assert!(!fix.valid);
    }

    #[test]
    fn void_rmc_is_invalid_fix() {
        let s = frame_sentence("GPRMC,123519,V,,,,,,,230394,,");
        let NmeaOutcome::Fix(fix) = parse_nmea(&s, Millis(0)).unwrap() else {
            panic!()
        };
        assert!(!fix.valid);
    }

    #[test]
    fn malformed_fields() {
        let s = frame_sentence("GPRMC,123519,A,48x7.038,N,01131.000,E,022.4,084.4,230394,003.1,W");
        assert_eq!(parse_nmea(&s, Millis(0)), Err(NmeaError::MalformedField(3)));
        let s = frame_sentence("GPRMC,123519,A,4807.038,Q,01131.000,E,022.4,084.4,230394,003.1,W");
        assert_eq!(parse_nmea(&s, Millis(0)), Err(NmeaError::MalformedField(4)));
        let s = frame_sentence("GPRMC,123519,X,4807.038,N,01131.000,E");
        assert_eq!(parse_nmea(&s, Millis(0)), Err(NmeaError::MalformedField(2)));
        let s = frame_sentence("GPRMC,123519,A,9107.038,N,01131.000,E");
        assert_eq!(parse_nmea(&s, Millis(0)), Err(NmeaError::MalformedField(3)));
        let s = frame_sentence("GPRMC,123519,A");
        assert_eq!(parse_nmea(&s, Millis(0)), Err(NmeaError::MalformedField(3)));
        let s = frame_sentence("GPRMC,123519,A,4807.038,E,01131.000,E");
        assert_eq!(parse_nmea(&s, Millis(0)), Err(NmeaError::MalformedField(4)));
    }

    #[test]
    fn decimal_degrees_examples() {
        assert_eq!(to_decimal_degrees("0000.000", Hemisphere::N), Ok(0.0));
        let lat = to_decimal_degrees("4807.038", Hemisphere::N).unwrap();
        assert!((lat - 48.1173).abs() < 1e-12);
        let lon = to_decimal_degrees("01131.000", Hemisphere::W).unwrap();
        assert!((lon + 11.516_666_7).abs() < 1e-6);
        assert!(to_decimal_degrees("4807.038", Hemisphere::E).is_err());
        assert!(to_decimal_degrees("4860.000", Hemisphere::N).is_err());
        assert!(to_decimal_degrees("18100.000", Hemisphere::E).is_err());
        assert!(to_decimal_degrees("4807.", Hemisphere::N).is_err());
    }
}
