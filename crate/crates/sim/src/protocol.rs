//! JSON frames exchanged with the cockpit over `/session`.

use rapu_core::harness::{Injection, Payload, RangeError, Record, Snapshot};
use rapu_core::sensors::Accel;
use rapu_core::Millis;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Driver actions sent by the cockpit.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inbound {
    InjectIr {
        v: Value,
    },
    /// Either `v: [x, y, z]` or separate `ax`, `ay`, `az`.
    InjectAccel {
        #[serde(default)]
        v: Option<[f64; 3]>,
        #[serde(default)]
        ax: Option<f64>,
        #[serde(default)]
        ay: Option<f64>,
        #[serde(default)]
        az: Option<f64>,
    },
    InjectGas {
        v: f64,
    },
    PressButton {},
    InjectNmea {
        #[serde(alias = "line")]
        v: String,
    },
    Reset {},
}

impl Inbound {
    pub fn kind(&self) -> &'static str {
        match self {
            Inbound::InjectIr { .. } => "inject_ir",
            Inbound::InjectAccel { .. } => "inject_accel",
            Inbound::InjectGas { .. } => "inject_gas",
            Inbound::PressButton {} => "press_button",
            Inbound::InjectNmea { .. } => "inject_nmea",
            Inbound::Reset {} => "reset",
        }
    }

    /// Same range checks as scenario ingestion.
    pub fn into_payload(self) -> Result<Payload, RangeError> {
        let payload = match self {
            Inbound::InjectIr { v } => match v.as_u64() {
                Some(0) => Payload::UiInjection(Injection::Ir(false)),
                Some(1) => Payload::UiInjection(Injection::Ir(true)),
                _ => return Err(RangeError::Ir),
            },
            Inbound::InjectAccel { v, ax, ay, az } => {
                let triple = match (v, ax, ay, az) {
                    (Some(v), None, None, None) => v,
                    (None, Some(x), Some(y), Some(z)) => [x, y, z],
                    _ => return Err(RangeError::Accel),
                };
                Payload::UiInjection(Injection::Accel(Accel::from(triple)))
            }
            Inbound::InjectGas { v } => Payload::UiInjection(Injection::Gas(v)),
            Inbound::PressButton {} => Payload::ButtonPress,
            Inbound::InjectNmea { v } => Payload::NmeaLine(v),
            Inbound::Reset {} => Payload::UiInjection(Injection::Reset),
        };
        if let Payload::UiInjection(inj) = &payload {
            inj.validate()?;
        }
        Ok(payload)
    }
}

pub fn parse_inbound(text: &str) -> Result<Inbound, String> {
    serde_json::from_str(text).map_err(|e| format!("malformed frame: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Snapshot(Snapshot),
    Event { record: Record },
    Ack { request: &'static str, t_ms: Millis },
    Error { error: String },
}

impl Outbound {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outbound frames always serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_inbound_kind() {
        let cases = [
            (r#"{"type":"inject_ir","v":1}"#, "inject_ir"),
            (
                r#"{"type":"inject_accel","v":[0.1,0.2,0.9]}"#,
                "inject_accel",
            ),
            (r#"{"type":"inject_gas","v":0.9}"#, "inject_gas"),
            (r#"{"type":"press_button"}"#, "press_button"),
            (
                r#"{"type":"inject_accel","ax":0.1,"ay":0.2,"az":0.9}"#,
                "inject_accel",
            ),
            (r#"{"type":"inject_nmea","v":"$GPGSV*00"}"#, "inject_nmea"),
            (
                r#"{"type":"inject_nmea","line":"$GPGSV*00"}"#,
                "inject_nmea",
            ),
            (r#"{"type":"reset"}"#, "reset"),
        ];
        for (text, kind) in cases {
            assert_eq!(parse_inbound(text).unwrap().kind(), kind);
        }
    }

    #[test]
    fn rejects_malformed_frames() {
        for text in [
            "not json",
            r#"{"type":"launch"}"#,
            r#"{"type":"inject_gas"}"#,
            r#"{"type":"press_button","extra":1}"#,
            r#"{"type":"reset","v":0}"#,
            r#"{"type":"inject_gas","v":0.5,"x":1}"#,
            r#"{"type":"inject_accel","v":[0,1]}"#,
        ] {
            assert!(parse_inbound(text).is_err(), "{text}");
        }
    }

    #[test]
    fn range_checks_mirror_ingestion() {
        let bad = [
            r#"{"type":"inject_ir","v":2}"#,
            r#"{"type":"inject_ir","v":"1"}"#,
            r#"{"type":"inject_gas","v":1.5}"#,
            r#"{"type":"inject_gas","v":-0.1}"#,
            r#"{"type":"inject_accel","v":[0,0,2.5]}"#,
            r#"{"type":"inject_accel","ax":0,"ay":0}"#,
            r#"{"type":"inject_accel","v":[0,0,1],"ax":0,"ay":0,"az":1}"#,
        ];
        for text in bad {
            assert!(
                parse_inbound(text).unwrap().into_payload().is_err(),
                "{text}"
            );
        }
        let ok = parse_inbound(r#"{"type":"inject_gas","v":1.0}"#).unwrap();
        assert_eq!(
            ok.into_payload(),
            Ok(Payload::UiInjection(Injection::Gas(1.0)))
        );
        let split = parse_inbound(r#"{"type":"inject_accel","ax":0.1,"ay":0.2,"az":0.9}"#).unwrap();
        let packed = parse_inbound(r#"{"type":"inject_accel","v":[0.1,0.2,0.9]}"#).unwrap();
        assert_eq!(split.into_payload(), packed.into_payload());
    }

    #[test]
    fn outbound_frames_are_tagged() {
        let ack = Outbound::Ack {
            request: "press_button",
            t_ms: Millis(420),
        };
        assert_eq!(
            ack.to_json(),
            r#"{"type":"ack","request":"press_button","t_ms":420}"#
        );
        let err = Outbound::Error {
            error: "gas out of range".into(),
        };
        assert_eq!(
            err.to_json(),
            r#"{"type":"error","error":"gas out of range"}"#
        );
    }
}
