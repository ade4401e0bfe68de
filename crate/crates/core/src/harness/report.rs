//! Run reports as JSON Lines.
//!
//! Each record is `{"t_ms":..,"kind":..,"payload":{..}}`; the last line is a
//! summary carrying counts, the final state and the effective config. Key
//! order is fixed by the struct layouts, so equal runs produce equal bytes.

use serde::Serialize;

use crate::calibration::CalibrationReference;
use crate::comms::modem::{SessionPhase, TranscriptEntry};
use crate::comms::nmea::GeoFix;
use crate::detectors::{Cause, Trigger};
use crate::escalation::{Command, Phase, SystemState};
use crate::harness::config::Config;
use crate::kernel::Millis;
use crate::sensors::Accel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PollStage {
    Calibration,
    Monitoring,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PollRecord {
    pub stage: PollStage,
    pub ir_closed: bool,
    pub accel: Accel,
    pub gas: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitionRecord {
    pub from: Phase,
    pub to: Phase,
    pub cause: Option<Cause>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum NmeaRecord {
    Fix(GeoFix),
    Ignored { sentence: String },
    Error { sentence: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SmsRecord {
    pub status: SessionPhase,
    pub cause: Cause,
    pub recipient: String,
    pub body: String,
    pub message_ref: Option<u32>,
    pub retries_left: u32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum RecordBody {
    Poll(PollRecord),
    Calibration(CalibrationReference),
    Trigger(Trigger),
    Transition(TransitionRecord),
    Command(Command),
    Nmea(NmeaRecord),
    Button {},
    Injection {
        channel: &'static str,
        value: serde_json::Value,
    },
    Reset {},
    Modem(TranscriptEntry),
    Sms(SmsRecord),
    InvariantViolation {
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t_ms: Millis,
    #[serde(flatten)]
    pub body: RecordBody,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub scenario: String,
    pub seed: Option<u64>,
    pub records: Vec<Record>,
    pub final_state: SystemState,
    pub config: Config,
}

#[derive(Serialize)]
struct Summary<'a> {
    transitions: usize,
    triggers: usize,
    commands: usize,
    sms_commands: usize,
    sms_delivered: usize,
    sms_failed: usize,
    polls: usize,
    invariant_violations: usize,
    scenario: &'a str,
    seed: Option<u64>,
    final_state: &'a SystemState,
    config: &'a Config,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    summary: Summary<'a>,
}

impl Report {
    pub fn count(&self, pred: impl Fn(&RecordBody) -> bool) -> usize {
        self.records.iter().filter(|r| pred(&r.body)).count()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (Millis, &TransitionRecord)> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Transition(tr) => Some((r.t_ms, tr)),
            _ => None,
        })
    }

    pub fn commands(&self) -> impl Iterator<Item = (Millis, &Command)> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Command(c) => Some((r.t_ms, c)),
            _ => None,
        })
    }

    pub fn triggers(&self) -> impl Iterator<Item = &Trigger> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Trigger(t) => Some(t),
            _ => None,
        })
    }

    pub fn send_sms_times(&self) -> Vec<Millis> {
        self.commands()
            .filter(|(_, c)| matches!(c, Command::SendSms { .. }))
            .map(|(t, _)| t)
            .collect()
    }

    pub fn sms_outcomes(&self) -> impl Iterator<Item = &SmsRecord> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Sms(s) => Some(s),
            _ => None,
        })
    }

    fn summary(&self) -> Summary<'_> {
        Summary {
            transitions: self.count(|b| matches!(b, RecordBody::Transition(_))),
            triggers: self.count(|b| matches!(b, RecordBody::Trigger(_))),
            commands: self.count(|b| matches!(b, RecordBody::Command(_))),
            sms_commands: self.send_sms_times().len(),
            sms_delivered: self
                .sms_outcomes()
                .filter(|s| s.status == SessionPhase::Done)
                .count(),
            sms_failed: self
                .sms_outcomes()
                .filter(|s| s.status == SessionPhase::Failed)
                .count(),
            polls: self.count(|b| matches!(b, RecordBody::Poll(_))),
            invariant_violations: self
                .count(|b| matches!(b, RecordBody::InvariantViolation { .. })),
            scenario: &self.scenario,
            seed: self.seed,
            final_state: &self.final_state,
            config: &self.config,
        }
    }
}

/// Serialises one record as a single JSON line (no trailing newline).
pub fn record_json(record: &Record) -> String {
    serde_json::to_string(record).expect("report records always serialise")
}

pub fn emit_report(report: &Report) -> String {
    let mut out = String::new();
    for r in &report.records {
        out.push_str(&record_json(r));
        out.push('\n');
    }
    let summary = SummaryLine {
        summary: report.summary(),
    };
    out.push_str(&serde_json::to_string(&summary).expect("summary always serialises"));
    out.push('\n');
    out
}
