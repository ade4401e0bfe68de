//! Text-mode SMS over AT commands, plus a simulated modem to talk to.
//!
//! Host side dialogue, every command CR-LF terminated:
//!
//! ```text
//! AT                    -> OK
//! AT+CMGF=1             -> OK
//! AT+CMGS="<recipient>" -> "> "
//! <body><0x1A>          -> +CMGS: <ref>, OK
//! ```
//!
//! An `ERROR` (or `+CMS ERROR` / `+CME ERROR`) at any step costs one retry and
//! restarts from `AT`; with no retries left the session fails.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::comms::sms::is_sendable_body;

pub const CTRL_Z: u8 = 0x1A;
const ESC: u8 = 0x1B;
pub const DEFAULT_SMS_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionPhase {
    Idle,
    AwaitOkAte,
    AwaitOkCmgf,
    AwaitPrompt,
    AwaitCmgs,
    Done,
    Failed,
}

impl SessionPhase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionPhase::Done | SessionPhase::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModemError {
    #[error("unexpected modem line {line:?} while in {phase:?}")]
    ProtocolViolation { phase: SessionPhase, line: String },
    #[error("session cannot start from {0:?}")]
    NotIdle(SessionPhase),
    #[error("recipient {0:?} is not an E.164 number")]
    InvalidRecipient(String),
    #[error("message body is longer than 160 characters or not GSM-7 safe")]
    InvalidBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stimulus<'a> {
    Start,
    ModemLine(&'a [u8]),
}

/// Optional leading `+`, then 1 to 15 digits, no leading zero.
pub fn is_e164(number: &str) -> bool {
    let digits = number.strip_prefix('+').unwrap_or(number);
    (1..=15).contains(&digits.len())
        && digits.bytes().all(|b| b.is_ascii_digit())
        && !digits.starts_with('0')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModemSession {
    phase: SessionPhase,
    recipient: String,
    body: String,
    retries_left: u32,
    message_ref: Option<u32>,
}

impl ModemSession {
    pub fn new(recipient: &str, body: &str, retries: u32) -> Result<Self, ModemError> {
        if !is_e164(recipient) {
            return Err(ModemError::InvalidRecipient(recipient.to_string()));
        }
        if !is_sendable_body(body) {
            return Err(ModemError::InvalidBody);
        }
        Ok(ModemSession {
            phase: SessionPhase::Idle,
            recipient: recipient.to_string(),
            body: body.to_string(),
            retries_left: retries,
            message_ref: None,
        })
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn retries_left(&self) -> u32 {
        self.retries_left
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn recipient(&self) -> &str {
        &self.recipient
    }

    /// Reference number the network assigned, once `+CMGS` arrives.
    pub fn message_ref(&self) -> Option<u32> {
        self.message_ref
    }

    /// Advances the dialogue and returns bytes for the modem (possibly none).
    /// A protocol violation fails the session.
    pub fn step(&mut self, stimulus: Stimulus<'_>) -> Result<Vec<u8>, ModemError> {
        let line = match stimulus {
            Stimulus::Start => {
                if self.phase != SessionPhase::Idle {
                    return Err(ModemError::NotIdle(self.phase));
                }
                self.phase = SessionPhase::AwaitOkAte;
                return Ok(b"AT\r\n".to_vec());
            }
            Stimulus::ModemLine(raw) => strip_line_end(raw),
        };
        let text = String::from_utf8_lossy(line);
        let text = text.as_ref();

        if text.is_empty() && self.phase != SessionPhase::AwaitPrompt {
            return Ok(Vec::new());
        }
        if is_error_line(text) && !self.phase.is_terminal() && self.phase != SessionPhase::Idle {
            return Ok(self.retry());
        }

        use SessionPhase::*;
        match (self.phase, text) {
            (AwaitOkAte, "OK") => {
                self.phase = AwaitOkCmgf;
                Ok(b"AT+CMGF=1\r\n".to_vec())
            }
            (AwaitOkCmgf, "OK") => {
                self.phase = AwaitPrompt;
                Ok(format!("AT+CMGS=\"{}\"\r\n", self.recipient).into_bytes())
            }
            (AwaitPrompt, t) if is_prompt(t) => {
                self.phase = AwaitCmgs;
                let mut out = self.body.clone().into_bytes();
                out.push(CTRL_Z);
                Ok(out)
            }
            (AwaitPrompt, "") => Ok(Vec::new()),
            (AwaitCmgs, t) if t.starts_with("+CMGS:") && self.message_ref.is_none() => {
                match t["+CMGS:".len()..].trim().parse() {
                    Ok(r) => {
                        self.message_ref = Some(r);
                        Ok(Vec::new())
                    }
                    Err(_) => Err(self.violation(t)),
                }
            }
            (AwaitCmgs, "OK") if self.message_ref.is_some() => {
                self.phase = Done;
                Ok(Vec::new())
            }
            (_, t) => Err(self.violation(t)),
        }
    }

    fn retry(&mut self) -> Vec<u8> {
        self.message_ref = None;
        if self.retries_left == 0 {
            self.phase = SessionPhase::Failed;
            return Vec::new();
        }
        self.retries_left -= 1;
        self.phase = SessionPhase::AwaitOkAte;
        b"AT\r\n".to_vec()
    }

    fn violation(&mut self, line: &str) -> ModemError {
        let err = ModemError::ProtocolViolation {
            phase: self.phase,
            line: line.to_string(),
        };
        self.phase = SessionPhase::Failed;
        err
    }
}

fn strip_line_end(raw: &[u8]) -> &[u8] {
    let mut end = raw.len();
    while end > 0 && matches!(raw[end - 1], b'\r' | b'\n') {
        end -= 1;
    }
    &raw[..end]
}

fn is_prompt(line: &str) -> bool {
    line.trim_end() == ">"
}

fn is_error_line(line: &str) -> bool {
    line == "ERROR" || line.starts_with("+CMS ERROR") || line.starts_with("+CME ERROR")
}

/// Which modem step a scripted fault hits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultPoint {
    At,
    Cmgf,
    Cmgs,
    Body,
}

/// Scripted misbehaviour for the simulated modem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModemFaultScript {
    /// An unregistered modem rejects every `AT+CMGS`.
    pub registered: bool,
    /// Each entry answers the next matching command with `ERROR`.
    pub error_on: Vec<FaultPoint>,
    /// Delay between a host command and the modem's reply.
    pub latency_ms: u64,
}

impl Default for ModemFaultScript {
    fn default() -> Self {
        ModemFaultScript {
            registered: true,
            error_on: Vec::new(),
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Host to modem.
    Tx,
    /// Modem to host.
    Rx,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub dir: Direction,
    #[serde(serialize_with = "bytes_as_text")]
    pub data: Vec<u8>,
}

fn bytes_as_text<S: Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&String::from_utf8_lossy(data))
}

/// Modem side of the dialogue.
#[derive(Debug, Clone)]
pub struct SimModem {
    registered: bool,
    next_cmgs_ref: u32,
    text_mode: bool,
    awaiting_body: bool,
    rx: Vec<u8>,
    faults: VecDeque<FaultPoint>,
    transcript: Vec<TranscriptEntry>,
}

impl Default for SimModem {
    fn default() -> Self {
        SimModem::new(&ModemFaultScript::default())
    }
}

impl SimModem {
    pub fn new(script: &ModemFaultScript) -> Self {
        SimModem {
            registered: script.registered,
            next_cmgs_ref: 1,
            text_mode: false,
            awaiting_body: false,
            rx: Vec::new(),
            faults: script.error_on.iter().copied().collect(),
            transcript: Vec::new(),
        }
    }

    pub fn registered(&self) -> bool {
        self.registered
    }

    pub fn next_cmgs_ref(&self) -> u32 {
        self.next_cmgs_ref
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    fn log(&mut self, dir: Direction, data: &[u8]) {
        self.transcript.push(TranscriptEntry {
            dir,
            data: data.to_vec(),
        });
    }

    /// Consumes host bytes and returns complete response lines in order.
    pub fn step(&mut self, inbound: &[u8]) -> Vec<Vec<u8>> {
        if !inbound.is_empty() {
            self.log(Direction::Tx, inbound);
        }
        let mut responses = Vec::new();
        for &b in inbound {
            if self.awaiting_body {
                match b {
                    CTRL_Z => {
                        self.awaiting_body = false;
                        self.rx.clear();
                        if self.take_fault(FaultPoint::Body) {
                            responses.push(b"+CMS ERROR: 500\r\n".to_vec());
                        } else {
                            let r = self.next_cmgs_ref;
                            self.next_cmgs_ref += 1;
                            responses.push(format!("+CMGS: {r}\r\n").into_bytes());
                            responses.push(b"OK\r\n".to_vec());
                        }
                    }
                    ESC => {
                        self.awaiting_body = false;
                        self.rx.clear();
                        responses.push(b"OK\r\n".to_vec());
                    }
                    _ => self.rx.push(b),
                }
                continue;
            }
            match b {
                b'\r' => {
                    let cmd = String::from_utf8_lossy(&self.rx).trim().to_string();
                    self.rx.clear();
                    if !cmd.is_empty() {
                        responses.push(self.command(&cmd));
                    }
                }
                b'\n' => {}
                _ => self.rx.push(b),
            }
        }
        for r in &responses {
            self.log(Direction::Rx, r);
        }
        responses
    }

    fn take_fault(&mut self, point: FaultPoint) -> bool {
        match self.faults.iter().position(|&f| f == point) {
            Some(i) => {
                self.faults.remove(i);
                true
            }
            None => false,
        }
    }

    fn command(&mut self, cmd: &str) -> Vec<u8> {
        const OK: &[u8] = b"OK\r\n";
        const ERROR: &[u8] = b"ERROR\r\n";
        let upper = cmd.to_ascii_uppercase();
        if upper == "AT" {
            return if self.take_fault(FaultPoint::At) {
                ERROR
            } else {
                OK
            }
            .to_vec();
        }
        if let Some(mode) = upper.strip_prefix("AT+CMGF=") {
            if self.take_fault(FaultPoint::Cmgf) {
                return ERROR.to_vec();
            }
            return match mode {
                "0" | "1" => {
                    self.text_mode = mode == "1";
                    OK.to_vec()
                }
                _ => ERROR.to_vec(),
            };
        }
        if let Some(arg) = upper.strip_prefix("AT+CMGS=") {
            let quoted = arg.len() >= 2 && arg.starts_with('"') && arg.ends_with('"');
            if self.take_fault(FaultPoint::Cmgs) || !self.registered || !self.text_mode || !quoted {
                return ERROR.to_vec();
            }
            self.awaiting_body = true;
            return b"> ".to_vec();
        }
        ERROR.to_vec()
    }
}

/// How a host/modem pairing ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueOutcome {
    pub phase: SessionPhase,
    pub exchanges: usize,
    pub message_ref: Option<u32>,
}

/// Runs a session against a modem with zero latency until the session ends
/// or `max_exchanges` host transmissions have happened.
pub fn run_dialogue(
    session: &mut ModemSession,
    modem: &mut SimModem,
    max_exchanges: usize,
) -> Result<DialogueOutcome, ModemError> {
    let mut pending: VecDeque<Vec<u8>> = VecDeque::new();
    let mut exchanges = 0;
    let mut out = session.step(Stimulus::Start)?;
    loop {
        if !out.is_empty() {
            if exchanges == max_exchanges {
                break;
            }
            exchanges += 1;
            pending.extend(modem.step(&out));
        }
        if session.phase().is_terminal() {
            break;
        }
        let Some(line) = pending.pop_front() else {
            break;
        };
        out = session.step(Stimulus::ModemLine(&line))?;
    }
    Ok(DialogueOutcome {
        phase: session.phase(),
        exchanges,
        message_ref: session.message_ref(),
    })
}
