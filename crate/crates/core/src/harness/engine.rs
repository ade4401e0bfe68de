//! The assembled unit: kernel, sensors, calibration, detectors, alarm state
//! machine, actuators and the SMS pipeline, all advanced by virtual time.
//!
//! Replay and live sessions drive the same [`Engine`]; they differ only in
//! where sensor frames come from and whether polling stops at a horizon.

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::calibration::{CalibrationReference, Calibrator};
use crate::comms::modem::{
    Direction, ModemSession, SessionPhase, SimModem, Stimulus, TranscriptEntry,
};
use crate::comms::nmea::{parse_nmea, GeoFix, NmeaOutcome};
use crate::comms::sms::compose_sms;
use crate::detectors::{Cause, DetectorBank};
use crate::escalation::{
    countdown_ms, render_lcd, Command, EscalationConfig, FsmInput, LcdLine, Phase, SystemState,
    TimerKind,
};
use crate::harness::config::Config;
use crate::harness::report::{
    NmeaRecord, PollRecord, PollStage, Record, RecordBody, Report, SmsRecord, TransitionRecord,
};
use crate::kernel::{EventHandle, Kernel, KernelError, Millis, TimedEvent};
use crate::sensors::{gas_in_range, sample_at, Accel, ChannelValues, Scenario, SensorFrame};

/// Upper bound on host transmissions in one SMS dialogue.
pub const MAX_MODEM_EXCHANGES: usize = 40;

/// Driver-side stimulus arriving outside the poll loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    Ir(bool),
    Accel(Accel),
    Gas(f64),
    Reset,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    SensorPoll,
    ButtonPress,
    NmeaLine(String),
    UiInjection(Injection),
    TimerExpiry(TimerKind),
    ModemReply(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RangeError {
    #[error("ir value must be 0 or 1")]
    Ir,
    #[error("accel out of range")]
    Accel,
    #[error("gas out of range")]
    Gas,
}

impl Injection {
    pub fn validate(&self) -> Result<(), RangeError> {
        match self {
            Injection::Accel(a) if !a.in_range() => Err(RangeError::Accel),
            Injection::Gas(g) if !gas_in_range(*g) => Err(RangeError::Gas),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
enum FrameSource {
    Scenario(Scenario),
    Live(ChannelValues),
}

impl FrameSource {
    fn frame_at(&self, t: Millis) -> SensorFrame {
        match self {
            FrameSource::Scenario(s) => sample_at(s, t),
            FrameSource::Live(held) => held.frame(t),
        }
    }
}

/// What the outward-facing hardware is doing right now.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Actuators {
    pub speaker: bool,
    pub relay: bool,
    pub display: String,
    pub lcd: (LcdLine, LcdLine),
}

impl Default for Actuators {
    fn default() -> Self {
        let (l1, l2) = render_lcd(&SystemState::reset(), Millis::ZERO);
        Actuators {
            speaker: false,
            relay: false,
            display: "    ".to_string(),
            lcd: (l1, l2),
        }
    }
}

#[derive(Debug, Clone)]
struct SmsDispatch {
    cause: Cause,
    session: ModemSession,
    modem: SimModem,
    transmissions: usize,
    finished: bool,
}

/// Live state as pushed to the cockpit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub phase: Phase,
    pub countdown_ms: u64,
    pub lcd: [String; 2],
    pub display: String,
    pub window_fill: WindowFill,
    pub t_ms: Millis,
    pub cause: Option<Cause>,
    pub speaker: bool,
    pub relay: bool,
    pub reference: Option<Accel>,
    pub calibration_progress: usize,
    pub last_fix: Option<GeoFix>,
    pub sms: Option<SmsView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowFill {
    pub blink: usize,
    pub tilt: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SmsView {
    pub body: String,
    pub status: SessionPhase,
}

/// Live-session input log, kept so a session can be re-run as a scenario.
#[derive(Debug, Clone, Default)]
struct InputLog {
    lines: Vec<(Millis, u8, String)>,
}

pub struct Engine {
    config: Config,
    escalation: EscalationConfig,
    kernel: Kernel<Payload>,
    source: FrameSource,
    horizon: Option<Millis>,
    state: SystemState,
    calibrator: Calibrator,
    reference: Option<CalibrationReference>,
    detectors: DetectorBank,
    escape_timer: Option<EventHandle>,
    last_fix: Option<GeoFix>,
    sms: Option<SmsDispatch>,
    actuators: Actuators,
    records: Vec<Record>,
    last_poll_at: Option<Millis>,
    input_log: InputLog,
}

impl Engine {
    fn new(config: Config, source: FrameSource, horizon: Option<Millis>) -> Engine {
        let mut kernel = Kernel::new();
        kernel
            .schedule(Payload::SensorPoll, Millis::ZERO)
            .expect("fresh kernel accepts t=0");
        Engine {
            escalation: config.escalation_config(),
            calibrator: Calibrator::new(config.calib_samples),
            detectors: DetectorBank::new(&config.detector_config()),
            config,
            kernel,
            source,
            horizon,
            state: SystemState::reset(),
            reference: None,
            escape_timer: None,
            last_fix: None,
            sms: None,
            actuators: Actuators::default(),
            records: Vec::new(),
            last_poll_at: None,
            input_log: InputLog::default(),
        }
    }

    /// Engine that reads frames from `scenario` and polls up to its duration.
    pub fn replay(config: Config, scenario: Scenario) -> Engine {
        let horizon = scenario.duration;
        Engine::new(config, FrameSource::Scenario(scenario), Some(horizon))
    }

    /// Engine fed by injections, polling indefinitely.
    pub fn live(config: Config) -> Engine {
        Engine::new(config, FrameSource::Live(ChannelValues::default()), None)
    }

    pub fn now(&self) -> Millis {
        self.kernel.now()
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Hands over the records logged so far; live sessions call this to keep
    /// memory bounded.
    pub fn take_records(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.records)
    }

    pub fn reference(&self) -> Option<&CalibrationReference> {
        self.reference.as_ref()
    }

    pub fn actuators(&self) -> &Actuators {
        &self.actuators
    }

    pub fn last_fix(&self) -> Option<&GeoFix> {
        self.last_fix.as_ref()
    }

    pub fn detectors(&self) -> &DetectorBank {
        &self.detectors
    }

    /// Fires every event due at or before `t`.
    pub fn advance_to(&mut self, t: Millis) -> Result<(), KernelError> {
        while let Some(ev) = self.kernel.pop_due(t)? {
            self.handle(ev);
        }
        self.kernel.advance_until(t)?;
        Ok(())
    }

    /// Queues `payload` at `at` behind anything already scheduled there.
    pub fn schedule(&mut self, payload: Payload, at: Millis) -> Result<EventHandle, KernelError> {
        self.kernel.schedule(payload, at)
    }

    /// Applies a live stimulus at the current instant and returns that instant.
    pub fn inject(&mut self, payload: Payload) -> Result<Millis, RangeError> {
        if let Payload::UiInjection(inj) = &payload {
            inj.validate()?;
        }
        let now = self.now();
        self.log_input(now, &payload);
        self.kernel
            .schedule(payload, now)
            .expect("scheduling at now never fails");
        self.advance_to(now)
            .expect("advancing to now never reverses");
        Ok(now)
    }

    /// Fires remaining modem replies after the run horizon. Anything else still
    /// pending (an escape timer, say) lies beyond the run and is dropped.
    pub fn drain_modem(&mut self) {
        while let Some(at) = self.kernel.peek_next_at() {
            let Ok(Some(ev)) = self.kernel.pop_due(at) else {
                break;
            };
            if matches!(ev.payload, Payload::ModemReply(_)) {
                self.handle(ev);
            }
        }
    }

    pub fn into_report(self, scenario: String, seed: Option<u64>) -> Report {
        Report {
            scenario,
            seed,
            records: self.records,
            final_state: self.state,
            config: self.config,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let now = self.now();
        let (l1, l2) = render_lcd(&self.state, now);
        Snapshot {
            phase: self.state.phase,
            countdown_ms: countdown_ms(&self.state, now),
            lcd: [l1.as_str().to_string(), l2.as_str().to_string()],
            display: self.actuators.display.clone(),
            window_fill: WindowFill {
                blink: self.detectors.blink.state().collected(),
                tilt: self.detectors.tilt.state().collected(),
            },
            t_ms: now,
            cause: self.state.cause,
            speaker: self.actuators.speaker,
            relay: self.actuators.relay,
            reference: self.reference.map(|r| r.origin),
            calibration_progress: self.calibrator.collected(),
            last_fix: self.last_fix.clone(),
            sms: self.sms.as_ref().map(|d| SmsView {
                body: d.session.body().to_string(),
                status: d.session.phase(),
            }),
        }
    }

    /// The live inputs so far as a scenario file. Re-running it reproduces the
    /// session's transitions; inputs that landed after a poll at the same
    /// instant are shifted 1 ms later so the replayed poll sees the old value.
    pub fn recorded_scenario(&self) -> String {
        let duration = self
            .input_log
            .lines
            .iter()
            .map(|e| e.0)
            .fold(self.now(), Millis::max);
        let mut out = format!(
            "{}\n",
            json!({"meta": {"name": "recorded-live-session", "duration_ms": duration.as_u64()}})
        );
        // Channel set points sharing a timestamp collapse to the last one.
        let mut kept: Vec<&(Millis, u8, String)> = Vec::new();
        for entry in &self.input_log.lines {
            if entry.1 < 3 {
                kept.retain(|e| !(e.0 == entry.0 && e.1 == entry.1));
            }
            kept.push(entry);
        }
        kept.sort_by_key(|e| e.0);
        for (_, _, text) in kept {
            out.push_str(text);
            out.push('\n');
        }
        out
    }

    fn log_input(&mut self, now: Millis, payload: &Payload) {
        let at = if self.last_poll_at == Some(now) {
            now + 1
        } else {
            now
        };
        let t = at.as_u64();
        let (ord, text) = match payload {
            Payload::UiInjection(Injection::Ir(v)) => {
                (0, json!({"t_ms": t, "ch": "ir", "v": u8::from(*v)}))
            }
            Payload::UiInjection(Injection::Accel(a)) => {
                (1, json!({"t_ms": t, "ch": "accel", "v": a.components()}))
            }
            Payload::UiInjection(Injection::Gas(g)) => (2, json!({"t_ms": t, "ch": "gas", "v": g})),
            // Discrete events keep their exact instant: they fire after the poll
            // in both modes.
            Payload::NmeaLine(s) => (3, json!({"t_ms": now.as_u64(), "ev": "nmea", "v": s})),
            Payload::ButtonPress => (4, json!({"t_ms": now.as_u64(), "ev": "button"})),
            Payload::UiInjection(Injection::Reset) => {
                // A reset starts a fresh recording.
                self.input_log.lines.clear();
                return;
            }
            _ => return,
        };
        let at = if ord >= 3 { now } else { at };
        self.input_log.lines.push((at, ord, text.to_string()));
    }

    fn record(&mut self, body: RecordBody) {
        self.records.push(Record {
            t_ms: self.kernel.now(),
            body,
        });
    }

    fn handle(&mut self, ev: TimedEvent<Payload>) {
        let t = ev.at;
        match ev.payload {
            Payload::SensorPoll => self.poll(t),
            Payload::ButtonPress => {
                self.record(RecordBody::Button {});
                self.apply(FsmInput::ButtonPress, t);
            }
            Payload::NmeaLine(line) => self.nmea(line, t),
            Payload::UiInjection(inj) => self.injection(inj),
            Payload::TimerExpiry(kind) => {
                if kind == TimerKind::Escape {
                    self.escape_timer = None;
                }
                self.apply(FsmInput::TimerExpiry(kind), t);
            }
            Payload::ModemReply(line) => self.modem_reply(line),
        }
    }

    fn poll(&mut self, t: Millis) {
        self.last_poll_at = Some(t);
        let next = t + self.config.sample_period_ms;
        if self.horizon.is_none_or(|h| next <= h) {
            self.kernel
                .schedule(Payload::SensorPoll, next)
                .expect("next poll lies in the future");
        }

        let frame = self.source.frame_at(t);
        let stage = if self.state.phase == Phase::Calibrating {
            PollStage::Calibration
        } else {
            PollStage::Monitoring
        };
        self.record(RecordBody::Poll(PollRecord {
            stage,
            ir_closed: frame.ir_closed,
            accel: frame.accel,
            gas: frame.gas,
        }));

        if stage == PollStage::Calibration {
            match self.calibrator.push(t, frame.accel) {
                Some(Ok(reference)) => {
                    self.reference = Some(reference);
                    self.record(RecordBody::Calibration(reference));
                    self.apply(FsmInput::CalibrationDone, t);
                }
                Some(Err(e)) => {
                    self.record(RecordBody::InvariantViolation {
                        detail: format!("calibration failed: {e}"),
                    });
                    self.calibrator = Calibrator::new(self.config.calib_samples);
                }
                None => {}
            }
            return;
        }

        match self.detectors.detect(&frame, self.reference.as_ref()) {
            Ok(triggers) => {
                for trig in triggers {
                    self.record(RecordBody::Trigger(trig));
                    self.apply(FsmInput::Trigger(trig), t);
                }
            }
            Err(e) => self.record(RecordBody::InvariantViolation {
                detail: e.to_string(),
            }),
        }
    }

    fn nmea(&mut self, line: String, t: Millis) {
        let rec = match parse_nmea(&line, t) {
            Ok(NmeaOutcome::Fix(fix)) => {
                if fix.valid {
                    self.last_fix = Some(fix.clone());
                }
                NmeaRecord::Fix(fix)
            }
            Ok(NmeaOutcome::Ignored) => NmeaRecord::Ignored { sentence: line },
            Err(e) => NmeaRecord::Error {
                sentence: line,
                error: e.to_string(),
            },
        };
        self.record(RecordBody::Nmea(rec));
    }

    fn injection(&mut self, inj: Injection) {
        let (channel, value) = match &inj {
            Injection::Ir(v) => ("ir", json!(u8::from(*v))),
            Injection::Accel(a) => ("accel", json!(a.components())),
            Injection::Gas(g) => ("gas", json!(g)),
            Injection::Reset => {
                self.reset();
                return;
            }
        };
        self.record(RecordBody::Injection { channel, value });
        if let FrameSource::Live(held) = &mut self.source {
            match inj {
                Injection::Ir(v) => held.ir_closed = v,
                Injection::Accel(a) => held.accel = a,
                Injection::Gas(g) => held.gas = g,
                Injection::Reset => {}
            }
        }
    }

    /// Whole-system reset: the only way out of a latched distress.
    fn reset(&mut self) {
        if let Some(h) = self.escape_timer.take() {
            self.kernel.cancel(h);
        }
        let from = self.state.phase;
        self.state = SystemState::reset();
        self.calibrator = Calibrator::new(self.config.calib_samples);
        self.reference = None;
        self.detectors = DetectorBank::new(&self.config.detector_config());
        self.sms = None;
        self.actuators = Actuators::default();
        self.record(RecordBody::Reset {});
        if from != Phase::Calibrating {
            self.record(RecordBody::Transition(TransitionRecord {
                from,
                to: Phase::Calibrating,
                cause: None,
            }));
        }
    }

    fn apply(&mut self, input: FsmInput, t: Millis) {
        let (next, commands) = self.state.step(input, t, &self.escalation);
        let prev = self.state;
        self.state = next;

        if next.phase != prev.phase {
            self.record(RecordBody::Transition(TransitionRecord {
                from: prev.phase,
                to: next.phase,
                cause: next.cause,
            }));
            if prev.phase == Phase::FatigueAlert {
                if let Some(h) = self.escape_timer.take() {
                    self.kernel.cancel(h);
                }
            }
            if let (Phase::FatigueAlert, Some(deadline)) = (next.phase, next.alert_deadline) {
                let h = self
                    .kernel
                    .schedule(Payload::TimerExpiry(TimerKind::Escape), deadline)
                    .expect("deadline is never in the past");
                self.escape_timer = Some(h);
            }
        }
        if let Err(detail) = next.check_invariants() {
            self.record(RecordBody::InvariantViolation { detail });
        }

        for cmd in commands {
            self.record(RecordBody::Command(cmd.clone()));
            self.actuate(cmd, t);
        }
    }

    fn actuate(&mut self, cmd: Command, t: Millis) {
        match cmd {
            Command::SpeakerOn => self.actuators.speaker = true,
            Command::SpeakerOff => self.actuators.speaker = false,
            Command::RelayOn { .. } => self.actuators.relay = true,
            Command::LcdStatus { line1, line2 } => self.actuators.lcd = (line1, line2),
            Command::DisplayShow { text } => self.actuators.display = text,
            Command::SendSms { cause, at } => self.start_sms(cause, at.max(t)),
        }
    }

    fn start_sms(&mut self, cause: Cause, t: Millis) {
        if self.sms.is_some() {
            self.record(RecordBody::InvariantViolation {
                detail: "second SMS requested before reset".into(),
            });
            return;
        }
        let body = compose_sms(cause, self.last_fix.as_ref(), t);
        let mut session =
            match ModemSession::new(&self.config.recipient, &body, self.config.sms_retries) {
                Ok(s) => s,
                Err(e) => {
                    self.record(RecordBody::Sms(SmsRecord {
                        status: SessionPhase::Failed,
                        cause,
                        recipient: self.config.recipient.clone(),
                        body,
                        message_ref: None,
                        retries_left: 0,
                        error: Some(e.to_string()),
                    }));
                    return;
                }
            };
        let first = session.step(Stimulus::Start).expect("fresh session starts");
        self.sms = Some(SmsDispatch {
            cause,
            session,
            modem: SimModem::new(&self.config.fault_script()),
            transmissions: 0,
            finished: false,
        });
        self.transmit(first);
    }

    fn transmit(&mut self, bytes: Vec<u8>) {
        if bytes.is_empty() {
            return;
        }
        let latency = self.config.fault_script().latency_ms;
        let now = self.kernel.now();
        let Some(dispatch) = self.sms.as_mut() else {
            return;
        };
        dispatch.transmissions += 1;
        let replies = dispatch.modem.step(&bytes);
        self.record(RecordBody::Modem(TranscriptEntry {
            dir: Direction::Tx,
            data: bytes,
        }));
        for line in replies {
            self.kernel
                .schedule(Payload::ModemReply(line), now + latency)
                .expect("reply lies in the future");
        }
    }

    fn modem_reply(&mut self, line: Vec<u8>) {
        let Some(dispatch) = self.sms.as_mut() else {
            return;
        };
        if dispatch.finished {
            return;
        }
        let result = dispatch.session.step(Stimulus::ModemLine(&line));
        let over_budget = dispatch.transmissions >= MAX_MODEM_EXCHANGES;
        self.record(RecordBody::Modem(TranscriptEntry {
            dir: Direction::Rx,
            data: line,
        }));
        match result {
            Ok(out) if !out.is_empty() && over_budget => {
                self.finish_sms(Some(format!(
                    "gave up after {MAX_MODEM_EXCHANGES} exchanges"
                )));
            }
            Ok(out) => {
                self.transmit(out);
                if self
                    .sms
                    .as_ref()
                    .is_some_and(|d| d.session.phase().is_terminal())
                {
                    self.finish_sms(None);
                }
            }
            Err(e) => self.finish_sms(Some(e.to_string())),
        }
    }

    fn finish_sms(&mut self, error: Option<String>) {
        let Some(dispatch) = self.sms.as_mut() else {
            return;
        };
        dispatch.finished = true;
        let status = if dispatch.session.phase() == SessionPhase::Done {
            SessionPhase::Done
        } else {
            SessionPhase::Failed
        };
        let rec = SmsRecord {
            status,
            cause: dispatch.cause,
            recipient: dispatch.session.recipient().to_string(),
            body: dispatch.session.body().to_string(),
            message_ref: dispatch.session.message_ref(),
            retries_left: dispatch.session.retries_left(),
            error,
        };
        self.record(RecordBody::Sms(rec));
    }
}

/// Replays a scenario, inserting its discrete events just in time so that
/// anything already queued for the same instant (polls, escape timers) fires
/// first.
pub struct Replay {
    engine: Engine,
    name: String,
    duration: Millis,
    externals: Vec<(Millis, Payload)>,
    next_external: usize,
}

impl Replay {
    pub fn new(config: Config, scenario: Scenario) -> Replay {
        let mut externals: Vec<(Millis, u8, Payload)> = scenario
            .nmea
            .iter()
            .map(|(t, s)| (*t, 0, Payload::NmeaLine(s.clone())))
            .chain(
                scenario
                    .buttons
                    .iter()
                    .map(|t| (*t, 1, Payload::ButtonPress)),
            )
            .collect();
        externals.sort_by_key(|(t, ord, _)| (*t, *ord));
        Replay {
            name: scenario.name.clone(),
            duration: scenario.duration,
            externals: externals.into_iter().map(|(t, _, p)| (t, p)).collect(),
            next_external: 0,
            engine: Engine::replay(config, scenario),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn duration(&self) -> Millis {
        self.duration
    }

    pub fn is_finished(&self) -> bool {
        self.engine.now() >= self.duration
    }

    pub fn advance_to(&mut self, t: Millis) -> Result<(), KernelError> {
        let t = t.min(self.duration);
        while let Some((at, _)) = self.externals.get(self.next_external) {
            let at = *at;
            if at > t {
                break;
            }
            if at > Millis::ZERO {
                self.engine.advance_to(Millis(at.0 - 1))?;
            }
            while let Some((_, payload)) = self
                .externals
                .get(self.next_external)
                .filter(|(a, _)| *a == at)
            {
                let payload = payload.clone();
                self.engine.schedule(payload, at)?;
                self.next_external += 1;
            }
        }
        self.engine.advance_to(t)
    }

    pub fn finish(mut self, seed: Option<u64>) -> Result<Report, KernelError> {
        self.advance_to(self.duration)?;
        self.engine.drain_modem();
        Ok(self.engine.into_report(self.name, seed))
    }
}
