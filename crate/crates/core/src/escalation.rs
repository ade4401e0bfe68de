//! Alarm state machine and actuator commands.
//!
//! ```text
//! CALIBRATING --CalibrationDone--> MONITORING
//! MONITORING  --fatigue trigger--> FATIGUE_ALERT (deadline = t + escape window)
//! MONITORING  --alcohol trigger--> DISTRESS
//! FATIGUE_ALERT --button, t < deadline--> MONITORING
//! FATIGUE_ALERT --escape timer at deadline | alcohol--> DISTRESS
//! DISTRESS is latched until a whole-system reset.
//! ```

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::detectors::{Cause, Trigger};
use crate::kernel::Millis;

pub const DEFAULT_ESCAPE_WINDOW_MS: u64 = 10_000;
pub const DEFAULT_DISTRESS_TEXT: &str = "HELP";
pub const LCD_WIDTH: usize = 16;
pub const DISPLAY_DIGITS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Calibrating,
    Monitoring,
    FatigueAlert,
    Distress,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Calibrating => "CALIBRATING",
            Phase::Monitoring => "MONITORING",
            Phase::FatigueAlert => "FATIGUE_ALERT",
            Phase::Distress => "DISTRESS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SystemState {
    pub phase: Phase,
    pub cause: Option<Cause>,
    pub alert_deadline: Option<Millis>,
    pub latched: bool,
    pub sms_sent: bool,
}

impl Default for SystemState {
    fn default() -> Self {
        SystemState::reset()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    Escape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsmInput {
    Trigger(Trigger),
    ButtonPress,
    TimerExpiry(TimerKind),
    CalibrationDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelayTarget {
    DisplayBoard,
}

/// Side effects requested by the state machine, in emission order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "command", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Command {
    SpeakerOn,
    SpeakerOff,
    RelayOn { target: RelayTarget },
    LcdStatus { line1: LcdLine, line2: LcdLine },
    DisplayShow { text: String },
    SendSms { cause: Cause, at: Millis },
}

/// Exactly 16 characters, space padded; longer input is cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LcdLine(String);

impl LcdLine {
    pub fn new(text: &str) -> Self {
        let mut s: String = text.chars().take(LCD_WIDTH).collect();
        while s.chars().count() < LCD_WIDTH {
            s.push(' ');
        }
        LcdLine(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Serialize for LcdLine {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscalationConfig {
    pub escape_window_ms: u64,
    pub distress_text: String,
}

impl Default for EscalationConfig {
    fn default() -> Self {
        EscalationConfig {
            escape_window_ms: DEFAULT_ESCAPE_WINDOW_MS,
            distress_text: DEFAULT_DISTRESS_TEXT.to_string(),
        }
    }
}

impl SystemState {
    /// State right after power-on or a whole-system reset.
    pub fn reset() -> Self {
        SystemState {
            phase: Phase::Calibrating,
            cause: None,
            alert_deadline: None,
            latched: false,
            sms_sent: false,
        }
    }

    fn with_phase(phase: Phase) -> Self {
        SystemState {
            phase,
            ..SystemState::reset()
        }
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.alert_deadline.is_some() != (self.phase == Phase::FatigueAlert) {
            return Err(format!(
                "alert_deadline {:?} inconsistent with phase {}",
                self.alert_deadline,
                self.phase.as_str()
            ));
        }
        if self.latched != (self.phase == Phase::Distress) {
            return Err(format!(
                "latched={} inconsistent with phase {}",
                self.latched,
                self.phase.as_str()
            ));
        }
        if self.sms_sent && self.phase != Phase::Distress {
            return Err("sms_sent outside DISTRESS".into());
        }
        if self.phase == Phase::FatigueAlert && self.cause == Some(Cause::Alcohol) {
            return Err("alcohol cause inside an escape window".into());
        }
        match self.phase {
            Phase::FatigueAlert | Phase::Distress if self.cause.is_none() => {
                Err(format!("phase {} without a cause", self.phase.as_str()))
            }
            Phase::Calibrating | Phase::Monitoring if self.cause.is_some() => {
                Err(format!("phase {} carries a cause", self.phase.as_str()))
            }
            _ => Ok(()),
        }
    }

    /// One transition. Inputs that do not apply in the current phase leave
    /// the state untouched and emit nothing.
    pub fn step(
        &self,
        input: FsmInput,
        t: Millis,
        cfg: &EscalationConfig,
    ) -> (SystemState, Vec<Command>) {
        use Phase::*;
        match (self.phase, input) {
            (Calibrating, FsmInput::CalibrationDone) => {
                let next = SystemState::with_phase(Monitoring);
                let lcd = lcd_command(&next, t);
                (next, vec![lcd])
            }
            (Monitoring, FsmInput::Trigger(trig)) if trig.cause.is_fatigue() => {
                let next = SystemState {
                    phase: FatigueAlert,
                    cause: Some(trig.cause),
                    alert_deadline: Some(t + cfg.escape_window_ms),
                    ..*self
                };
                let lcd = lcd_command(&next, t);
                (next, vec![Command::SpeakerOn, lcd])
            }
            (Monitoring, FsmInput::Trigger(trig)) => {
                let (next, mut cmds) = distress(trig.cause, t, cfg);
                cmds.insert(0, Command::SpeakerOn);
                (next, cmds)
            }
            (FatigueAlert, FsmInput::ButtonPress) if self.alert_deadline.is_some_and(|d| t < d) => {
                let next = SystemState::with_phase(Monitoring);
                let lcd = lcd_command(&next, t);
                (next, vec![Command::SpeakerOff, lcd])
            }
            (FatigueAlert, FsmInput::TimerExpiry(TimerKind::Escape))
                if self.alert_deadline.is_some_and(|d| t >= d) =>
            {
                distress(self.cause.unwrap_or(Cause::EyesClosed), t, cfg)
            }
            (FatigueAlert, FsmInput::Trigger(trig)) if trig.cause == Cause::Alcohol => {
                distress(Cause::Alcohol, t, cfg)
            }
            _ => (*self, Vec::new()),
        }
    }
}

fn distress(cause: Cause, t: Millis, cfg: &EscalationConfig) -> (SystemState, Vec<Command>) {
    let next = SystemState {
        phase: Phase::Distress,
        cause: Some(cause),
        alert_deadline: None,
        latched: true,
        sms_sent: true,
    };
    let cmds = vec![
        Command::RelayOn {
            target: RelayTarget::DisplayBoard,
        },
        Command::DisplayShow {
            text: cfg.distress_text.clone(),
        },
        Command::SendSms { cause, at: t },
        lcd_command(&next, t),
    ];
    (next, cmds)
}

fn lcd_command(state: &SystemState, now: Millis) -> Command {
    let (line1, line2) = render_lcd(state, now);
    Command::LcdStatus { line1, line2 }
}

/// Pure transition; same as [`SystemState::step`].
pub fn fsm_step(
    state: &SystemState,
    input: FsmInput,
    t: Millis,
    cfg: &EscalationConfig,
) -> (SystemState, Vec<Command>) {
    state.step(input, t, cfg)
}

/// The escape button is a single edge; one press is all it takes.
pub fn press_escape(
    state: &SystemState,
    t: Millis,
    cfg: &EscalationConfig,
) -> (SystemState, Vec<Command>) {
    state.step(FsmInput::ButtonPress, t, cfg)
}

/// Milliseconds left in the escape window, zero outside FATIGUE_ALERT.
pub fn countdown_ms(state: &SystemState, now: Millis) -> u64 {
    state
        .alert_deadline
        .map_or(0, |d| d.saturating_sub(now).as_u64())
}

pub fn render_lcd(state: &SystemState, now: Millis) -> (LcdLine, LcdLine) {
    match state.phase {
        Phase::Calibrating => (LcdLine::new("CALIBRATING"), LcdLine::new("HOLD STILL")),
        Phase::Monitoring => (LcdLine::new("MONITORING"), LcdLine::new("ALL NOMINAL")),
        Phase::FatigueAlert => {
            let secs = countdown_ms(state, now) / 1000;
            (
                LcdLine::new("FATIGUE ALERT"),
                LcdLine::new(&format!("PRESS BTN {secs}s")),
            )
        }
        Phase::Distress => (LcdLine::new("DISTRESS"), LcdLine::new("SMS SENT")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DisplayError {
    #[error("glyph {0:?} cannot be drawn on a seven-segment digit")]
    UnrenderableGlyph(char),
    #[error("display text must be exactly {DISPLAY_DIGITS} characters, got {0}")]
    WrongLength(usize),
}

/// Segment mask for one glyph, bit 0 = segment a through bit 6 = segment g.
pub fn glyph_segments(c: char) -> Result<u8, DisplayError> {
    let mask = match c {
        ' ' => 0x00,
        '0' => 0x3F,
        '1' => 0x06,
        '2' => 0x5B,
        '3' => 0x4F,
        '4' => 0x66,
        '5' => 0x6D,
        '6' => 0x7D,
        '7' => 0x07,
        '8' => 0x7F,
        '9' => 0x6F,
        'H' => 0x76,
        'E' => 0x79,
        'L' => 0x38,
        'P' => 0x73,
        other => return Err(DisplayError::UnrenderableGlyph(other)),
    };
    Ok(mask)
}

pub fn render_display(text: &str) -> Result<[u8; DISPLAY_DIGITS], DisplayError> {
    let n = text.chars().count();
    if n != DISPLAY_DIGITS {
        return Err(DisplayError::WrongLength(n));
    }
    let mut out = [0u8; DISPLAY_DIGITS];
    for (slot, c) in out.iter_mut().zip(text.chars()) {
        *slot = glyph_segments(c)?;
    }
    Ok(out)
}
