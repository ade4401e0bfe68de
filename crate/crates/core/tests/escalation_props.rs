use proptest::prelude::*;
use rapu_core::detectors::{Cause, Trigger};
use rapu_core::escalation::{
    fsm_step, glyph_segments, press_escape, render_display, render_lcd, Command, EscalationConfig,
    FsmInput, Phase, SystemState, TimerKind,
};
use rapu_core::Millis;

#[derive(Debug, Clone)]
enum Input {
    Fsm(FsmInput),
    Reset,
}

fn input() -> impl Strategy<Value = Input> {
    let cause = prop_oneof![
        Just(Cause::Alcohol),
        Just(Cause::EyesClosed),
        Just(Cause::HeadTilt)
    ];
    prop_oneof![
        4 => cause.prop_map(|c| Input::Fsm(FsmInput::Trigger(Trigger { cause: c, at: Millis(0) }))),
        4 => Just(Input::Fsm(FsmInput::ButtonPress)),
        3 => Just(Input::Fsm(FsmInput::TimerExpiry(TimerKind::Escape))),
        2 => Just(Input::Fsm(FsmInput::CalibrationDone)),
        1 => Just(Input::Reset),
    ]
}

proptest! {
    #[test]
    fn invariants_latch_and_single_sms(steps in prop::collection::vec((input(), 0u64..12_000), 0..200)) {
        let cfg = EscalationConfig::default();
        let mut state = SystemState::reset();
        let mut t = Millis(0);
        let mut sms_since_reset = 0;
        for (inp, dt) in steps {
            t = t + dt;
            let Input::Fsm(fsm_input) = inp else {
                state = SystemState::reset();
                sms_since_reset = 0;
                continue;
            };
            let (next, cmds) = fsm_step(&state, fsm_input, t, &cfg);
            prop_assert_eq!(fsm_step(&state, fsm_input, t, &cfg), (next, cmds.clone()));
            prop_assert!(next.check_invariants().is_ok(), "{:?}", next.check_invariants());
            if state.phase == Phase::Distress {
                prop_assert_eq!(next, state);
                prop_assert!(cmds.is_empty());
            }
            prop_assert!(!(next.phase == Phase::FatigueAlert && next.cause == Some(Cause::Alcohol)));
            sms_since_reset += cmds.iter().filter(|c| matches!(c, Command::SendSms { .. })).count();
            prop_assert!(sms_since_reset <= 1);
            if let FsmInput::Trigger(trig) = fsm_input {
                if state.phase == Phase::Monitoring && trig.cause == Cause::Alcohol {
                    prop_assert_eq!(next.phase, Phase::Distress);
                }
            }
            state = next;
        }
    }

    #[test]
    fn escape_boundary(offset in 0u64..20_000, window in 1u64..30_000) {
        let cfg = EscalationConfig { escape_window_ms: window, ..Default::default() };
        let t0 = Millis(5000);
        let trig = Trigger { cause: Cause::EyesClosed, at: t0 };
        let (alert, _) = SystemState::reset()
            .step(FsmInput::CalibrationDone, Millis(0), &cfg)
            .0
            .step(FsmInput::Trigger(trig), t0, &cfg);
        prop_assert_eq!(alert.alert_deadline, Some(t0 + window));
        let t = t0 + offset;
        let (after_press, cmds) = press_escape(&alert, t, &cfg);
        if offset < window {
            prop_assert_eq!(after_press.phase, Phase::Monitoring);
            prop_assert_eq!(cmds.first(), Some(&Command::SpeakerOff));
        } else {
            prop_assert_eq!(after_press, alert);
            let (expired, cmds) = alert.step(FsmInput::TimerExpiry(TimerKind::Escape), t, &cfg);
            prop_assert_eq!(expired.phase, Phase::Distress);
            let sms = Command::SendSms { cause: Cause::EyesClosed, at: t };
            prop_assert!(cmds.contains(&sms));
        }
    }
}

#[test]
fn lcd_lines_are_sixteen_wide() {
    let cfg = EscalationConfig::default();
    let alert = SystemState::reset()
        .step(FsmInput::CalibrationDone, Millis(0), &cfg)
        .0
        .step(
            FsmInput::Trigger(Trigger {
                cause: Cause::HeadTilt,
                at: Millis(100),
            }),
            Millis(100),
            &cfg,
        )
        .0;
    let (l1, l2) = render_lcd(&alert, Millis(3600));
    assert_eq!(l1.as_str(), "FATIGUE ALERT   ");
    assert_eq!(l2.as_str(), "PRESS BTN 6s    ");
    assert_eq!(l1.as_str().len(), 16);
}

#[test]
fn help_segments() {
    // Segment letters per glyph, bit 0 = a ... bit 6 = g.
    let lit = |segs: &str| segs.bytes().fold(0u8, |m, s| m | 1 << (s - b'a'));
    assert_eq!(glyph_segments('H').unwrap(), lit("bcefg"));
    assert_eq!(glyph_segments('E').unwrap(), lit("adefg"));
    assert_eq!(glyph_segments('L').unwrap(), lit("def"));
    assert_eq!(glyph_segments('P').unwrap(), lit("abefg"));
    assert_eq!(render_display("HELP").unwrap(), [0x76, 0x79, 0x38, 0x73]);
    assert!(render_display("HEL").is_err());
}
