use proptest::prelude::*;

use ssm_core::controller::{Gains, JointServo, ModeKind, ServoConfig};
use ssm_core::kinematics::JointVector;
use ssm_core::stability::{
    check_segment, check_trace, discrete_derivative, lyapunov_value, StabilityError,
    StabilityPoint, DEFAULT_EPS_REL,
};

fn point(t: f64, v: f64, mode: ModeKind, regulating: bool) -> StabilityPoint {
    StabilityPoint { t, v, mode, regulating }
}

#[test]
fn lyapunov_examples() {
    let z = JointVector::zeros();
    assert_eq!(lyapunov_value(&z, &z, &Gains::default()), 0.0);
    let unit = Gains { kp: [1.0; 6], ..Gains::default() };
    let e = JointVector::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    assert_eq!(lyapunov_value(&e, &z, &unit), 0.5);
}

#[test]
fn equilibrium_segment_is_invariant() {
    let pts: Vec<_> = (0..50)
        .map(|i| point(i as f64 * 0.002, 0.0, ModeKind::Standstill, true))
        .collect();
    let v = check_segment(&pts, DEFAULT_EPS_REL).unwrap();
    assert!(v.passed && v.checked && v.invariant_set);
    assert_eq!(v.max_vdot, 0.0);
}

#[test]
fn mixed_segment_is_rejected() {
    let pts = [
        point(0.0, 1.0, ModeKind::Full, true),
        point(0.1, 1.0, ModeKind::Collaborative, true),
    ];
    assert_eq!(
        check_segment(&pts, DEFAULT_EPS_REL),
        Err(StabilityError::Segmentation { index: 1 })
    );
    assert_eq!(check_segment(&[], DEFAULT_EPS_REL), Err(StabilityError::Empty));
}

/// Step in the reference: the tracking error starts at 0.1 rad on every joint.
fn step_response(ticks: usize) -> Vec<StabilityPoint> {
    let gains = Gains::default();
    let mut servo = JointServo::new(JointVector::zeros(), &gains, 0.002, &ServoConfig::default());
    servo.set_error(JointVector::repeat(0.1), JointVector::zeros());
    let mut pts = vec![point(0.0, servo.lyapunov(), ModeKind::Standstill, true)];
    for k in 1..=ticks {
        servo.step(&JointVector::zeros());
        pts.push(point(k as f64 * 0.002, servo.lyapunov(), ModeKind::Standstill, true));
    }
    pts
}

#[test]
fn pd_step_response_decays_monotonically() {
    let pts = step_response(3000);
    for w in pts.windows(2) {
        assert!(w[1].v <= w[0].v, "V rose at t={}", w[1].t);
    }
    let report = check_trace(&pts, DEFAULT_EPS_REL);
    assert!(report.passed && report.nonnegative && report.invariant_set_detected);
}

#[test]
fn injected_increase_is_flagged() {
    let mut pts = step_response(500);
    pts[250].v *= 1.5;
    let report = check_trace(&pts, DEFAULT_EPS_REL);
    assert!(!report.passed);
    assert_eq!(report.failures().count(), 1);
}

#[test]
fn tracking_segments_are_reported_without_verdict() {
    let pts: Vec<_> = (0..20)
        .map(|i| point(i as f64, i as f64, ModeKind::Full, false))
        .collect();
    let report = check_trace(&pts, DEFAULT_EPS_REL);
    assert!(report.passed);
    assert_eq!(report.checked_segments(), 0);
    assert!(report.segments[0].max_vdot > 0.0);
}

#[test]
fn segments_split_at_mode_switches() {
    let mut pts = step_response(100);
    for p in pts.iter_mut().skip(60) {
        p.mode = ModeKind::Reduced;
    }
    let report = check_trace(&pts, DEFAULT_EPS_REL);
    assert_eq!(report.segments.len(), 2);
    assert_eq!((report.segments[1].start, report.segments[1].end), (60, pts.len()));
}

#[test]
fn derivative_estimator() {
    let t = [0.0, 1.0, 2.0, 4.0];
    let v = [0.0, 1.0, 4.0, 16.0];
    assert_eq!(discrete_derivative(&t, &v), vec![1.0, 2.0, 5.0, 6.0]);
    assert_eq!(discrete_derivative(&[0.0], &[3.0]), vec![0.0]);
}

proptest! {
    #[test]
    fn lyapunov_positive_off_equilibrium(
        e in prop::array::uniform6(-1.0..1.0f64),
        ed in prop::array::uniform6(-1.0..1.0f64),
    ) {
        let e = JointVector::from(e);
        let ed = JointVector::from(ed);
        let v = lyapunov_value(&e, &ed, &Gains::default());
        prop_assert!(v >= 0.0);
        if e.norm() + ed.norm() > 0.0 {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn servo_never_raises_v_under_constant_reference(
        e in prop::array::uniform6(-0.5..0.5f64),
        ed in prop::array::uniform6(-0.5..0.5f64),
        rate in prop::array::uniform6(-0.2..0.2f64),
    ) {
        let gains = Gains::default();
        let mut servo = JointServo::new(JointVector::zeros(), &gains, 0.002, &ServoConfig::default());
        let rate = JointVector::from(rate);
        servo.step(&rate);
        servo.set_error(JointVector::from(e), JointVector::from(ed));
        let mut prev = servo.lyapunov();
        for _ in 0..200 {
            servo.step(&rate);
            let v = servo.lyapunov();
            prop_assert!(v <= prev * (1.0 + 1e-12));
            prev = v;
        }
    }
}
