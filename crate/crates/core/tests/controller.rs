use nalgebra::{Matrix6, Vector3, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssm_core::controller::{
    cartesian_to_joint_rates, energy_objective, energy_objective_gradient, pd_joint_control,
    primary_speed_select, scaling_factor, secondary_scale, CommandSource, ControllerConfig, Gains,
    HierarchicalController, ModeKind, SpeedMode, Strategy, TaskDemand,
};
use ssm_core::kinematics::{pseudo_inverse, DampingPolicy, JointVector, RobotModel};
use ssm_core::perception::{skeleton_sample, HumanState};
use ssm_core::zones::{build_zone_layout, Quadrant, QuadrantOccupancy, Zone, ZoneLayout};

fn layout() -> ZoneLayout {
    build_zone_layout(0.6124, 1.5, 0.9, 0.425).unwrap()
}

fn occ(left: Zone, right: Zone) -> QuadrantOccupancy {
    QuadrantOccupancy { left, right }
}

#[test]
fn primary_selection_table() {
    use Zone::*;
    let cases = [
        (Normal, Normal, Quadrant::Left, ModeKind::Full),
        (Normal, Warning, Quadrant::Left, ModeKind::Collaborative),
        (Normal, Danger, Quadrant::Left, ModeKind::Collaborative),
        (Warning, Normal, Quadrant::Left, ModeKind::Collaborative),
        (Danger, Normal, Quadrant::Left, ModeKind::Standstill),
        (Danger, Normal, Quadrant::Right, ModeKind::Collaborative),
        (Normal, Danger, Quadrant::Right, ModeKind::Standstill),
        (Normal, Warning, Quadrant::Both, ModeKind::Collaborative),
        (Normal, Danger, Quadrant::Both, ModeKind::Standstill),
        (Normal, Normal, Quadrant::Both, ModeKind::Full),
    ];
    for (l, r, robot, expected) in cases {
        let m = primary_speed_select(&occ(l, r), robot);
        assert_eq!(m.kind, expected, "{l:?}/{r:?} robot {robot:?}");
    }
    assert_eq!(primary_speed_select(&occ(Normal, Normal), Quadrant::Left).fraction, 1.0);
}

#[test]
fn scaling_factor_landmarks() {
    let l = layout();
    let g = Gains::default();
    let (trig, stop) = (l.trigger_distance, l.stop_distance);
    assert_eq!(scaling_factor(trig, trig, stop, 0.3), 1.0);
    assert!((scaling_factor(0.5 * (trig + stop), trig, stop, 0.3) - 0.65).abs() < 1e-12);
    assert!((scaling_factor(stop, trig, stop, 0.3) - 0.3).abs() < 1e-15);
    assert_eq!(scaling_factor(stop - 1e-9, trig, stop, 0.3), 0.0);

    assert_eq!(secondary_scale(trig, &l, SpeedMode::FULL, &g), SpeedMode::FULL);
    let at_stop = secondary_scale(stop, &l, SpeedMode::FULL, &g);
    assert_eq!(at_stop.kind, ModeKind::Reduced);
    assert!((at_stop.fraction - 0.3).abs() < 1e-15);
}

#[test]
fn zero_task_velocity_and_zero_k0_give_zero_rates() {
    let model = RobotModel::ur5();
    let q = JointVector::new(0.3, 2.0, 1.2, 3.5, 1.5, 1.0);
    let gains = Gains { k0: 0.0, ..Gains::default() };
    let r = cartesian_to_joint_rates(
        &model.jacobian(&q).0,
        &Vector6::zeros(),
        &gains,
        &energy_objective_gradient(&q, &model),
        true,
        &DampingPolicy::default(),
    );
    assert_eq!(r.qdot, JointVector::zeros());
}

#[test]
fn square_jacobian_reduces_to_its_inverse() {
    let model = RobotModel::ur5();
    let q = JointVector::new(0.4636, 4.1261, -1.5839, 2.1702, -1.5708, -3.0732);
    let j = model.jacobian(&q).0;
    let v = Vector6::new(0.1, -0.2, 0.05, 0.0, 0.1, -0.1);
    let gains = Gains { k0: 0.0, ..Gains::default() };
    let r = cartesian_to_joint_rates(&j, &v, &gains, &JointVector::zeros(), true, &DampingPolicy::default());
    assert!(!r.damped);
    let direct = j.try_inverse().unwrap() * v;
    assert!((r.qdot - direct).abs().max() < 1e-9);
}

#[test]
fn null_space_term_is_invisible_in_task_space() {
    let model = RobotModel::ur5();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let gains = Gains::default();
    let policy = DampingPolicy::default();
    let mut checked = 0;
    while checked < 100 {
        let q = JointVector::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let j = model.jacobian(&q).0;
        let (_, damped) = policy.invert(&j);
        if damped {
            continue;
        }
        let v = Vector6::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let w = energy_objective_gradient(&q, &model);
        let r = cartesian_to_joint_rates(&j, &v, &gains, &w, true, &policy);
        let task_only = pseudo_inverse(&j, 0.0) * (gains.lambda_matrix() * v);
        assert!((j * (r.qdot - task_only)).norm() <= 1e-9);
        checked += 1;
    }
}

#[test]
fn energy_gradient_matches_finite_differences() {
    let model = RobotModel::ur5();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-4;
    for _ in 0..100 {
        let q = JointVector::from_fn(|_, _| rng.random_range(-6.0..6.0));
        let g = energy_objective_gradient(&q, &model);
        for i in 0..6 {
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let fd = (energy_objective(&qp, &model) - energy_objective(&qm, &model)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "joint {i}: {fd} vs {}", g[i]);
        }
    }
    let mid = JointVector::from_fn(|i, _| model.joint_limits[i].midpoint());
    assert_eq!(energy_objective_gradient(&mid, &model), JointVector::zeros());
    assert_eq!(energy_objective(&mid, &model), 0.0);
}

#[test]
fn pd_law_examples() {
    let z = JointVector::zeros();
    assert_eq!(pd_joint_control(&z, &z, &Gains::default()), z);
    let unit = Gains { kp: [1.0; 6], kd: [1e-300; 6], ..Gains::default() };
    let e = JointVector::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
    assert_eq!(pd_joint_control(&e, &z, &unit), e);
    let g = Gains::default();
    let g2 = Gains { kp: g.kp.map(|k| 2.0 * k), ..g };
    let e = JointVector::new(0.1, -0.2, 0.3, 0.0, 0.05, -0.01);
    assert_eq!(pd_joint_control(&e, &z, &g2), pd_joint_control(&e, &z, &g) * 2.0);
}

struct Rig {
    c: HierarchicalController,
    model: RobotModel,
    q: JointVector,
    j: Matrix6<f64>,
    tcp: Vector3<f64>,
}

impl Rig {
    fn new(strategy: Strategy) -> Self {
        let cfg = ControllerConfig { strategy, ..ControllerConfig::default() };
        let model = RobotModel::ur5();
        let q = JointVector::new(-0.588, 2.6034, 1.6439, 3.6066, 1.5708, 1.2444);
        let j = model.jacobian(&q).0;
        Self {
            c: HierarchicalController::new(cfg, layout(), 0.030, 1.0 / 30.0),
            model,
            q,
            j,
            tcp: Vector3::new(0.45, -0.30, 0.95),
        }
    }

    fn step(&mut self, k: usize) -> ssm_core::controller::SpeedCommand {
        let demand = TaskDemand {
            twist: Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.0),
            active: true,
        };
        let t = k as f64 * 0.002;
        self.c.step(t, &self.tcp, self.tcp.y, &self.j, &self.q, &self.model, &demand)
    }

    /// Feeds sensors on their grids, with the human at `x(t)` on the robot's side.
    fn drive(&mut self, ticks: usize, x: impl Fn(f64) -> f64) -> Vec<ssm_core::controller::SpeedCommand> {
        let l = layout();
        let mounts = ssm_core::perception::ScannerMount::default_pair(0.425);
        let mut out = Vec::new();
        for k in 0..ticks {
            let t = k as f64 * 0.002;
            let h = HumanState::standing_at(x(t), -0.3);
            if k % 15 == 0 {
                let mut o = QuadrantOccupancy::default();
                for m in &mounts {
                    let scan = ssm_core::perception::simulate_scan(m, &[h], t, None);
                    o = o.merge(&ssm_core::perception::occupancy_of(
                        &ssm_core::perception::scan_to_occupancy(&scan, m, &l),
                    ));
                }
                self.c.on_scan(t, o);
            }
            if (k as f64 * 0.002 * 30.0).fract() < 0.06 || k == 0 {
                self.c.on_skeleton(t, Some(skeleton_sample(&h, t)));
            }
            out.push(self.step(k));
        }
        out
    }
}

#[test]
fn all_clear_commands_nominal_speed() {
    let mut rig = Rig::new(Strategy::Proposed);
    let cmds = rig.drive(1000, |_| 3.0);
    let last = cmds.last().unwrap();
    assert_eq!(last.mode.kind, ModeKind::Full);
    assert_eq!(last.v_cartesian, 1.0);
    assert_eq!(last.source, CommandSource::PrimaryLoop);
}

#[test]
fn approach_descends_and_retreat_recovers() {
    let mut rig = Rig::new(Strategy::Proposed);
    // 2.4 m → 0.9 m over 6 s, hold 2 s, back out.
    let path = |t: f64| {
        if t < 6.0 {
            2.4 - 0.25 * t
        } else if t < 8.0 {
            0.9
        } else {
            (0.9 + 0.25 * (t - 8.0)).min(2.4)
        }
    };
    let cmds = rig.drive(8000, path);
    let f: Vec<f64> = cmds.iter().map(|c| c.mode.fraction).collect();
    let step = Gains::default().accel_limit * 0.002 + 1e-12;
    for (k, w) in f.windows(2).enumerate() {
        let estop = cmds[k + 1].mode.kind == ModeKind::EStop;
        assert!(estop || (w[1] - w[0]).abs() <= step, "tick {k}: {} → {}", w[0], w[1]);
    }
    // After the start-up ramp the approach is monotone: no speed-up while closing in.
    let ramped = f.iter().position(|&v| v == 1.0).unwrap();
    for k in ramped + 1..3000 {
        assert!(f[k] <= f[k - 1], "tick {k}");
    }
    assert!(f.iter().any(|&v| v == 0.5));
    assert_eq!(f[3999], 0.0);

    let mut rig = Rig::new(Strategy::Proposed);
    let cmds = rig.drive(14000, path);
    assert_eq!(cmds.last().unwrap().mode.fraction, 1.0);
}

#[test]
fn frozen_sensors_trip_the_watchdog() {
    let mut rig = Rig::new(Strategy::Proposed);
    rig.drive(300, |_| 3.0);
    let mut last = None;
    for k in 300..360 {
        last = Some(rig.step(k));
    }
    let last = last.unwrap();
    assert_eq!(last.mode.kind, ModeKind::EStop);
    assert_eq!(last.source, CommandSource::EStop);
    assert_eq!(last.mode.fraction, 0.0);
}

#[test]
fn estop_latches_until_reset() {
    let mut rig = Rig::new(Strategy::Proposed);
    rig.drive(300, |_| 3.0);
    rig.c.request_estop();
    let cmds = rig.drive(300, |_| 3.0);
    assert!(cmds.iter().all(|c| c.mode.kind == ModeKind::EStop));
    rig.c.reset();
    let cmds = rig.drive(1000, |_| 3.0);
    assert_eq!(cmds.last().unwrap().mode.kind, ModeKind::Full);
}

fn zone_strategy() -> impl proptest::strategy::Strategy<Value = Zone> {
    prop_oneof![Just(Zone::Normal), Just(Zone::Warning), Just(Zone::Danger)]
}

proptest! {
    #[test]
    fn secondary_never_speeds_up(d in 0.0..3.0f64, l in zone_strategy(), r in zone_strategy()) {
        let lay = layout();
        for robot in [Quadrant::Left, Quadrant::Right, Quadrant::Both] {
            let primary = primary_speed_select(&occ(l, r), robot);
            let scaled = secondary_scale(d, &lay, primary, &Gains::default());
            prop_assert!(scaled.fraction <= primary.fraction);
            prop_assert_eq!(scaled, scaled.min(primary));
        }
    }

    #[test]
    fn scaling_is_monotone_in_distance(a in 0.0..2.0f64, b in 0.0..2.0f64) {
        let l = layout();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let s = |d| scaling_factor(d, l.trigger_distance, l.stop_distance, 0.3);
        prop_assert!(s(lo) <= s(hi));
    }

    #[test]
    fn slew_bound_under_random_occupancy(seq in prop::collection::vec((zone_strategy(), zone_strategy()), 1..40)) {
        let mut rig = Rig::new(Strategy::Proposed);
        let far = skeleton_sample(&HumanState::standing_at(3.0, 0.3), 0.0);
        let mut prev = 0.0;
        let step = Gains::default().accel_limit * 0.002 + 1e-12;
        for (i, (l, r)) in seq.iter().enumerate() {
            for k in 0..50 {
                let tick = i * 50 + k;
                let t = tick as f64 * 0.002;
                if tick % 15 == 0 {
                    rig.c.on_scan(t, occ(*l, *r));
                }
                if tick % 16 == 0 {
                    let mut f = far.clone();
                    f.t = t;
                    rig.c.on_skeleton(t, Some(f));
                }
                let cmd = rig.step(tick);
                prop_assert!((cmd.mode.fraction - prev).abs() <= step);
                prev = cmd.mode.fraction;
            }
        }
    }
}
