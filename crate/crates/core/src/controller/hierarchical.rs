use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{
    cartesian_to_joint_rates, clamp_joint_rates, energy_objective_gradient, primary_speed_select,
    scale_mode, scaling_factor, CommandSource, Gains, ModeKind, ServoConfig, SpeedCommand,
    SpeedMode,
};
use crate::kinematics::{DampingPolicy, JointVector, RobotModel};
use crate::perception::{min_distance_tcp, SkeletonFrame};
use crate::separation::{compute_msd_dynamic, SeparationConfig, SeparationMonitor};
use crate::zones::{Quadrant, QuadrantOccupancy, ZoneLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Quadrant-aware zones plus skeleton-distance scaling.
    #[default]
    Proposed,
    /// Zones without quadrants and without distance scaling.
    TraditionalHrc,
    /// Fenced robot-only operation at full speed.
    Autonomous,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Autonomous, Strategy::TraditionalHrc, Strategy::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::TraditionalHrc => "traditional_hrc",
            Strategy::Autonomous => "autonomous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub gains: Gains,
    /// Set from the scenario's mode.
    #[serde(skip)]
    pub strategy: Strategy,
    /// Re-arbitrate only when a skeleton frame arrives, as a pipeline that
    /// processes the scanners and the tracker one after the other would.
    #[serde(default)]
    pub sequential: bool,
    #[serde(default = "defaults::nominal_speed")]
    pub nominal_speed: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    /// Sensor silence tolerated before a fail-safe stop, in sensor periods.
    #[serde(default = "defaults::watchdog_periods")]
    pub watchdog_periods: f64,
    #[serde(default)]
    pub separation: SeparationConfig,
    #[serde(default)]
    pub damping: DampingPolicy,
    #[serde(default = "defaults::yes")]
    pub null_space: bool,
    /// In-loop dynamic separation check.
    #[serde(default = "defaults::yes")]
    pub guard: bool,
    #[serde(default)]
    pub servo: ServoConfig,
}

mod defaults {
    pub fn nominal_speed() -> f64 {
        1.0
    }
    pub fn dt() -> f64 {
        0.002
    }
    pub fn watchdog_periods() -> f64 {
        3.0
    }
    pub fn yes() -> bool {
        true
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: Gains::default(),
            strategy: Strategy::default(),
            sequential: false,
            nominal_speed: defaults::nominal_speed(),
            dt: defaults::dt(),
            watchdog_periods: defaults::watchdog_periods(),
            separation: SeparationConfig::default(),
            damping: DampingPolicy::default(),
            null_space: true,
            guard: true,
            servo: ServoConfig::default(),
        }
    }
}

/// What the task layer wants this tick, at full speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskDemand {
    /// Linear (m/s) then angular (rad/s) velocity.
    pub twist: Vector6<f64>,
    /// False while dwelling or idle.
    pub active: bool,
}

impl TaskDemand {
    pub fn idle() -> Self {
        Self {
            twist: Vector6::zeros(),
            active: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latch {
    Operator,
    Watchdog,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Closest landmark distance from the latest frame, at its arrival.
    pub d_i: Option<f64>,
    pub k_s: f64,
    pub v_h_est: f64,
    pub guard_distance: Option<f64>,
    pub guard_msd: Option<f64>,
    pub guard_violated: bool,
}

#[derive(Debug, Clone)]
pub struct HierarchicalController {
    config: ControllerConfig,
    layout: ZoneLayout,
    scan_period: f64,
    skeleton_period: f64,
    scan: Option<(f64, QuadrantOccupancy)>,
    frame_t: Option<f64>,
    frame: Option<SkeletonFrame>,
    frame_pending: bool,
    pelvis_history: Vec<(f64, Vector3<f64>)>,
    sequential_occupancy: QuadrantOccupancy,
    fraction: f64,
    latch: Option<Latch>,
    monitor: SeparationMonitor,
    diag: Diagnostics,
}

impl HierarchicalController {
    pub fn new(config: ControllerConfig, layout: ZoneLayout, scan_period: f64, skeleton_period: f64) -> Self {
        Self {
            monitor: SeparationMonitor::new(config.separation.hysteresis),
            config,
            layout,
            scan_period,
            skeleton_period,
            scan: None,
            frame_t: None,
            frame: None,
            frame_pending: false,
            pelvis_history: Vec::new(),
            sequential_occupancy: QuadrantOccupancy::default(),
            fraction: 0.0,
            latch: None,
            diag: Diagnostics {
                k_s: 1.0,
                ..Diagnostics::default()
            },
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn latch(&self) -> Option<Latch> {
        self.latch
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diag
    }

    /// Merged scanner occupancy; older messages than the current one are dropped.
    pub fn on_scan(&mut self, t: f64, occupancy: QuadrantOccupancy) {
        if self.scan.is_some_and(|(last, _)| t < last) {
            return;
        }
        self.scan = Some((t, occupancy));
    }

    /// A tracker message; `None` means nobody is tracked.
    pub fn on_skeleton(&mut self, t: f64, frame: Option<SkeletonFrame>) {
        if self.frame_t.is_some_and(|last| t < last) {
            return;
        }
        match &frame {
            Some(f) => {
                self.pelvis_history.push((t, f.landmarks[0]));
                if self.pelvis_history.len() > 3 {
                    self.pelvis_history.remove(0);
                }
            }
            None => self.pelvis_history.clear(),
        }
        self.diag.v_h_est = self
            .pelvis_history
            .windows(2)
            .map(|w| {
                let (t0, p0) = w[0];
                let (t1, p1) = w[1];
                let ground = (p1 - p0).xy().norm();
                if t1 > t0 {
                    ground / (t1 - t0)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        self.frame_t = Some(t);
        self.frame = frame;
        self.frame_pending = true;
    }

    pub fn request_estop(&mut self) {
        self.latch = Some(Latch::Operator);
    }

    pub fn reset(&mut self) {
        self.latch = None;
        self.monitor = SeparationMonitor::new(self.config.separation.hysteresis);
    }

    fn stale(&self, last: Option<f64>, period: f64, t: f64) -> bool {
        let limit = self.config.watchdog_periods * period + 1e-9;
        match last {
            Some(tl) => t - tl > limit,
            None => t > limit,
        }
    }

    /// One control period. `tcp` is in the same frame as the skeleton.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        t: f64,
        tcp: &Vector3<f64>,
        tcp_lateral: f64,
        jacobian: &Matrix6<f64>,
        q: &JointVector,
        model: &RobotModel,
        demand: &TaskDemand,
    ) -> SpeedCommand {
        let cfg = self.config;
        let supervised = cfg.strategy != Strategy::Autonomous;

        if supervised
            && (self.stale(self.scan.map(|s| s.0), self.scan_period, t)
                || self.stale(self.frame_t, self.skeleton_period, t))
        {
            self.latch.get_or_insert(Latch::Watchdog);
        }

        let occupancy = self.scan.map(|s| s.1).unwrap_or_default();
        if self.frame_pending {
            self.frame_pending = false;
            self.sequential_occupancy = occupancy;
            self.diag.d_i = self
                .frame
                .as_ref()
                .and_then(|f| min_distance_tcp(f, tcp))
                .map(|(d, _)| d);
            self.diag.k_s = match self.diag.d_i {
                Some(d) => scaling_factor(
                    d,
                    self.layout.trigger_distance,
                    self.layout.stop_distance,
                    cfg.gains.ks_floor,
                ),
                None => 1.0,
            };
        }

        let primary = match cfg.strategy {
            Strategy::Autonomous => SpeedMode::FULL,
            Strategy::TraditionalHrc => primary_speed_select(
                if cfg.sequential { &self.sequential_occupancy } else { &occupancy },
                Quadrant::Both,
            ),
            Strategy::Proposed => primary_speed_select(
                if cfg.sequential { &self.sequential_occupancy } else { &occupancy },
                Quadrant::of_lateral(tcp_lateral),
            ),
        };
        let scaled = if cfg.strategy == Strategy::Proposed {
            scale_mode(primary, self.diag.k_s)
        } else {
            primary
        };

        let mut target = if self.latch.is_some() {
            SpeedMode::ESTOP
        } else {
            scaled
        };
        self.fraction = slew(self.fraction, &target, cfg.gains.accel_limit * cfg.dt);

        self.diag.guard_violated = false;
        self.diag.guard_distance = None;
        self.diag.guard_msd = None;
        if supervised && cfg.guard {
            match self.frame.as_ref().and_then(|f| min_distance_tcp(f, tcp)) {
                Some((d, _)) => {
                    let age = t - self.frame_t.unwrap_or(t);
                    let d_eff = d - self.diag.v_h_est * age;
                    let inputs = cfg
                        .separation
                        .inputs(self.diag.v_h_est, self.fraction * cfg.nominal_speed);
                    self.diag.guard_distance = Some(d_eff);
                    self.diag.guard_msd = Some(compute_msd_dynamic(&inputs));
                    self.diag.guard_violated = self.monitor.update(d_eff, &inputs);
                }
                None => self.monitor = SeparationMonitor::new(cfg.separation.hysteresis),
            }
            if self.diag.guard_violated {
                target = SpeedMode::ESTOP;
                self.fraction = 0.0;
            }
        }

        let source = if target.kind == ModeKind::EStop {
            CommandSource::EStop
        } else if scaled.fraction < primary.fraction {
            CommandSource::SecondaryLoop
        } else {
            CommandSource::PrimaryLoop
        };

        let (qdot_cmd, damped) = if self.fraction > 0.0 && demand.active {
            let w_grad = energy_objective_gradient(q, model);
            let rates = cartesian_to_joint_rates(
                jacobian,
                &demand.twist,
                &cfg.gains,
                &w_grad,
                cfg.null_space,
                &cfg.damping,
            );
            (
                clamp_joint_rates(&(rates.qdot * self.fraction), &model.max_joint_speed),
                rates.damped,
            )
        } else {
            (JointVector::zeros(), false)
        };

        SpeedCommand {
            t,
            mode: SpeedMode {
                kind: target.kind,
                fraction: self.fraction,
            },
            v_cartesian: self.fraction * cfg.nominal_speed,
            qdot_cmd,
            source,
            damped,
        }
    }
}

/// Moves toward the target by at most `step`; e-stop drops at once.
fn slew(current: f64, target: &SpeedMode, step: f64) -> f64 {
    if target.kind == ModeKind::EStop {
        return 0.0;
    }
    let diff = target.fraction - current;
    if diff.abs() <= step {
        target.fraction
    } else {
        current + step * diff.signum()
    }
}
