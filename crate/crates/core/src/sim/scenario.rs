use std::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, Strategy};
use crate::kinematics::{JointVector, RobotModel};
use crate::perception::{HumanState, Posture, ScannerMount, DEFAULT_FOOTPRINT_RADIUS, SKELETON_RATE};
use crate::zones::{build_zone_layout_with, compute_msd_static, CellGeometry, SafetyParams, ZoneLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub mode: Strategy,
    /// Simulated time (s).
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cell: CellGeometry,
    #[serde(default)]
    pub safety: SafetyParams,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub robot: RobotSetup,
    #[serde(default)]
    pub perception: PerceptionSetup,
    /// The first human is the one the skeleton tracker follows.
    #[serde(default)]
    pub humans: Vec<HumanScript>,
    pub task: TaskSpec,
    /// Standstill with work pending for longer than this is a deadlock (s).
    #[serde(default = "defaults::deadlock_threshold")]
    pub deadlock_threshold: f64,
}

mod defaults {
    pub fn deadlock_threshold() -> f64 {
        5.0
    }
    pub fn base_height() -> f64 {
        0.85
    }
    pub fn noise_amplitude() -> f64 {
        0.005
    }
    pub fn skeleton_rate() -> f64 {
        super::SKELETON_RATE
    }
    pub fn footprint() -> f64 {
        super::DEFAULT_FOOTPRINT_RADIUS
    }
    pub fn heading() -> f64 {
        std::f64::consts::PI
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn accel() -> f64 {
        2.0
    }
    pub fn tolerance() -> f64 {
        1e-3
    }
    pub fn orientation_gain() -> f64 {
        2.0
    }
    pub fn cycles() -> u32 {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSetup {
    #[serde(default)]
    pub model: RobotModel,
    /// Height of the kinematic base above the floor (m).
    #[serde(default = "defaults::base_height")]
    pub base_height: f64,
    #[serde(default)]
    pub initial_q: [f64; 6],
}

impl Default for RobotSetup {
    fn default() -> Self {
        Self {
            model: RobotModel::ur5(),
            base_height: defaults::base_height(),
            initial_q: [0.0; 6],
        }
    }
}

impl RobotSetup {
    pub fn initial_joints(&self) -> JointVector {
        JointVector::from(self.initial_q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionSetup {
    #[serde(default)]
    pub noise: bool,
    #[serde(default = "defaults::noise_amplitude")]
    pub noise_amplitude: f64,
    #[serde(default = "defaults::skeleton_rate")]
    pub skeleton_rate: f64,
    /// Empty means the default pair at the bench-side corners.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scanners: Vec<ScannerMount>,
}

impl Default for PerceptionSetup {
    fn default() -> Self {
        Self {
            noise: false,
            noise_amplitude: defaults::noise_amplitude(),
            skeleton_rate: defaults::skeleton_rate(),
            scanners: Vec::new(),
        }
    }
}

impl PerceptionSetup {
    pub fn mounts(&self, cell: &CellGeometry) -> Vec<ScannerMount> {
        if self.scanners.is_empty() {
            let mut pair = ScannerMount::default_pair(0.5 * cell.workspace_width);
            for m in &mut pair {
                m.plane_height = cell.laser_mount_height;
            }
            pair
        } else {
            self.scanners.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub posture: Posture,
    /// Facing direction while standing still (rad).
    #[serde(default = "defaults::heading")]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanScript {
    #[serde(default)]
    pub name: String,
    #[serde(default = "defaults::footprint")]
    pub footprint_radius: f64,
    pub waypoints: Vec<Waypoint>,
}

impl HumanScript {
    /// Piecewise-linear ground motion; posture and resting heading switch at
    /// the waypoint that starts each leg.
    pub fn state_at(&self, t: f64) -> HumanState {
        let wps = &self.waypoints;
        let first = wps[0];
        let mut state = HumanState {
            position: Vector2::new(first.x, first.y),
            heading: first.heading,
            walk_speed: 0.0,
            footprint_radius: self.footprint_radius,
            posture: first.posture,
        };
        let Some(i) = wps.iter().rposition(|w| w.t <= t) else {
            return state;
        };
        let a = wps[i];
        state.posture = a.posture;
        state.heading = a.heading;
        state.position = Vector2::new(a.x, a.y);
        if let Some(b) = wps.get(i + 1) {
            let delta = Vector2::new(b.x - a.x, b.y - a.y);
            let span = b.t - a.t;
            let dist = delta.norm();
            if dist > 0.0 {
                let s = (t - a.t) / span;
                state.position += delta * s;
                state.walk_speed = dist / span;
                state.heading = delta.y.atan2(delta.x);
            }
        }
        state
    }

    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| {
                let d = Vector2::new(w[1].x - w[0].x, w[1].y - w[0].y).norm();
                d / (w[1].t - w[0].t)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskStep {
    pub name: String,
    /// TCP target in the cell frame (m).
    pub target: [f64; 3],
    /// Time spent at the target once reached (s).
    #[serde(default)]
    pub dwell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    #[serde(default = "defaults::cycles")]
    pub cycles: u32,
    pub steps: Vec<TaskStep>,
    /// Extra steps the robot does itself when nobody shares the cell.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solo_steps: Vec<TaskStep>,
    /// Cartesian acceleration of the path profile (m/s²).
    #[serde(default = "defaults::accel")]
    pub max_accel: f64,
    /// Arrival tolerance (m).
    #[serde(default = "defaults::tolerance")]
    pub tolerance: f64,
    /// Orientation-hold gain (1/s).
    #[serde(default = "defaults::orientation_gain")]
    pub orientation_gain: f64,
    /// Share of the solo workload that a human–robot team runs in parallel.
    #[serde(default = "defaults::one")]
    pub ideal_parallelism: f64,
}

impl TaskSpec {
    pub fn steps_for(&self, strategy: Strategy) -> Vec<TaskStep> {
        let mut steps = self.steps.clone();
        if strategy == Strategy::Autonomous {
            steps.extend(self.solo_steps.iter().cloned());
        }
        steps
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn issue(field: impl Into<String>, message: impl Into<String>) -> ValidationIssue {
    ValidationIssue {
        field: field.into(),
        message: message.into(),
    }
}

fn ticks_of(period: f64, dt: f64) -> Option<u64> {
    let n = (period / dt).round();
    (n >= 1.0 && (n * dt - period).abs() < 1e-9).then_some(n as u64)
}

impl Scenario {
    pub fn layout(&self) -> Result<ZoneLayout, ValidationIssue> {
        let msd = compute_msd_static(&self.safety).map_err(|e| issue("safety", e.to_string()))?;
        build_zone_layout_with(msd, &self.cell).map_err(|e| issue("cell", e.to_string()))
    }

    pub fn control_ticks(&self) -> u64 {
        (self.duration / self.controller.dt).round() as u64
    }

    pub fn scan_ticks(&self) -> Vec<u64> {
        self.perception
            .mounts(&self.cell)
            .iter()
            .map(|m| ticks_of(m.scan_period, self.controller.dt).unwrap_or(1))
            .collect()
    }

    /// Every problem found, in document order.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push(issue("name", "must not be empty"));
        }
        let dt = self.controller.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            out.push(issue("controller.dt", "must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            out.push(issue("duration", "must be positive"));
        } else if dt > 0.0 && ticks_of(self.duration, dt).is_none() {
            out.push(issue("duration", "must be a whole number of control periods"));
        }
        if let Err(e) = self.layout() {
            out.push(e);
        }
        if let Some(field) = self.controller.gains.invalid_field() {
            out.push(issue(format!("controller.gains.{field}"), "out of range"));
        }
        if !(self.controller.nominal_speed > 0.0) {
            out.push(issue("controller.nominal_speed", "must be positive"));
        }
        if !(self.controller.watchdog_periods > 0.0) {
            out.push(issue("controller.watchdog_periods", "must be positive"));
        }
        if !self
            .controller
            .separation
            .inputs(0.0, 0.0)
            .is_valid()
            || !(self.controller.separation.hysteresis >= 0.0)
        {
            out.push(issue("controller.separation", "terms must be non-negative"));
        }
        if !(self.controller.servo.ff_accel > 0.0) {
            out.push(issue("controller.servo.ff_accel", "must be positive"));
        }
        if let Err(e) = self.robot.model.validate() {
            out.push(issue("robot.model", e.to_string()));
        }
        if let Err(e) = self.robot.model.check_limits(&self.robot.initial_joints()) {
            out.push(issue("robot.initial_q", e.to_string()));
        }
        if !(self.robot.base_height >= 0.0) {
            out.push(issue("robot.base_height", "must be non-negative"));
        }
        if !(self.perception.skeleton_rate > 0.0) {
            out.push(issue("perception.skeleton_rate", "must be positive"));
        }
        if self.perception.noise && !(self.perception.noise_amplitude >= 0.0) {
            out.push(issue("perception.noise_amplitude", "must be non-negative"));
        }
        for (i, m) in self.perception.mounts(&self.cell).iter().enumerate() {
            if !m.is_valid() {
                out.push(issue(format!("perception.scanners[{i}]"), "invalid field of view, range or period"));
            } else if dt > 0.0 && ticks_of(m.scan_period, dt).is_none() {
                out.push(issue(
                    format!("perception.scanners[{i}].scan_period"),
                    "must be a whole number of control periods",
                ));
            }
        }
        for (h, human) in self.humans.iter().enumerate() {
            let base = format!("humans[{h}]");
            if !(human.footprint_radius > 0.0) {
                out.push(issue(format!("{base}.footprint_radius"), "must be positive"));
            }
            if human.waypoints.is_empty() {
                out.push(issue(format!("{base}.waypoints"), "at least one waypoint is required"));
            }
            for (i, w) in human.waypoints.iter().enumerate() {
                if ![w.t, w.x, w.y, w.heading].iter().all(|v| v.is_finite()) {
                    out.push(issue(format!("{base}.waypoints[{i}]"), "values must be finite"));
                }
                if i > 0 && !(w.t > human.waypoints[i - 1].t) {
                    out.push(issue(
                        format!("{base}.waypoints[{i}].t"),
                        format!(
                            "timestamps must increase strictly ({} after {})",
                            w.t,
                            human.waypoints[i - 1].t
                        ),
                    ));
                }
                if w.t < 0.0 || w.t > self.duration {
                    out.push(issue(format!("{base}.waypoints[{i}].t"), "outside the run duration"));
                }
            }
        }
        let task = &self.task;
        if task.cycles == 0 {
            out.push(issue("task.cycles", "must be at least 1"));
        }
        if task.steps.is_empty() {
            out.push(issue("task.steps", "at least one step is required"));
        }
        if !(task.max_accel > 0.0) {
            out.push(issue("task.max_accel", "must be positive"));
        }
        if !(task.tolerance > 0.0) {
            out.push(issue("task.tolerance", "must be positive"));
        }
        if !(task.orientation_gain >= 0.0) {
            out.push(issue("task.orientation_gain", "must be non-negative"));
        }
        if !(task.ideal_parallelism >= 1.0) {
            out.push(issue("task.ideal_parallelism", "must be at least 1"));
        }
        let reach = self.robot.model.reach;
        for (list, steps) in [("steps", &task.steps), ("solo_steps", &task.solo_steps)] {
            for (i, s) in steps.iter().enumerate() {
                let [x, y, z] = s.target;
                let r = (x * x + y * y + (z - self.robot.base_height).powi(2)).sqrt();
                if !(r < reach) {
                    out.push(issue(
                        format!("task.{list}[{i}].target"),
                        format!("{r:.3} m from the base exceeds the {reach} m reach"),
                    ));
                }
                if !(s.dwell >= 0.0) {
                    out.push(issue(format!("task.{list}[{i}].dwell"), "must be non-negative"));
                }
            }
        }
        if !(self.deadlock_threshold > 0.0) {
            out.push(issue("deadlock_threshold", "must be positive"));
        }
        out
    }
}
