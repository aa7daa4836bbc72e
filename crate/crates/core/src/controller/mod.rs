//! Two-loop speed controller: zone arbitration on every tick, skeleton-distance
//! scaling at the tracker rate, velocity resolution and joint-space PD tracking.

mod hierarchical;
mod servo;

pub use hierarchical::{
    ControllerConfig, Diagnostics, HierarchicalController, Latch, Strategy, TaskDemand,
};
pub use servo::{JointServo, ServoConfig};

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::kinematics::{null_space_projector, DampingPolicy, JointVector, RobotModel};
use crate::zones::{Quadrant, QuadrantOccupancy, Zone, ZoneLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Full,
    Collaborative,
    Reduced,
    Standstill,
    #[serde(rename = "estop")]
    EStop,
}

impl ModeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::Full => "full",
            ModeKind::Collaborative => "collaborative",
            ModeKind::Reduced => "reduced",
            ModeKind::Standstill => "standstill",
            ModeKind::EStop => "estop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "full" => ModeKind::Full,
            "collaborative" => ModeKind::Collaborative,
            "reduced" => ModeKind::Reduced,
            "standstill" => ModeKind::Standstill,
            "estop" => ModeKind::EStop,
            _ => return None,
        })
    }
}

pub const FULL_FRACTION: f64 = 1.0;
pub const COLLABORATIVE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedMode {
    pub kind: ModeKind,
    pub fraction: f64,
}

impl SpeedMode {
    pub const FULL: SpeedMode = SpeedMode {
        kind: ModeKind::Full,
        fraction: FULL_FRACTION,
    };
    pub const COLLABORATIVE: SpeedMode = SpeedMode {
        kind: ModeKind::Collaborative,
        fraction: COLLABORATIVE_FRACTION,
    };
    pub const STANDSTILL: SpeedMode = SpeedMode {
        kind: ModeKind::Standstill,
        fraction: 0.0,
    };
    pub const ESTOP: SpeedMode = SpeedMode {
        kind: ModeKind::EStop,
        fraction: 0.0,
    };

    /// The slower of two modes; on equal fractions the more restrictive kind wins.
    pub fn min(self, other: SpeedMode) -> SpeedMode {
        match self.fraction.total_cmp(&other.fraction) {
            std::cmp::Ordering::Less => self,
            std::cmp::Ordering::Greater => other,
            std::cmp::Ordering::Equal => {
                if other.kind > self.kind {
                    other
                } else {
                    self
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    PrimaryLoop,
    SecondaryLoop,
    #[serde(rename = "estop")]
    EStop,
}

impl CommandSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandSource::PrimaryLoop => "primary",
            CommandSource::SecondaryLoop => "secondary",
            CommandSource::EStop => "estop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "primary" => CommandSource::PrimaryLoop,
            "secondary" => CommandSource::SecondaryLoop,
            "estop" => CommandSource::EStop,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    /// Diagonal of K_P.
    #[serde(default = "defaults::kp")]
    pub kp: [f64; 6],
    /// Diagonal of K_D.
    #[serde(default = "defaults::kd")]
    pub kd: [f64; 6],
    /// Diagonal of λ.
    #[serde(default = "defaults::lambda")]
    pub lambda: [f64; 6],
    #[serde(default = "defaults::k0")]
    pub k0: f64,
    #[serde(default = "defaults::ks_floor")]
    pub ks_floor: f64,
    /// Speed-fraction slew bound (1/s).
    #[serde(default = "defaults::accel_limit")]
    pub accel_limit: f64,
}

mod defaults {
    pub fn kp() -> [f64; 6] {
        [20.0; 6]
    }
    pub fn kd() -> [f64; 6] {
        [2.0; 6]
    }
    pub fn lambda() -> [f64; 6] {
        [1.0; 6]
    }
    pub fn k0() -> f64 {
        0.05
    }
    pub fn ks_floor() -> f64 {
        0.3
    }
    pub fn accel_limit() -> f64 {
        2.0
    }
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            kp: defaults::kp(),
            kd: defaults::kd(),
            lambda: defaults::lambda(),
            k0: defaults::k0(),
            ks_floor: defaults::ks_floor(),
            accel_limit: defaults::accel_limit(),
        }
    }
}

impl Gains {
    /// Name of the first offending field, if any.
    pub fn invalid_field(&self) -> Option<&'static str> {
        let positive = |v: &[f64; 6]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !positive(&self.kp) {
            Some("kp")
        } else if !positive(&self.kd) {
            Some("kd")
        } else if !positive(&self.lambda) {
            Some("lambda")
        } else if !(self.k0.is_finite() && self.k0 >= 0.0) {
            Some("k0")
        } else if !(self.ks_floor > 0.0 && self.ks_floor <= 1.0) {
            Some("ks_floor")
        } else if !(self.accel_limit.is_finite() && self.accel_limit > 0.0) {
            Some("accel_limit")
        } else {
            None
        }
    }

    pub fn kp_vector(&self) -> JointVector {
        JointVector::from(self.kp)
    }

    pub fn kd_vector(&self) -> JointVector {
        JointVector::from(self.kd)
    }

    pub fn lambda_matrix(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from(self.lambda))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedCommand {
    pub t: f64,
    pub mode: SpeedMode,
    /// Commanded Cartesian speed (m/s).
    pub v_cartesian: f64,
    pub qdot_cmd: JointVector,
    pub source: CommandSource,
    /// Damped inverse was used this tick.
    pub damped: bool,
}

fn other_quadrant(q: Quadrant) -> Quadrant {
    match q {
        Quadrant::Left => Quadrant::Right,
        Quadrant::Right => Quadrant::Left,
        Quadrant::Both => Quadrant::Both,
    }
}

pub fn primary_speed_select(occupancy: &QuadrantOccupancy, robot_quadrant: Quadrant) -> SpeedMode {
    let own = occupancy.get(robot_quadrant);
    let other = occupancy.get(other_quadrant(robot_quadrant));
    match (own, other) {
        (Zone::Danger, _) => SpeedMode::STANDSTILL,
        (Zone::Warning, _) => SpeedMode::COLLABORATIVE,
        (Zone::Normal, Zone::Warning | Zone::Danger) => SpeedMode::COLLABORATIVE,
        (Zone::Normal, Zone::Normal) => SpeedMode::FULL,
    }
}

/// k_s(d): 1 above `trigger`, linear down to `floor` at `stop`, 0 below `stop`.
pub fn scaling_factor(d: f64, trigger: f64, stop: f64, floor: f64) -> f64 {
    if d >= trigger {
        1.0
    } else if d < stop {
        0.0
    } else {
        floor + (1.0 - floor) * (d - stop) / (trigger - stop)
    }
}

pub fn secondary_scale(d_i: f64, layout: &ZoneLayout, mode_in: SpeedMode, gains: &Gains) -> SpeedMode {
    let k_s = scaling_factor(d_i, layout.trigger_distance, layout.stop_distance, gains.ks_floor);
    scale_mode(mode_in, k_s)
}

pub(crate) fn scale_mode(mode_in: SpeedMode, k_s: f64) -> SpeedMode {
    if k_s >= 1.0 || mode_in.fraction == 0.0 {
        return mode_in;
    }
    let fraction = mode_in.fraction * k_s;
    let kind = if fraction == 0.0 {
        ModeKind::Standstill
    } else {
        ModeKind::Reduced
    };
    SpeedMode { kind, fraction }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointRates {
    pub qdot: JointVector,
    pub damped: bool,
}

/// `J†λv + k0·∇w`, or with `project` the null-space form `J†λv + (I − J†J)·k0·∇w`.
pub fn cartesian_to_joint_rates(
    j: &Matrix6<f64>,
    v_task: &Vector6<f64>,
    gains: &Gains,
    w_grad: &JointVector,
    project: bool,
    damping: &DampingPolicy,
) -> JointRates {
    let (j_inv, damped) = damping.invert(j);
    let task = j_inv * (gains.lambda_matrix() * v_task);
    let q0 = w_grad * gains.k0;
    let secondary = if project {
        null_space_projector(j) * q0
    } else {
        q0
    };
    JointRates {
        qdot: task + secondary,
        damped,
    }
}

/// Joint-range centering surrogate, 0 at the midpoints and negative elsewhere.
pub fn energy_objective(q: &JointVector, model: &RobotModel) -> f64 {
    -q.iter()
        .zip(&model.joint_limits)
        .map(|(qi, lim)| ((qi - lim.midpoint()) / lim.range()).powi(2))
        .sum::<f64>()
}

pub fn energy_objective_gradient(q: &JointVector, model: &RobotModel) -> JointVector {
    JointVector::from_fn(|i, _| {
        let lim = &model.joint_limits[i];
        -2.0 * (q[i] - lim.midpoint()) / (lim.range() * lim.range())
    })
}

pub fn pd_joint_control(e: &JointVector, edot: &JointVector, gains: &Gains) -> JointVector {
    gains.kp_vector().component_mul(e) + gains.kd_vector().component_mul(edot)
}

/// Uniformly shrinks `qdot` so every joint respects its speed limit.
pub fn clamp_joint_rates(qdot: &JointVector, max_speed: &[f64]) -> JointVector {
    let ratio = qdot
        .iter()
        .zip(max_speed)
        .map(|(v, m)| v.abs() / m)
        .fold(1.0, f64::max);
    if ratio > 1.0 {
        qdot / ratio
    } else {
        *qdot
    }
}
