//! Serial-arm kinematics: forward kinematics, geometric Jacobian, damped
//! pseudo-inverse and the null-space projector used by the velocity loops.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{Isometry3, Matrix4, Matrix6, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type JointVector = Vector6<f64>;

pub const NUM_JOINTS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint {joint} at {value} rad is outside [{min}, {max}]")]
    LimitViolation {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("cannot read robot model: {0}")]
    Io(String),
}

/// One row of standard Denavit–Hartenberg parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Link length along x_i (m).
    pub a: f64,
    /// Link offset along z_{i-1} (m).
    pub d: f64,
    /// Link twist about x_i (rad).
    pub alpha: f64,
    /// Joint angle offset added to q_i (rad).
    #[serde(default)]
    pub offset: f64,
}

impl LinkParams {
    pub const fn new(a: f64, d: f64, alpha: f64) -> Self {
        Self {
            a,
            d,
            alpha,
            offset: 0.0,
        }
    }

    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let theta = q + self.offset;
        Isometry3::from_parts(
            Translation3::new(self.a * theta.cos(), self.a * theta.sin(), self.d),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta)
                * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha),
        )
    }
}

/// Joint-limit pair in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

impl JointLimit {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub name: String,
    pub link_parameters: Vec<LinkParams>,
    pub joint_limits: Vec<JointLimit>,
    /// rad/s per joint.
    pub max_joint_speed: Vec<f64>,
    /// Maximum TCP distance from the base origin (m).
    pub reach: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self::ur5()
    }
}

impl RobotModel {
    /// UR5 arm proportions (upper arm 425 mm, forearm 392.25 mm) with the
    /// base frame at the shoulder and a spherical wrist whose tool offset
    /// brings the stretched reach to 850 mm.
    pub fn ur5() -> Self {
        let two_pi = 2.0 * PI;
        Self {
            name: "ur5".into(),
            link_parameters: vec![
                LinkParams::new(0.0, 0.0, FRAC_PI_2),
                LinkParams::new(-0.425, 0.0, 0.0),
                LinkParams::new(-0.39225, 0.0, 0.0),
                LinkParams::new(0.0, 0.0, FRAC_PI_2),
                LinkParams::new(0.0, 0.0, -FRAC_PI_2),
                LinkParams::new(0.0, 0.03275, 0.0),
            ],
            joint_limits: vec![
                JointLimit {
                    min: -two_pi,
                    max: two_pi
                };
                NUM_JOINTS
            ],
            max_joint_speed: vec![PI; NUM_JOINTS],
            reach: 0.85,
        }
    }

    /// Joint configuration that lines every link up; the TCP sits at `reach`.
    pub fn ur5_stretched() -> JointVector {
        JointVector::new(0.0, 0.0, 0.0, 0.0, FRAC_PI_2, 0.0)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.link_parameters.len() != NUM_JOINTS {
            return Err(KinematicsError::InvalidModel(format!(
                "expected {NUM_JOINTS} link rows, got {}",
                self.link_parameters.len()
            )));
        }
        if self.joint_limits.len() != NUM_JOINTS || self.max_joint_speed.len() != NUM_JOINTS {
            return Err(KinematicsError::InvalidModel(
                "joint_limits and max_joint_speed need one entry per joint".into(),
            ));
        }
        for (i, lim) in self.joint_limits.iter().enumerate() {
            if !(lim.min < lim.max) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {i}: limit min {} must be below max {}",
                    lim.min, lim.max
                )));
            }
        }
        if self.max_joint_speed.iter().any(|&s| !(s > 0.0)) {
            return Err(KinematicsError::InvalidModel(
                "max_joint_speed entries must be positive".into(),
            ));
        }
        if !(self.reach >= 0.0) {
            return Err(KinematicsError::InvalidModel("reach must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, KinematicsError> {
        let model: RobotModel =
            toml::from_str(text).map_err(|e| KinematicsError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| KinematicsError::Io(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("robot model serializes")
    }

    pub fn check_limits(&self, q: &JointVector) -> Result<(), KinematicsError> {
        for (i, lim) in self.joint_limits.iter().enumerate() {
            if q[i] < lim.min || q[i] > lim.max || !q[i].is_finite() {
                return Err(KinematicsError::LimitViolation {
                    joint: i,
                    value: q[i],
                    min: lim.min,
                    max: lim.max,
                });
            }
        }
        Ok(())
    }

    /// Frames of the base and of every link, `n + 1` entries.
    pub fn link_frames(&self, q: &JointVector) -> Vec<Isometry3<f64>> {
        let mut frames = Vec::with_capacity(NUM_JOINTS + 1);
        let mut t = Isometry3::identity();
        frames.push(t);
        for (i, link) in self.link_parameters.iter().enumerate() {
            t *= link.transform(q[i]);
            frames.push(t);
        }
        frames
    }

    /// TCP pose without the joint-limit check.
    pub fn tcp_isometry(&self, q: &JointVector) -> Isometry3<f64> {
        self.link_parameters
            .iter()
            .enumerate()
            .fold(Isometry3::identity(), |t, (i, link)| t * link.transform(q[i]))
    }

    pub fn forward_kinematics(&self, q: &JointVector) -> Result<Pose, KinematicsError> {
        self.check_limits(q)?;
        Ok(Pose::from(self.tcp_isometry(q)))
    }

    /// Geometric Jacobian in the base frame. Rows 0..3 are linear velocity,
    /// rows 3..6 angular velocity.
    pub fn jacobian(&self, q: &JointVector) -> Jacobian {
        let frames = self.link_frames(q);
        let p_tcp = frames[NUM_JOINTS].translation.vector;
        let mut m = Matrix6::zeros();
        for i in 0..NUM_JOINTS {
            let z = frames[i].rotation * Vector3::z();
            let lin = z.cross(&(p_tcp - frames[i].translation.vector));
            m.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            m.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
        }
        Jacobian(m)
    }
}

/// Instantaneous joint configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub q: JointVector,
    pub qdot: JointVector,
    pub t: f64,
}

impl JointState {
    pub fn at_rest(q: JointVector) -> Self {
        Self {
            q,
            qdot: JointVector::zeros(),
            t: 0.0,
        }
    }

    pub fn within_limits(&self, model: &RobotModel) -> bool {
        model.check_limits(&self.q).is_ok()
            && self
                .qdot
                .iter()
                .zip(&model.max_joint_speed)
                .all(|(v, max)| v.abs() <= *max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl From<Isometry3<f64>> for Pose {
    fn from(iso: Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }
}

/// 6×6 map from joint rates to the spatial velocity (m/s, rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian(pub Matrix6<f64>);

impl Jacobian {
    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn singular_values(&self) -> Vector6<f64> {
        Svd6::new(&self.0).sigma
    }
}

/// Moore–Penrose cutoff, same convention as LAPACK-backed `pinv` routines.
fn rank_tolerance(sigma_max: f64) -> f64 {
    NUM_JOINTS as f64 * f64::EPSILON * sigma_max
}

/// One-sided Jacobi SVD. The nalgebra Golub–Kahan routine can stall on
/// exactly rank-deficient 6×6 input and return a factorization that does not
/// reconstruct the matrix; Jacobi rotations stay accurate there.
struct Svd6 {
    /// Columns `σᵢuᵢ`; a zero column where `σᵢ = 0`.
    us: Matrix6<f64>,
    sigma: Vector6<f64>,
    v: Matrix6<f64>,
}

impl Svd6 {
    fn new(j: &Matrix6<f64>) -> Self {
        let mut a = *j;
        let mut v = Matrix6::<f64>::identity();
        for _sweep in 0..60 {
            let mut rotated = false;
            for p in 0..NUM_JOINTS {
                for q in p + 1..NUM_JOINTS {
                    let alpha = a.column(p).norm_squared();
                    let beta = a.column(q).norm_squared();
                    let gamma = a.column(p).dot(&a.column(q));
                    if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for m in [&mut a, &mut v] {
                        for r in 0..NUM_JOINTS {
                            let (xp, xq) = (m[(r, p)], m[(r, q)]);
                            m[(r, p)] = c * xp - s * xq;
                            m[(r, q)] = s * xp + c * xq;
                        }
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let sigma = Vector6::from_fn(|i, _| a.column(i).norm());
        Self { us: a, sigma, v }
    }

    /// `Σ vᵢ uᵢᵀ · g(σᵢ)`, with `uᵢ` recovered from the stored `σᵢuᵢ`.
    fn compose(&self, g: impl Fn(f64) -> f64) -> Matrix6<f64> {
        let mut out = Matrix6::zeros();
        for i in 0..NUM_JOINTS {
            let s = self.sigma[i];
            let w = g(s);
            if s > 0.0 && w != 0.0 {
                out += self.v.column(i) * self.us.column(i).transpose() * (w / s);
            }
        }
        out
    }
}

pub fn numerical_rank(j: &Matrix6<f64>) -> usize {
    let sv = Svd6::new(j).sigma;
    let tol = rank_tolerance(sv.max()).max(1e-12);
    sv.iter().filter(|&&s| s > tol).count()
}

/// `damping == 0` gives the Moore–Penrose inverse; otherwise the damped
/// least-squares inverse `Jᵀ(JJᵀ + damping² I)⁻¹`.
pub fn pseudo_inverse(j: &Matrix6<f64>, damping: f64) -> Matrix6<f64> {
    let svd = Svd6::new(j);
    let tol = rank_tolerance(svd.sigma.max());
    let lambda2 = damping * damping;
    svd.compose(|s| {
        if damping > 0.0 {
            s / (s * s + lambda2)
        } else if s > tol {
            1.0 / s
        } else {
            0.0
        }
    })
}

/// `I − J†J` built from the undamped inverse, so it is an exact projector.
pub fn null_space_projector(j: &Matrix6<f64>) -> Matrix6<f64> {
    Matrix6::identity() - pseudo_inverse(j, 0.0) * j
}

/// Damping is engaged only near singularities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingPolicy {
    pub damping: f64,
    pub activation_sigma: f64,
}

impl Default for DampingPolicy {
    fn default() -> Self {
        Self {
            damping: 1e-3,
            activation_sigma: 1e-2,
        }
    }
}

impl DampingPolicy {
    /// Returns the inverse and whether damping was engaged.
    pub fn invert(&self, j: &Matrix6<f64>) -> (Matrix6<f64>, bool) {
        let sigma_min = Svd6::new(j).sigma.min();
        if sigma_min < self.activation_sigma {
            (pseudo_inverse(j, self.damping), true)
        } else {
            (pseudo_inverse(j, 0.0), false)
        }
    }
}

/// Rotation-vector error that takes `current` onto `target`.
pub fn orientation_error(target: &UnitQuaternion<f64>, current: &UnitQuaternion<f64>) -> Vector3<f64> {
    (target * current.inverse()).scaled_axis()
}

/// Homogeneous form of an isometry, handy when comparing against plain
/// 4×4 transform chains.
pub fn to_homogeneous(iso: &Isometry3<f64>) -> Matrix4<f64> {
    iso.to_homogeneous()
}
