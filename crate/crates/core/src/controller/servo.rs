//! Joint servo: a PD-tracked plant with exact zero-order-hold error dynamics.
//!
//! Each joint follows `q_ref` with tracking error `e = q_ref − q`. The error
//! obeys `K_D ë = −K_P e − K_D β ė` with `β = 2√(kp/kd)`, i.e. critically
//! damped. Along this flow `V = ½eᵀK_P e + ½ėᵀK_D ė` has `V̇ = −β ėᵀK_D ė ≤ 0`.
//! The feedforward path cannot change the plant velocity by more than
//! `ff_accel·dt` per tick; any excess becomes tracking error rate.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{pd_joint_control, Gains};
use crate::kinematics::{JointState, JointVector, NUM_JOINTS};
use crate::stability::lyapunov_value;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoConfig {
    /// Feedforward acceleration bound (rad/s²).
    pub ff_accel: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self { ff_accel: 8.0 }
    }
}

#[derive(Debug, Clone)]
pub struct JointServo {
    gains: Gains,
    phi: [Matrix2<f64>; NUM_JOINTS],
    ff_step: f64,
    dt: f64,
    t: f64,
    q_ref: JointVector,
    qdot_ref: JointVector,
    e: JointVector,
    edot: JointVector,
}

impl JointServo {
    pub fn new(q0: JointVector, gains: &Gains, dt: f64, config: &ServoConfig) -> Self {
        let phi = std::array::from_fn(|i| {
            let ratio = gains.kp[i] / gains.kd[i];
            let beta = 2.0 * ratio.sqrt();
            let a = Matrix2::new(0.0, 1.0, -ratio, -beta);
            (a * dt).exp()
        });
        Self {
            gains: *gains,
            phi,
            ff_step: config.ff_accel * dt,
            dt,
            t: 0.0,
            q_ref: q0,
            qdot_ref: JointVector::zeros(),
            e: JointVector::zeros(),
            edot: JointVector::zeros(),
        }
    }

    /// Advances one period under a new joint-rate reference.
    pub fn step(&mut self, qdot_ref: &JointVector) {
        for i in 0..NUM_JOINTS {
            let jump = qdot_ref[i] - self.qdot_ref[i];
            let allowed = jump.clamp(-self.ff_step, self.ff_step);
            self.edot[i] += jump - allowed;
            let next = self.phi[i] * Vector2::new(self.e[i], self.edot[i]);
            self.e[i] = next.x;
            self.edot[i] = next.y;
        }
        self.qdot_ref = *qdot_ref;
        self.q_ref += qdot_ref * self.dt;
        self.t += self.dt;
    }

    pub fn state(&self) -> JointState {
        JointState {
            q: self.q_ref - self.e,
            qdot: self.qdot_ref - self.edot,
            t: self.t,
        }
    }

    pub fn reference(&self) -> (JointVector, JointVector) {
        (self.q_ref, self.qdot_ref)
    }

    pub fn error(&self) -> (JointVector, JointVector) {
        (self.e, self.edot)
    }

    pub fn effort(&self) -> JointVector {
        pd_joint_control(&self.e, &self.edot, &self.gains)
    }

    pub fn lyapunov(&self) -> f64 {
        lyapunov_value(&self.e, &self.edot, &self.gains)
    }

    /// Overrides the tracking error, for tests and fault injection.
    pub fn set_error(&mut self, e: JointVector, edot: JointVector) {
        self.e = e;
        self.edot = edot;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_reference_is_tracked_exactly() {
        let g = Gains::default();
        let mut s = JointServo::new(JointVector::zeros(), &g, 0.002, &ServoConfig::default());
        let v = JointVector::repeat(0.001);
        for _ in 0..100 {
            s.step(&v);
        }
        assert_eq!(s.lyapunov(), 0.0);
        assert!((s.state().q[0] - 0.1 * 0.001 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn jump_decays_monotonically() {
        let g = Gains::default();
        let mut s = JointServo::new(JointVector::zeros(), &g, 0.002, &ServoConfig::default());
        s.step(&JointVector::repeat(1.0));
        let mut v = s.lyapunov();
        assert!(v > 0.0);
        for _ in 0..5000 {
            s.step(&JointVector::repeat(1.0));
            let next = s.lyapunov();
            assert!(next <= v);
            v = next;
        }
        assert!(v < 1e-8);
    }
}
