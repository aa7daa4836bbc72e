//! Time-varying protective separation distance and its violation predicate.

use serde::{Deserialize, Serialize};

/// Inputs to the dynamic separation distance. All fields are non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationInputs {
    /// Human speed (m/s).
    pub v_h: f64,
    /// Robot TCP speed (m/s).
    pub v_r: f64,
    /// Robot reaction time (s).
    pub t_r: f64,
    /// Perception response time (s).
    pub t_s: f64,
    /// Intrusion distance (m).
    pub c: f64,
    /// Robot position uncertainty (m).
    pub z_r: f64,
    /// Human position uncertainty (m).
    pub z_d: f64,
}

impl SeparationInputs {
    pub fn is_valid(&self) -> bool {
        [self.v_h, self.v_r, self.t_r, self.t_s, self.c, self.z_r, self.z_d]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn with_speeds(&self, v_h: f64, v_r: f64) -> Self {
        Self { v_h, v_r, ..*self }
    }
}

/// Constant parts of the separation budget configured per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub t_r: f64,
    pub t_s: f64,
    pub c: f64,
    pub z_r: f64,
    pub z_d: f64,
    /// Release margin of the in-loop violation predicate (m).
    #[serde(default = "default_hysteresis")]
    pub hysteresis: f64,
}

fn default_hysteresis() -> f64 {
    0.02
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            t_r: 0.1,
            t_s: 0.064,
            c: 0.25,
            z_r: 0.05,
            z_d: 0.05,
            hysteresis: default_hysteresis(),
        }
    }
}

impl SeparationConfig {
    pub fn inputs(&self, v_h: f64, v_r: f64) -> SeparationInputs {
        SeparationInputs {
            v_h,
            v_r,
            t_r: self.t_r,
            t_s: self.t_s,
            c: self.c,
            z_r: self.z_r,
            z_d: self.z_d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationTerms {
    /// Distance the human covers before the robot stops.
    pub s_h: f64,
    /// Distance the robot covers during its reaction time.
    pub s_r: f64,
    /// Robot stopping distance.
    pub s_s: f64,
}

pub fn separation_terms(inputs: &SeparationInputs) -> SeparationTerms {
    let stop_window = inputs.t_r + inputs.t_s;
    SeparationTerms {
        s_h: inputs.v_h * stop_window,
        s_r: inputs.v_r * inputs.t_r,
        s_s: inputs.v_r * stop_window,
    }
}

pub fn compute_msd_dynamic(inputs: &SeparationInputs) -> f64 {
    let terms = separation_terms(inputs);
    terms.s_h + terms.s_r + terms.s_s + inputs.c + inputs.z_r + inputs.z_d
}

/// Strict: a distance equal to the separation distance is compliant.
pub fn separation_violated(actual_distance: f64, inputs: &SeparationInputs) -> bool {
    actual_distance < compute_msd_dynamic(inputs)
}

/// Violation predicate with release hysteresis, for use inside the control loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeparationMonitor {
    pub hysteresis: f64,
    violated: bool,
}

impl SeparationMonitor {
    pub fn new(hysteresis: f64) -> Self {
        Self {
            hysteresis,
            violated: false,
        }
    }

    pub fn is_violated(&self) -> bool {
        self.violated
    }

    pub fn update(&mut self, actual_distance: f64, inputs: &SeparationInputs) -> bool {
        let msd = compute_msd_dynamic(inputs);
        self.violated = if self.violated {
            actual_distance < msd + self.hysteresis
        } else {
            actual_distance < msd
        };
        self.violated
    }
}
