//! Lyapunov bookkeeping over recorded runs.
//!
//! A trace is cut into segments of constant mode kind and constant
//! regulation flag (joint-rate reference identically zero). Regulation
//! segments must show a non-increasing `V`; tracking segments are reported
//! with their largest `V̇` but carry no verdict.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Gains, ModeKind};
use crate::kinematics::{JointVector, NUM_JOINTS};

/// Default tolerance relative to the segment's largest `V`.
pub const DEFAULT_EPS_REL: f64 = 1e-9;
/// Samples of flat `V` needed before calling the tail invariant.
pub const INVARIANT_WINDOW: usize = 10;
/// `V` at the end of a converged segment relative to its maximum.
pub const CONVERGED_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityPoint {
    pub t: f64,
    pub v: f64,
    pub mode: ModeKind,
    /// Joint-rate reference is zero on this sample.
    pub regulating: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    pub v: f64,
    pub vdot: f64,
    pub mode: ModeKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum StabilityError {
    #[error("empty segment")]
    Empty,
    #[error("segment changes mode or reference at sample {index}")]
    Segmentation { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentVerdict {
    pub start: usize,
    pub end: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub mode: ModeKind,
    pub regulating: bool,
    pub max_v: f64,
    pub max_vdot: f64,
    pub eps: f64,
    /// Only regulation segments are held to `V̇ ≤ eps`.
    pub checked: bool,
    pub passed: bool,
    pub invariant_set: bool,
    pub final_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub segments: Vec<SegmentVerdict>,
    pub nonnegative: bool,
    pub invariant_set_detected: bool,
    pub passed: bool,
}

impl StabilityReport {
    pub fn checked_segments(&self) -> usize {
        self.segments.iter().filter(|s| s.checked).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SegmentVerdict> {
        self.segments.iter().filter(|s| !s.passed)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "stability {} segments={} checked={} failed={} nonnegative={} invariant_set={}",
            if self.passed { "pass" } else { "fail" },
            self.segments.len(),
            self.checked_segments(),
            self.failures().count(),
            self.nonnegative,
            self.invariant_set_detected
        )
    }
}

/// `½eᵀK_P e + ½ėᵀK_D ė` for diagonal gains.
pub fn lyapunov_value(e: &JointVector, edot: &JointVector, gains: &Gains) -> f64 {
    0.5 * (0..NUM_JOINTS)
        .map(|i| gains.kp[i] * e[i] * e[i] + gains.kd[i] * edot[i] * edot[i])
        .sum::<f64>()
}

/// Centered differences inside, one-sided at both ends.
pub fn discrete_derivative(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            (v[b] - v[a]) / (t[b] - t[a])
        })
        .collect()
}

pub fn lyapunov_samples(points: &[StabilityPoint]) -> Vec<LyapunovSample> {
    let t: Vec<f64> = points.iter().map(|p| p.t).collect();
    let v: Vec<f64> = points.iter().map(|p| p.v).collect();
    discrete_derivative(&t, &v)
        .into_iter()
        .zip(points)
        .map(|(vdot, p)| LyapunovSample {
            t: p.t,
            v: p.v,
            vdot,
            mode: p.mode,
        })
        .collect()
}

fn key(p: &StabilityPoint) -> (ModeKind, bool) {
    (p.mode, p.regulating)
}

/// Maximal runs of equal (mode, regulating).
pub fn segment_ranges(points: &[StabilityPoint]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=points.len() {
        if i == points.len() || key(&points[i]) != key(&points[start]) {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

pub fn check_segment(points: &[StabilityPoint], eps_rel: f64) -> Result<SegmentVerdict, StabilityError> {
    let first = points.first().ok_or(StabilityError::Empty)?;
    if let Some(index) = points.iter().position(|p| key(p) != key(first)) {
        return Err(StabilityError::Segmentation { index });
    }
    let samples = lyapunov_samples(points);
    let max_v = points.iter().map(|p| p.v).fold(0.0, f64::max);
    let eps = eps_rel * max_v;
    let max_vdot = samples.iter().map(|s| s.vdot).fold(f64::NEG_INFINITY, f64::max);
    let final_v = points.last().map_or(0.0, |p| p.v);
    let flat_tail = samples
        .iter()
        .rev()
        .take_while(|s| s.vdot.abs() <= eps)
        .count();
    let invariant_set = flat_tail >= INVARIANT_WINDOW.min(points.len())
        && final_v <= CONVERGED_RATIO * max_v;
    let checked = first.regulating;
    Ok(SegmentVerdict {
        start: 0,
        end: points.len(),
        t_start: first.t,
        t_end: points.last().map_or(first.t, |p| p.t),
        mode: first.mode,
        regulating: first.regulating,
        max_v,
        max_vdot,
        eps,
        checked,
        passed: !checked || max_vdot <= eps,
        invariant_set,
        final_v,
    })
}

pub fn check_trace(points: &[StabilityPoint], eps_rel: f64) -> StabilityReport {
    let segments: Vec<SegmentVerdict> = segment_ranges(points)
        .into_iter()
        .map(|r| {
            let mut v = check_segment(&points[r.clone()], eps_rel).expect("ranges are homogeneous");
            v.start = r.start;
            v.end = r.end;
            v
        })
        .collect();
    let nonnegative = points.iter().all(|p| p.v >= 0.0);
    StabilityReport {
        invariant_set_detected: segments.iter().any(|s| s.invariant_set),
        passed: nonnegative && segments.iter().all(|s| s.passed),
        nonnegative,
        segments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(t: f64, v: f64, regulating: bool) -> StabilityPoint {
        StabilityPoint {
            t,
            v,
            mode: ModeKind::Standstill,
            regulating,
        }
    }

    #[test]
    fn equilibrium_segment_is_invariant() {
        let pts: Vec<_> = (0..50).map(|k| point(k as f64 * 0.002, 0.0, true)).collect();
        let r = check_trace(&pts, DEFAULT_EPS_REL);
        assert!(r.passed);
        assert!(r.invariant_set_detected);
        assert_eq!(r.segments[0].max_vdot, 0.0);
    }

    #[test]
    fn injected_increase_fails() {
        let mut pts: Vec<_> = (0..50)
            .map(|k| point(k as f64 * 0.002, (-(k as f64) * 0.01).exp(), true))
            .collect();
        assert!(check_trace(&pts, DEFAULT_EPS_REL).passed);
        pts[30].v += 0.1;
        assert!(!check_trace(&pts, DEFAULT_EPS_REL).passed);
    }

    #[test]
    fn mixed_slice_is_rejected() {
        let pts = [point(0.0, 0.0, true), point(0.002, 0.0, false)];
        assert_eq!(check_segment(&pts, DEFAULT_EPS_REL), Err(StabilityError::Segmentation { index: 1 }));
        assert_eq!(segment_ranges(&pts), vec![0..1, 1..2]);
    }

    #[test]
    fn derivative_estimator() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [0.0, 1.0, 4.0, 9.0];
        assert_eq!(discrete_derivative(&t, &v), vec![1.0, 2.0, 4.0, 5.0]);
    }
}
