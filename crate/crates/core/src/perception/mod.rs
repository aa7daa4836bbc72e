//! Simulated sensing: two planar safety scanners and a 30 Hz skeleton tracker.

mod laser;
mod skeleton;

pub use laser::{
    occupancy_of, ray_circle_distance, scan_to_occupancy, simulate_scan, LaserScan, RangeNoise,
    ScannerMount,
};
pub use skeleton::{
    bone_lengths, landmark_index, min_distance_tcp, skeleton_sample, SkeletonFrame, BONES,
    LANDMARK_NAMES, NUM_LANDMARKS, SKELETON_RATE,
};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    #[default]
    Standing,
    Reaching,
    Leaning,
}

impl Posture {
    pub fn as_str(self) -> &'static str {
        match self {
            Posture::Standing => "standing",
            Posture::Reaching => "reaching",
            Posture::Leaning => "leaning",
        }
    }
}

pub const DEFAULT_FOOTPRINT_RADIUS: f64 = 0.30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanState {
    /// Ground position in the cell frame (m).
    pub position: Vector2<f64>,
    /// Facing direction (rad).
    pub heading: f64,
    pub walk_speed: f64,
    pub footprint_radius: f64,
    pub posture: Posture,
}

impl HumanState {
    pub fn standing_at(x: f64, y: f64) -> Self {
        Self {
            position: Vector2::new(x, y),
            heading: std::f64::consts::PI,
            walk_speed: 0.0,
            footprint_radius: DEFAULT_FOOTPRINT_RADIUS,
            posture: Posture::Standing,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.walk_speed >= 0.0
            && self.walk_speed.is_finite()
            && self.footprint_radius > 0.0
            && self.position.iter().all(|v| v.is_finite())
    }

    /// Straight-line walk along the heading.
    pub fn advanced(&self, dt: f64) -> Self {
        let dir = Vector2::new(self.heading.cos(), self.heading.sin());
        Self {
            position: self.position + dir * (self.walk_speed * dt),
            ..*self
        }
    }
}
