//! Planar safety laser scanners ray-cast against human footprint discs.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HumanState;
use crate::zones::{classify_point, QuadrantOccupancy, ZoneLabel, ZoneLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannerMount {
    pub name: String,
    /// Position in the cell frame (m).
    pub x: f64,
    pub y: f64,
    /// Direction of the central ray (rad).
    pub heading: f64,
    #[serde(default = "defaults::plane_height")]
    pub plane_height: f64,
    #[serde(default = "defaults::fov")]
    pub fov: f64,
    #[serde(default = "defaults::angular_resolution")]
    pub angular_resolution: f64,
    #[serde(default = "defaults::max_range")]
    pub max_range: f64,
    #[serde(default = "defaults::scan_period")]
    pub scan_period: f64,
}

mod defaults {
    pub fn plane_height() -> f64 {
        0.400
    }
    pub fn fov() -> f64 {
        4.8
    }
    pub fn angular_resolution() -> f64 {
        0.0087
    }
    pub fn max_range() -> f64 {
        5.5
    }
    pub fn scan_period() -> f64 {
        0.030
    }
}

impl ScannerMount {
    pub fn new(name: &str, x: f64, y: f64, heading: f64) -> Self {
        Self {
            name: name.into(),
            x,
            y,
            heading,
            plane_height: defaults::plane_height(),
            fov: defaults::fov(),
            angular_resolution: defaults::angular_resolution(),
            max_range: defaults::max_range(),
            scan_period: defaults::scan_period(),
        }
    }

    /// Two scanners at the bench-side corners of the monitored rectangle,
    /// looking into it with overlapping fields of view.
    pub fn default_pair(half_width: f64) -> Vec<ScannerMount> {
        let y = half_width + 0.02;
        vec![
            ScannerMount::new("laser_left", 0.0, -y, 0.6),
            ScannerMount::new("laser_right", 0.0, y, -0.6),
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.fov > 0.0
            && self.fov <= std::f64::consts::TAU
            && self.angular_resolution > 0.0
            && self.max_range > 0.0
            && self.scan_period > 0.0
    }

    pub fn ray_count(&self) -> usize {
        (self.fov / self.angular_resolution).floor() as usize + 1
    }

    pub fn ray_angle(&self, i: usize) -> f64 {
        self.heading - 0.5 * self.fov + i as f64 * self.angular_resolution
    }

    pub fn origin(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub t: f64,
    /// One range per ray; `max_range` means no return.
    pub ranges: Vec<f64>,
}

/// Seeded zero-mean uniform range noise.
#[derive(Debug, Clone)]
pub struct RangeNoise {
    pub amplitude: f64,
    rng: ChaCha8Rng,
}

impl RangeNoise {
    pub fn new(amplitude: f64, seed: u64) -> Self {
        Self {
            amplitude,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn sample(&mut self) -> f64 {
        self.rng.random_range(-self.amplitude..=self.amplitude)
    }
}

/// Distance along a unit ray to the first crossing of a circle, if any.
pub fn ray_circle_distance(
    origin: &Vector2<f64>,
    dir: &Vector2<f64>,
    center: &Vector2<f64>,
    radius: f64,
) -> Option<f64> {
    let oc = center - origin;
    let b = dir.dot(&oc);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let near = b - root;
    if near > 0.0 {
        return Some(near);
    }
    let far = b + root;
    (far > 0.0).then_some(far)
}

pub fn simulate_scan(
    mount: &ScannerMount,
    humans: &[HumanState],
    t: f64,
    mut noise: Option<&mut RangeNoise>,
) -> LaserScan {
    let origin = mount.origin();
    let ranges = (0..mount.ray_count())
        .map(|i| {
            let angle = mount.ray_angle(i);
            let dir = Vector2::new(angle.cos(), angle.sin());
            let hit = humans
                .iter()
                .filter_map(|h| ray_circle_distance(&origin, &dir, &h.position, h.footprint_radius))
                .fold(f64::INFINITY, f64::min);
            if hit < mount.max_range {
                let r = match noise.as_deref_mut() {
                    Some(n) => hit + n.sample(),
                    None => hit,
                };
                r.clamp(f64::MIN_POSITIVE, mount.max_range)
            } else {
                mount.max_range
            }
        })
        .collect();
    LaserScan { t, ranges }
}

/// Every return converted to the cell frame and labelled.
pub fn scan_to_occupancy(
    scan: &LaserScan,
    mount: &ScannerMount,
    layout: &ZoneLayout,
) -> Vec<(ZoneLabel, Vector2<f64>)> {
    scan.ranges
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < mount.max_range)
        .map(|(i, &r)| {
            let angle = mount.ray_angle(i);
            let hit = Vector2::new(mount.x + r * angle.cos(), mount.y + r * angle.sin());
            let label = classify_point(layout, &Vector3::new(hit.x, hit.y, mount.plane_height));
            (label, hit)
        })
        .collect()
}

pub fn occupancy_of(hits: &[(ZoneLabel, Vector2<f64>)]) -> QuadrantOccupancy {
    QuadrantOccupancy::from_labels(hits.iter().map(|(l, _)| l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::Posture;
    use crate::zones::{build_zone_layout, Quadrant, Zone};

    fn human_at(x: f64, y: f64) -> HumanState {
        HumanState {
            position: Vector2::new(x, y),
            heading: std::f64::consts::PI,
            walk_speed: 0.0,
            footprint_radius: 0.3,
            posture: Posture::Standing,
        }
    }

    fn forward_mount() -> ScannerMount {
        ScannerMount::new("test", 0.0, 0.0, 0.0)
    }

    #[test]
    fn empty_scene_returns_sentinels() {
        let m = forward_mount();
        let scan = simulate_scan(&m, &[], 0.0, None);
        assert_eq!(scan.ranges.len(), m.ray_count());
        assert!(scan.ranges.iter().all(|&r| r == m.max_range));
    }

    #[test]
    fn central_ray_hits_disc_front() {
        let m = forward_mount();
        let scan = simulate_scan(&m, &[human_at(1.0, 0.0)], 0.0, None);
        let central = (0..m.ray_count())
            .min_by(|&a, &b| m.ray_angle(a).abs().total_cmp(&m.ray_angle(b).abs()))
            .unwrap();
        // closest ray is within half a resolution step of dead ahead
        assert!((scan.ranges[central] - 0.7).abs() < 1e-4);
        let d = ray_circle_distance(&Vector2::zeros(), &Vector2::x(), &Vector2::new(1.0, 0.0), 0.3);
        assert!((d.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn nearer_disc_occludes() {
        let m = forward_mount();
        let both = simulate_scan(&m, &[human_at(2.0, 0.0), human_at(1.0, 0.0)], 0.0, None);
        let near = simulate_scan(&m, &[human_at(1.0, 0.0)], 0.0, None);
        let mid = m.ray_count() / 2;
        assert_eq!(both.ranges[mid], near.ranges[mid]);
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let m = forward_mount();
        let humans = [human_at(1.0, 0.0)];
        let clean = simulate_scan(&m, &humans, 0.0, None);
        let mut n1 = RangeNoise::new(0.005, 3);
        let mut n2 = RangeNoise::new(0.005, 3);
        let a = simulate_scan(&m, &humans, 0.0, Some(&mut n1));
        let b = simulate_scan(&m, &humans, 0.0, Some(&mut n2));
        assert_eq!(a, b);
        for (x, y) in a.ranges.iter().zip(&clean.ranges) {
            assert!((x - y).abs() <= 0.005 + 1e-12);
        }
    }

    #[test]
    fn sentinel_scan_gives_no_occupancy() {
        let layout = build_zone_layout(0.5, 1.5, 0.9, 0.425).unwrap();
        let m = forward_mount();
        let scan = simulate_scan(&m, &[], 0.0, None);
        assert!(scan_to_occupancy(&scan, &m, &layout).is_empty());
    }

    #[test]
    fn danger_hit_is_reported() {
        let layout = build_zone_layout(0.5, 1.5, 0.9, 0.425).unwrap();
        let m = ScannerMount::new("l", 0.0, -0.45, 0.6);
        let scan = simulate_scan(&m, &[human_at(0.9, 0.3)], 0.0, None);
        let hits = scan_to_occupancy(&scan, &m, &layout);
        assert!(hits
            .iter()
            .any(|(l, _)| l.zone == Zone::Danger && l.quadrant == Quadrant::Right));
    }
}
