//! Static separation distance and the three-layer, two-quadrant zone layout.
//!
//! Cell frame conventions: the robot base sits on the origin, `+x` points
//! from the bench toward the operator (approach axis), `+y` is the lateral
//! axis and `z` is height above the floor. The split line between the two
//! quadrants is `y = 0`; `y > 0` is the right quadrant.

use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ZoneError {
    #[error("safety parameter `{field}` must be finite and non-negative, got {value}")]
    InvalidParameter { field: &'static str, value: f64 },
    #[error("infeasible zone layout: {0}")]
    InfeasibleLayout(String),
}

/// Inputs to the static minimum separation distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    /// Operator approach speed (m/s).
    pub k: f64,
    /// Overall stop time of perception plus control (s).
    pub t: f64,
    /// Intrusion distance of articulated body parts (m).
    pub c: f64,
    /// Position uncertainty allowance (m).
    pub delta: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            k: 1.6,
            t: 0.164,
            c: 0.25,
            delta: 0.1,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<(), ZoneError> {
        for (field, value) in [("k", self.k), ("t", self.t), ("c", self.c), ("delta", self.delta)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(ZoneError::InvalidParameter { field, value });
            }
        }
        Ok(())
    }
}

/// `K·T + C + δ`.
pub fn compute_msd_static(params: &SafetyParams) -> Result<f64, ZoneError> {
    params.validate()?;
    Ok(params.k * params.t + params.c + params.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Zone {
    Normal,
    Warning,
    Danger,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Normal => "Normal",
            Zone::Warning => "Warning",
            Zone::Danger => "Danger",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Normal" => Some(Zone::Normal),
            "Warning" => Some(Zone::Warning),
            "Danger" => Some(Zone::Danger),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    Left,
    Right,
    Both,
}

impl Quadrant {
    pub fn of_lateral(y: f64) -> Self {
        if y > 0.0 {
            Quadrant::Right
        } else if y < 0.0 {
            Quadrant::Left
        } else {
            Quadrant::Both
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::Left => "Left",
            Quadrant::Right => "Right",
            Quadrant::Both => "Both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ZoneLabel {
    pub zone: Zone,
    pub quadrant: Quadrant,
}

impl ZoneLabel {
    pub fn new(zone: Zone, quadrant: Quadrant) -> Self {
        Self { zone, quadrant }
    }
}

/// Closed axis-aligned rectangle in the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x_min >= self.x_min
            && other.x_max <= self.x_max
            && other.y_min >= self.y_min
            && other.y_max <= self.y_max
    }

    /// Closed disc/rectangle intersection.
    pub fn intersects_disc(&self, center: &Vector2<f64>, radius: f64) -> bool {
        let cx = center.x.clamp(self.x_min, self.x_max);
        let cy = center.y.clamp(self.y_min, self.y_max);
        let dx = center.x - cx;
        let dy = center.y - cy;
        dx * dx + dy * dy <= radius * radius
    }

    /// Split at `y = 0` into (left, right).
    pub fn halves(&self) -> (Rect, Rect) {
        (
            Rect {
                y_max: 0.0,
                ..*self
            },
            Rect {
                y_min: 0.0,
                ..*self
            },
        )
    }
}

/// Margin between the stretched arm and the outer edge of the danger band.
pub const DANGER_MARGIN: f64 = 0.100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneLayout {
    pub danger: Rect,
    pub warning: Rect,
    pub normal: Rect,
    /// Monitored height band above the floor, `[z_min, z_max]`.
    pub height_band: (f64, f64),
    pub quadrant_half_width: f64,
    pub laser_mount_height: f64,
    /// Static separation distance the layout was built from.
    pub msd: f64,
    /// Human–TCP distance at which the skeleton loop starts scaling speed.
    pub trigger_distance: f64,
    /// Human–TCP distance at which the skeleton loop stops the robot.
    pub stop_distance: f64,
}

impl ZoneLayout {
    /// Kinematic reach implied by the quadrant width (two quadrants span it).
    pub fn reach(&self) -> f64 {
        2.0 * self.quadrant_half_width
    }

    pub fn rect(&self, zone: Zone) -> &Rect {
        match zone {
            Zone::Normal => &self.normal,
            Zone::Warning => &self.warning,
            Zone::Danger => &self.danger,
        }
    }

    pub fn in_height_band(&self, z: f64) -> bool {
        z >= self.height_band.0 && z <= self.height_band.1
    }

    /// Strict nesting: each inner band contained in, and different from, the outer one.
    pub fn is_nested(&self) -> bool {
        self.warning.contains_rect(&self.danger)
            && self.normal.contains_rect(&self.warning)
            && self.warning != self.danger
            && self.normal != self.warning
    }

    /// Distance from the stretched-arm TCP to the outer edge of the warning band.
    pub fn warning_clearance(&self) -> f64 {
        self.warning.x_max - self.reach()
    }

    pub fn export_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# zone x_min_m y_min_m x_max_m y_max_m\n");
        for zone in [Zone::Danger, Zone::Warning, Zone::Normal] {
            let r = self.rect(zone);
            let _ = writeln!(
                out,
                "{} {:.6} {:.6} {:.6} {:.6}",
                zone.as_str().to_lowercase(),
                r.x_min,
                r.y_min,
                r.x_max,
                r.y_max
            );
        }
        let _ = writeln!(out, "height_band {:.6} {:.6}", self.height_band.0, self.height_band.1);
        let _ = writeln!(out, "quadrant_half_width {:.6}", self.quadrant_half_width);
        let _ = writeln!(out, "laser_mount_height {:.6}", self.laser_mount_height);
        let _ = writeln!(out, "msd {:.6}", self.msd);
        let _ = writeln!(out, "trigger_distance {:.6}", self.trigger_distance);
        let _ = writeln!(out, "stop_distance {:.6}", self.stop_distance);
        out
    }
}

/// Geometry inputs for [`build_zone_layout`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    pub workspace_length: f64,
    pub workspace_width: f64,
    pub quadrant_half_width: f64,
    #[serde(default = "default_laser_height")]
    pub laser_mount_height: f64,
    #[serde(default = "default_height_band")]
    pub height_band: (f64, f64),
}

fn default_laser_height() -> f64 {
    0.400
}

fn default_height_band() -> (f64, f64) {
    (0.0, 2.0)
}

impl Default for CellGeometry {
    fn default() -> Self {
        Self {
            workspace_length: 1.5,
            workspace_width: 0.9,
            quadrant_half_width: 0.425,
            laser_mount_height: default_laser_height(),
            height_band: default_height_band(),
        }
    }
}

/// Builds nested danger/warning/normal rectangles in front of the robot.
///
/// All bands start at the bench edge `x = 0`. Danger reaches
/// `reach + DANGER_MARGIN`, warning reaches `reach + msd` and normal covers
/// the whole monitored length. Danger and warning span one quadrant half
/// width on each side of the split line; normal spans the workspace width.
pub fn build_zone_layout(
    msd: f64,
    workspace_length: f64,
    workspace_width: f64,
    quadrant_half_width: f64,
) -> Result<ZoneLayout, ZoneError> {
    build_zone_layout_with(
        msd,
        &CellGeometry {
            workspace_length,
            workspace_width,
            quadrant_half_width,
            ..CellGeometry::default()
        },
    )
}

pub fn build_zone_layout_with(msd: f64, cell: &CellGeometry) -> Result<ZoneLayout, ZoneError> {
    let CellGeometry {
        workspace_length,
        workspace_width,
        quadrant_half_width,
        laser_mount_height,
        height_band,
    } = *cell;
    if !(workspace_length > 0.0 && workspace_width > 0.0 && quadrant_half_width > 0.0) {
        return Err(ZoneError::InfeasibleLayout(
            "workspace dimensions and quadrant width must be positive".into(),
        ));
    }
    if !(msd >= 0.0) || !msd.is_finite() {
        return Err(ZoneError::InfeasibleLayout(format!("msd {msd} is not a distance")));
    }
    if msd >= workspace_length {
        return Err(ZoneError::InfeasibleLayout(format!(
            "msd {msd} m does not fit in a {workspace_length} m workspace"
        )));
    }
    if 2.0 * quadrant_half_width >= workspace_width + 1e-12 {
        return Err(ZoneError::InfeasibleLayout(format!(
            "two {quadrant_half_width} m quadrants do not fit in a {workspace_width} m wide workspace"
        )));
    }
    let reach = 2.0 * quadrant_half_width;
    let danger_x = reach + DANGER_MARGIN;
    let warning_x = reach + msd;
    if warning_x <= danger_x {
        return Err(ZoneError::InfeasibleLayout(format!(
            "msd {msd} m leaves no warning band beyond the {DANGER_MARGIN} m danger margin"
        )));
    }
    if warning_x >= workspace_length {
        return Err(ZoneError::InfeasibleLayout(format!(
            "warning edge at {warning_x:.3} m lies outside the {workspace_length} m workspace"
        )));
    }
    if !(height_band.0 < height_band.1) {
        return Err(ZoneError::InfeasibleLayout("empty height band".into()));
    }
    let band = |x_max: f64, half: f64| Rect {
        x_min: 0.0,
        x_max,
        y_min: -half,
        y_max: half,
    };
    let layout = ZoneLayout {
        danger: band(danger_x, quadrant_half_width),
        warning: band(warning_x, quadrant_half_width),
        normal: band(workspace_length, 0.5 * workspace_width),
        height_band,
        quadrant_half_width,
        laser_mount_height,
        msd,
        stop_distance: msd,
        trigger_distance: msd + (warning_x - danger_x),
    };
    debug_assert!(layout.is_nested());
    Ok(layout)
}

/// Innermost zone containing the ground projection of `p`; points outside
/// the height band or the monitored area are `Normal`.
pub fn classify_point(layout: &ZoneLayout, p: &Vector3<f64>) -> ZoneLabel {
    let quadrant = Quadrant::of_lateral(p.y);
    let zone = if !layout.in_height_band(p.z) {
        Zone::Normal
    } else if layout.danger.contains(p.x, p.y) {
        Zone::Danger
    } else if layout.warning.contains(p.x, p.y) {
        Zone::Warning
    } else {
        Zone::Normal
    };
    ZoneLabel { zone, quadrant }
}

/// Severest zone touched by a disc; `Both` when the disc meets the split line.
pub fn classify_footprint(layout: &ZoneLayout, center: &Vector2<f64>, radius: f64) -> ZoneLabel {
    let zone = if layout.danger.intersects_disc(center, radius) {
        Zone::Danger
    } else if layout.warning.intersects_disc(center, radius) {
        Zone::Warning
    } else {
        Zone::Normal
    };
    let quadrant = if center.y.abs() <= radius {
        Quadrant::Both
    } else {
        Quadrant::of_lateral(center.y)
    };
    ZoneLabel { zone, quadrant }
}

/// Worst zone seen in each quadrant; `Both` labels count for both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantOccupancy {
    pub left: Zone,
    pub right: Zone,
}

impl Default for QuadrantOccupancy {
    fn default() -> Self {
        Self {
            left: Zone::Normal,
            right: Zone::Normal,
        }
    }
}

impl QuadrantOccupancy {
    pub fn add(&mut self, label: ZoneLabel) {
        match label.quadrant {
            Quadrant::Left => self.left = self.left.max(label.zone),
            Quadrant::Right => self.right = self.right.max(label.zone),
            Quadrant::Both => {
                self.left = self.left.max(label.zone);
                self.right = self.right.max(label.zone);
            }
        }
    }

    pub fn merge(&self, other: &QuadrantOccupancy) -> QuadrantOccupancy {
        QuadrantOccupancy {
            left: self.left.max(other.left),
            right: self.right.max(other.right),
        }
    }

    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a ZoneLabel>) -> Self {
        let mut occ = Self::default();
        for l in labels {
            occ.add(*l);
        }
        occ
    }

    pub fn worst(&self) -> Zone {
        self.left.max(self.right)
    }

    pub fn get(&self, quadrant: Quadrant) -> Zone {
        match quadrant {
            Quadrant::Left => self.left,
            Quadrant::Right => self.right,
            Quadrant::Both => self.worst(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ZoneLayout {
        build_zone_layout(0.5, 1.5, 0.9, 0.425).unwrap()
    }

    #[test]
    fn static_msd_examples() {
        let zero = SafetyParams {
            k: 0.0,
            t: 0.0,
            c: 0.0,
            delta: 0.0,
        };
        assert_eq!(compute_msd_static(&zero).unwrap(), 0.0);
        let p = SafetyParams {
            k: 1.6,
            t: 0.5,
            c: 0.85,
            delta: 0.1,
        };
        assert!((compute_msd_static(&p).unwrap() - 1.75).abs() < 1e-12);
    }

    #[test]
    fn negative_parameter_rejected() {
        let p = SafetyParams {
            c: -0.1,
            ..SafetyParams::default()
        };
        assert_eq!(
            compute_msd_static(&p),
            Err(ZoneError::InvalidParameter {
                field: "c",
                value: -0.1
            })
        );
    }

    #[test]
    fn layout_matches_cell_dimensions() {
        let l = layout();
        assert!(l.is_nested());
        assert_eq!(l.danger.y_max, 0.425);
        assert_eq!(l.warning.y_min, -0.425);
        assert!((l.warning_clearance() - 0.5).abs() < 1e-12);
        assert!(l.trigger_distance > l.stop_distance);
    }

    #[test]
    fn oversized_msd_is_infeasible() {
        assert!(matches!(
            build_zone_layout(2.0, 1.5, 0.9, 0.425),
            Err(ZoneError::InfeasibleLayout(_))
        ));
    }

    #[test]
    fn origin_is_danger() {
        assert_eq!(classify_point(&layout(), &Vector3::zeros()).zone, Zone::Danger);
    }

    #[test]
    fn warning_right_point() {
        let label = classify_point(&layout(), &Vector3::new(1.1, 0.2, 0.4));
        assert_eq!(label, ZoneLabel::new(Zone::Warning, Quadrant::Right));
    }

    #[test]
    fn above_height_band_is_normal() {
        let label = classify_point(&layout(), &Vector3::new(0.2, -0.2, 2.5));
        assert_eq!(label, ZoneLabel::new(Zone::Normal, Quadrant::Left));
    }

    #[test]
    fn footprint_cases() {
        let l = layout();
        assert_eq!(
            classify_footprint(&l, &Vector2::new(1.45, 0.43), 0.05),
            ZoneLabel::new(Zone::Normal, Quadrant::Right)
        );
        assert_eq!(
            classify_footprint(&l, &Vector2::new(1.2, 0.0), 0.1),
            ZoneLabel::new(Zone::Warning, Quadrant::Both)
        );
    }

    #[test]
    fn occupancy_both_counts_for_each_side() {
        let mut occ = QuadrantOccupancy::default();
        occ.add(ZoneLabel::new(Zone::Warning, Quadrant::Both));
        occ.add(ZoneLabel::new(Zone::Danger, Quadrant::Left));
        assert_eq!(occ.left, Zone::Danger);
        assert_eq!(occ.right, Zone::Warning);
    }

    #[test]
    fn export_has_six_decimals() {
        let text = layout().export_text();
        assert!(text.contains("danger 0.000000 -0.425000 0.950000 0.425000"));
    }
}
