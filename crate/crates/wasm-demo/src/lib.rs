//! Thin wasm-bindgen layer over `ssm-core` for the static page in `www/`.

use std::path::Path;

use nalgebra::Vector3;
use ssm_core::controller::Strategy;
use ssm_core::io::scenario_from_str;
use ssm_core::separation::{compute_msd_dynamic, SeparationInputs};
use ssm_core::sim::run;
use ssm_core::zones::{build_zone_layout_with, classify_point, compute_msd_static, CellGeometry, SafetyParams, ZoneLayout};
use wasm_bindgen::prelude::*;

const APPROACH_RETREAT: &str = include_str!("../../core/scenarios/approach_retreat.toml");

#[wasm_bindgen]
pub fn msd_static(k: f64, t: f64, c: f64, delta: f64) -> Result<f64, String> {
    compute_msd_static(&SafetyParams { k, t, c, delta }).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn msd_dynamic(v_h: f64, v_r: f64, t_r: f64, t_s: f64, c: f64, z_r: f64, z_d: f64) -> f64 {
    compute_msd_dynamic(&SeparationInputs { v_h, v_r, t_r, t_s, c, z_r, z_d })
}

/// Zone layout of the default cell, rebuilt for a given separation distance.
#[wasm_bindgen]
pub struct ZoneMap {
    layout: ZoneLayout,
}

#[wasm_bindgen]
impl ZoneMap {
    #[wasm_bindgen(constructor)]
    pub fn new(msd: f64) -> Result<ZoneMap, String> {
        let layout = build_zone_layout_with(msd, &CellGeometry::default()).map_err(|e| e.to_string())?;
        Ok(ZoneMap { layout })
    }

    /// `"<zone>/<quadrant>"` for a point in the cell frame.
    pub fn classify(&self, x: f64, y: f64, z: f64) -> String {
        let label = classify_point(&self.layout, &Vector3::new(x, y, z));
        format!("{}/{}", label.zone.as_str(), label.quadrant.as_str())
    }

    /// Danger, warning and normal rectangles as `x_min, x_max, y_min, y_max` quadruples.
    pub fn rects(&self) -> Vec<f64> {
        [&self.layout.danger, &self.layout.warning, &self.layout.normal]
            .iter()
            .flat_map(|r| [r.x_min, r.x_max, r.y_min, r.y_max])
            .collect()
    }

    pub fn trigger_distance(&self) -> f64 {
        self.layout.trigger_distance
    }
}

/// Runs the bundled approach-and-retreat walk under `mode` and returns every
/// `stride`-th row as interleaved `t, fraction, human-TCP distance` triples.
#[wasm_bindgen]
pub fn fraction_profile(mode: &str, stride: usize) -> Result<Vec<f64>, String> {
    let strategy = Strategy::ALL
        .into_iter()
        .find(|s| s.as_str() == mode)
        .ok_or_else(|| format!("unknown mode {mode:?}"))?;
    let mut scenario =
        scenario_from_str(APPROACH_RETREAT, Path::new("approach_retreat.toml")).map_err(|e| e.to_string())?;
    scenario.mode = strategy;
    let result = run(&scenario).map_err(|e| e.to_string())?;
    Ok(result
        .rows
        .iter()
        .step_by(stride.max(1))
        .flat_map(|r| [r.t, r.fraction, r.d_true])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calculators_forward_to_core() {
        assert!((msd_static(1.6, 0.5, 0.85, 0.1).unwrap() - 1.75).abs() < 1e-12);
        assert!(msd_static(-1.0, 0.5, 0.0, 0.0).is_err());
        assert!((msd_dynamic(1.6, 1.0, 0.1, 0.064, 0.2, 0.05, 0.05) - 0.8264).abs() < 1e-12);
    }

    #[test]
    fn zone_map_labels_points() {
        let map = ZoneMap::new(0.6124).unwrap();
        assert_eq!(map.classify(0.5, 0.2, 1.0), "Danger/Right");
        assert_eq!(map.classify(3.0, -0.2, 1.0), "Normal/Left");
        assert_eq!(map.rects().len(), 12);
    }

    #[test]
    fn profile_reaches_standstill_and_recovers() {
        let p = fraction_profile("proposed", 10).unwrap();
        let f: Vec<f64> = p.chunks(3).map(|c| c[1]).collect();
        assert!(f.contains(&0.0));
        assert_eq!(*f.last().unwrap(), 1.0);
        assert!(fraction_profile("bogus", 1).is_err());
    }
}
