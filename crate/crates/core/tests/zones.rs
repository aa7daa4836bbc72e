mod common;

use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dec, dec_nanos, mul, nanos};
use ssm_core::zones::{
    build_zone_layout, classify_footprint, classify_point, compute_msd_static, Quadrant, Rect,
    SafetyParams, Zone, ZoneError, ZoneLayout,
};

fn layout() -> ZoneLayout {
    build_zone_layout(0.5, 1.5, 0.9, 0.425).unwrap()
}

fn static_oracle(k: &str, t: &str, c: &str, d: &str) -> i128 {
    dec_nanos(mul(dec(k), dec(t)) + dec(c) + dec(d))
}

fn params(k: f64, t: f64, c: f64, delta: f64) -> SafetyParams {
    SafetyParams { k, t, c, delta }
}

#[test]
fn static_msd_worked_examples() {
    let cases = [
        (("1.6", "0.5", "0.85", "0.1"), params(1.6, 0.5, 0.85, 0.1), 1.75),
        (("0", "0", "0", "0"), params(0.0, 0.0, 0.0, 0.0), 0.0),
        (("1.6", "0.2", "0", "0.05"), params(1.6, 0.2, 0.0, 0.05), 0.37),
        (("1.6", "0.164", "0.25", "0.1"), SafetyParams::default(), 0.6124),
    ];
    for ((k, t, c, d), p, expected) in cases {
        let got = compute_msd_static(&p).unwrap();
        assert_eq!(nanos(got), static_oracle(k, t, c, d));
        assert_eq!(nanos(got), nanos(expected));
    }
}

#[test]
fn negative_parameter_is_rejected() {
    let err = compute_msd_static(&params(1.6, -0.1, 0.0, 0.0)).unwrap_err();
    assert!(matches!(err, ZoneError::InvalidParameter { field: "t", .. }));
    assert!(compute_msd_static(&params(f64::NAN, 0.1, 0.0, 0.0)).is_err());
}

#[test]
fn reference_layout_has_two_equal_quadrants() {
    let l = layout();
    assert_eq!(l.quadrant_half_width, 0.425);
    assert!(l.is_nested());
    for zone in [Zone::Danger, Zone::Warning, Zone::Normal] {
        let (left, right) = l.rect(zone).halves();
        assert!((left.area() - right.area()).abs() <= 1e-12);
    }
    assert!((l.warning_clearance() - 0.5).abs() < 1e-12);
}

#[test]
fn oversize_msd_is_infeasible() {
    assert!(matches!(
        build_zone_layout(2.0, 1.5, 0.9, 0.425),
        Err(ZoneError::InfeasibleLayout(_))
    ));
}

#[test]
fn named_points() {
    let l = layout();
    assert_eq!(classify_point(&l, &Vector3::new(0.0, 0.0, 1.0)).zone, Zone::Danger);
    let p = classify_point(&l, &Vector3::new(1.2, 0.2, 1.0));
    assert_eq!((p.zone, p.quadrant), (Zone::Warning, Quadrant::Right));
    let far = classify_point(&l, &Vector3::new(3.0, -0.2, 1.0));
    assert_eq!((far.zone, far.quadrant), (Zone::Normal, Quadrant::Left));
}

#[test]
fn named_discs() {
    let l = layout();
    let d = classify_footprint(&l, &Vector2::new(1.45, 0.3), 0.02);
    assert_eq!((d.zone, d.quadrant), (Zone::Normal, Quadrant::Right));
    let s = classify_footprint(&l, &Vector2::new(1.2, 0.0), 0.1);
    assert_eq!((s.zone, s.quadrant), (Zone::Warning, Quadrant::Both));
}

fn inside(r: &Rect, x: f64, y: f64) -> bool {
    r.x_min <= x && x <= r.x_max && r.y_min <= y && y <= r.y_max
}

/// Independent membership test on the raw rectangle corners.
fn brute_force(l: &ZoneLayout, p: &Vector3<f64>) -> (Zone, Quadrant) {
    let q = if p.y > 0.0 {
        Quadrant::Right
    } else if p.y < 0.0 {
        Quadrant::Left
    } else {
        Quadrant::Both
    };
    if p.z < l.height_band.0 || p.z > l.height_band.1 {
        return (Zone::Normal, q);
    }
    let zone = if inside(&l.danger, p.x, p.y) {
        Zone::Danger
    } else if inside(&l.warning, p.x, p.y) {
        Zone::Warning
    } else {
        Zone::Normal
    };
    (zone, q)
}

#[test]
fn ten_thousand_points_match_brute_force() {
    let l = layout();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let p = Vector3::new(
            rng.random_range(-0.5..2.0),
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.2..2.2),
        );
        let label = classify_point(&l, &p);
        assert_eq!((label.zone, label.quadrant), brute_force(&l, &p), "at {p:?}");
    }
}

#[test]
fn thousand_discs_match_boundary_sampling() {
    let l = layout();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let c = Vector2::new(rng.random_range(-0.3..2.0), rng.random_range(-0.7..0.7));
        let r = rng.random_range(0.01..0.4);
        let mut worst = brute_force(&l, &Vector3::new(c.x, c.y, 1.0)).0;
        for i in 0..360 {
            let a = (i as f64).to_radians();
            let p = Vector3::new(c.x + r * a.cos(), c.y + r * a.sin(), 1.0);
            worst = worst.max(brute_force(&l, &p).0);
        }
        let got = classify_footprint(&l, &c, r);
        // Sampling can miss a corner clipped by less than the chord sagitta.
        if got.zone != worst {
            let sag = r * (1.0 - (0.5f64.to_radians()).cos());
            let shrunk = classify_footprint(&l, &c, r - 2.0 * sag);
            assert_eq!(shrunk.zone, worst, "disc {c:?} r {r}");
        }
        let straddles = c.y.abs() <= r;
        assert_eq!(got.quadrant == Quadrant::Both, straddles);
    }
}

proptest! {
    #[test]
    fn msd_is_linear_in_k(k in 0.0..3.0f64, t in 0.0..1.0f64, c in 0.0..1.0f64, d in 0.0..0.5f64) {
        let base = compute_msd_static(&params(k, t, c, d)).unwrap();
        let doubled = compute_msd_static(&params(2.0 * k, t, c, d)).unwrap();
        prop_assert!((doubled - base - k * t).abs() <= 1e-12);
    }

    #[test]
    fn layouts_are_nested_and_symmetric(
        msd in 0.15..0.6f64,
        len in 1.5..3.0f64,
        width in 0.9..2.0f64,
        half in 0.2..0.45f64,
    ) {
        if let Ok(l) = build_zone_layout(msd, len, width, half) {
            prop_assert!(l.is_nested());
            for zone in [Zone::Danger, Zone::Warning, Zone::Normal] {
                let (a, b) = l.rect(zone).halves();
                prop_assert!((a.area() - b.area()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn severity_grows_toward_the_base(x in -0.5..2.5f64, y in -0.8..0.8f64, s in 0.0..1.0f64) {
        let l = layout();
        let outer = classify_point(&l, &Vector3::new(x, y, 1.0)).zone;
        let inner = classify_point(&l, &Vector3::new(s * x, s * y, 1.0)).zone;
        prop_assert!(inner >= outer);
    }

    #[test]
    fn footprint_dominates_its_center(x in -0.5..2.5f64, y in -0.8..0.8f64, r in 0.001..0.5f64) {
        let l = layout();
        let disc = classify_footprint(&l, &Vector2::new(x, y), r).zone;
        let point = classify_point(&l, &Vector3::new(x, y, 1.0)).zone;
        prop_assert!(disc >= point);
    }
}
