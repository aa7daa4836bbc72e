#![allow(dead_code)]

use std::path::PathBuf;

/// Exact decimal arithmetic on integers scaled by 10^SCALE.
pub const SCALE: u32 = 6;

pub fn dec(s: &str) -> i128 {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    assert!(frac.len() <= SCALE as usize, "too many decimals in {s}");
    let neg = int.starts_with('-');
    let int: i128 = int.trim_start_matches('-').parse().unwrap_or(0);
    let frac_val: i128 = if frac.is_empty() { 0 } else { frac.parse().unwrap() };
    let v = int * 10i128.pow(SCALE) + frac_val * 10i128.pow(SCALE - frac.len() as u32);
    if neg {
        -v
    } else {
        v
    }
}

pub fn mul(a: i128, b: i128) -> i128 {
    let p = a * b;
    assert_eq!(p % 10i128.pow(SCALE), 0, "product not representable");
    p / 10i128.pow(SCALE)
}

/// Calculator output as nanometres; oracle values as the same unit.
pub fn nanos(x: f64) -> i128 {
    (x * 1e9).round() as i128
}

pub fn dec_nanos(v: i128) -> i128 {
    v * 10i128.pow(9 - SCALE)
}

pub fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn bundled_scenarios() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenario(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

use ssm_core::controller::{CommandSource, ModeKind};
use ssm_core::sim::TraceRow;
use ssm_core::zones::Zone;

/// A row with no human, robot idle at the origin of joint space.
pub fn blank_row(t: f64) -> TraceRow {
    TraceRow {
        t,
        q: [0.0; 6],
        qdot: [0.0; 6],
        qdot_ref: [0.0; 6],
        qdot_cmd: [0.0; 6],
        effort: [0.0; 6],
        tcp: [0.4, 0.2, 0.95],
        human: [f64::NAN; 2],
        human_speed: 0.0,
        human_zone: Zone::Normal,
        occupancy_left: Zone::Normal,
        occupancy_right: Zone::Normal,
        d_true: f64::INFINITY,
        d_sensed: f64::INFINITY,
        k_s: 1.0,
        msd_dynamic: 0.35,
        mode: ModeKind::Full,
        fraction: 1.0,
        v_cartesian: 1.0,
        source: CommandSource::PrimaryLoop,
        damped: false,
        lyapunov: 0.0,
        task_pending: true,
        task_step: 0,
    }
}

pub fn with_mode(mut row: TraceRow, mode: ModeKind, fraction: f64) -> TraceRow {
    row.mode = mode;
    row.fraction = fraction;
    row.v_cartesian = fraction;
    row
}
