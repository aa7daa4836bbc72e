//! Cycle time, reaction time, flexibility rate and OEE from a finished run.
//!
//! Conventions used here:
//! * flexibility rate is the share of task-pending time during which the
//!   commanded speed fraction is at or above the collaborative level;
//! * OEE is availability × performance × quality, where availability counts
//!   e-stop rows and deadlocked stretches as downtime over task-pending
//!   time, performance is the ideal over the mean cycle time (capped at 1)
//!   and quality is 1;
//! * reaction time averages, over zone entries, the delay to the first
//!   commanded mode change, ignoring entries that cause no change within
//!   [`REACTION_WINDOW`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ModeKind, COLLABORATIVE_FRACTION};
use crate::sim::{Event, EventKind, TraceRow};

pub const REACTION_WINDOW: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum KpiError {
    #[error("run completed no cycle")]
    Incomplete,
    #[error("ideal cycle time must be positive and finite, got {0}")]
    InvalidIdealCycleTime(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub mode: String,
    pub cycle_time: f64,
    pub cycles: usize,
    /// `None` when no zone entry led to a speed change.
    pub reaction_time: Option<f64>,
    pub intrusions: usize,
    pub reactive_intrusions: usize,
    pub flexibility_rate: f64,
    pub oee: f64,
    pub availability: f64,
    pub performance: f64,
    pub quality: f64,
    pub deadlocks: usize,
}

fn sorted_rows(rows: &[TraceRow]) -> Vec<&TraceRow> {
    let mut v: Vec<&TraceRow> = rows.iter().collect();
    v.sort_by(|a, b| a.t.total_cmp(&b.t));
    v
}

fn sorted_events(events: &[Event]) -> Vec<&Event> {
    let mut v: Vec<&Event> = events.iter().collect();
    v.sort_by(|a, b| a.t.total_cmp(&b.t));
    v
}

/// Mean interval between successive cycle completions, the first measured from t = 0.
pub fn cycle_time(events: &[Event]) -> Result<f64, KpiError> {
    let done: Vec<f64> = sorted_events(events)
        .into_iter()
        .filter(|e| e.kind == EventKind::CycleDone)
        .map(|e| e.t)
        .collect();
    let last = *done.last().ok_or(KpiError::Incomplete)?;
    Ok(last / done.len() as f64)
}

/// Per-entry latencies to the first commanded mode change.
pub fn reaction_latencies(rows: &[TraceRow], events: &[Event], window: f64) -> (usize, Vec<f64>) {
    let rows = sorted_rows(rows);
    let entries: Vec<f64> = sorted_events(events)
        .into_iter()
        .filter(|e| e.kind == EventKind::ZoneEnter)
        .map(|e| e.t)
        .collect();
    let latencies = entries
        .iter()
        .filter_map(|&te| {
            let i = rows.partition_point(|r| r.t < te);
            (i.max(1)..rows.len())
                .take_while(|&j| rows[j].t - te <= window)
                .find(|&j| rows[j].mode != rows[j - 1].mode)
                .map(|j| rows[j].t - te)
        })
        .collect();
    (entries.len(), latencies)
}

pub fn reaction_time(rows: &[TraceRow], events: &[Event]) -> Option<f64> {
    let (_, lat) = reaction_latencies(rows, events, REACTION_WINDOW);
    (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64)
}

pub fn flexibility_rate(rows: &[TraceRow]) -> f64 {
    let pending: Vec<&TraceRow> = sorted_rows(rows).into_iter().filter(|r| r.task_pending).collect();
    if pending.is_empty() {
        return 1.0;
    }
    let productive = pending
        .iter()
        .filter(|r| r.fraction >= COLLABORATIVE_FRACTION)
        .count();
    productive as f64 / pending.len() as f64
}

fn deadlock_intervals(events: &[Event]) -> Vec<(f64, f64)> {
    events
        .iter()
        .filter(|e| e.kind == EventKind::Deadlock)
        .filter_map(|e| {
            let start = e.field("start")?.parse().ok()?;
            let end = e.field("end")?.parse().ok()?;
            Some((start, end))
        })
        .collect()
}

pub fn availability(rows: &[TraceRow], events: &[Event]) -> f64 {
    let stalls = deadlock_intervals(events);
    let pending: Vec<&TraceRow> = sorted_rows(rows).into_iter().filter(|r| r.task_pending).collect();
    if pending.is_empty() {
        return 1.0;
    }
    let down = pending
        .iter()
        .filter(|r| r.mode == ModeKind::EStop || stalls.iter().any(|&(s, e)| r.t >= s && r.t < e))
        .count();
    1.0 - down as f64 / pending.len() as f64
}

pub fn oee(rows: &[TraceRow], events: &[Event], ideal_cycle_time: f64) -> Result<f64, KpiError> {
    if !(ideal_cycle_time > 0.0 && ideal_cycle_time.is_finite()) {
        return Err(KpiError::InvalidIdealCycleTime(ideal_cycle_time));
    }
    let performance = (ideal_cycle_time / cycle_time(events)?).min(1.0);
    Ok(availability(rows, events) * performance)
}

pub fn kpi_report(
    mode: &str,
    rows: &[TraceRow],
    events: &[Event],
    ideal_cycle_time: f64,
) -> Result<KpiReport, KpiError> {
    let cycle = cycle_time(events)?;
    let (intrusions, lat) = reaction_latencies(rows, events, REACTION_WINDOW);
    let availability = availability(rows, events);
    let performance = (ideal_cycle_time / cycle).min(1.0);
    let oee = oee(rows, events, ideal_cycle_time)?;
    Ok(KpiReport {
        mode: mode.to_string(),
        cycle_time: cycle,
        cycles: events.iter().filter(|e| e.kind == EventKind::CycleDone).count(),
        reaction_time: (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64),
        intrusions,
        reactive_intrusions: lat.len(),
        flexibility_rate: flexibility_rate(rows),
        oee,
        availability,
        performance,
        quality: 1.0,
        deadlocks: events.iter().filter(|e| e.kind == EventKind::Deadlock).count(),
    })
}
