use std::fmt::Write as _;

use thiserror::Error;

use super::engine::{run, RunResult, SimError};
use super::scenario::Scenario;
use crate::controller::Strategy;
use crate::kpi::{kpi_report, KpiError, KpiReport};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("{label}: {source}")]
    Sim { label: String, source: SimError },
    #[error("{label}: {source}")]
    Kpi { label: String, source: KpiError },
}

#[derive(Debug, Clone)]
pub struct ModeRun {
    pub label: String,
    pub strategy: Strategy,
    pub sequential: bool,
    pub result: RunResult,
    pub kpi: KpiReport,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub scenario: String,
    pub ideal_cycle_time: f64,
    pub runs: Vec<ModeRun>,
}

impl BenchmarkReport {
    pub fn get(&self, label: &str) -> Option<&ModeRun> {
        self.runs.iter().find(|r| r.label == label)
    }

    pub fn kpi(&self, label: &str) -> Option<&KpiReport> {
        self.get(label).map(|r| &r.kpi)
    }
}

pub const SEQUENTIAL_LABEL: &str = "proposed_sequential";

/// Runs the scenario under every strategy, plus the proposed controller with
/// sequential sensor handling, one thread per run.
pub fn benchmark(base: &Scenario) -> Result<BenchmarkReport, BenchmarkError> {
    let mut variants: Vec<(String, Strategy, bool)> = Strategy::ALL
        .iter()
        .map(|s| (s.as_str().to_string(), *s, false))
        .collect();
    variants.push((SEQUENTIAL_LABEL.to_string(), Strategy::Proposed, true));

    let outcomes: Vec<Result<ModeRun, BenchmarkError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|(label, strategy, sequential)| {
                let mut scenario = base.clone();
                scenario.mode = *strategy;
                scenario.controller.sequential = *sequential;
                let label = label.clone();
                let (strategy, sequential) = (*strategy, *sequential);
                scope.spawn(move || {
                    let result = run(&scenario).map_err(|source| BenchmarkError::Sim {
                        label: label.clone(),
                        source,
                    })?;
                    let kpi = kpi_report(&label, &result.rows, &result.events, result.ideal_cycle_time)
                        .map_err(|source| BenchmarkError::Kpi {
                            label: label.clone(),
                            source,
                        })?;
                    Ok(ModeRun {
                        label,
                        strategy,
                        sequential,
                        result,
                        kpi,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("benchmark worker panicked"))
            .collect()
    });
    let runs = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(BenchmarkReport {
        scenario: base.name.clone(),
        ideal_cycle_time: runs.first().map_or(0.0, |r| r.result.ideal_cycle_time),
        runs,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

pub fn comparison_table(report: &BenchmarkReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>12} {:>14} {:>12} {:>8} {:>8} {:>6} {:>9}",
        "mode", "cycle_time_s", "reaction_time_s", "flexibility", "oee", "cycles", "estop", "deadlocks"
    );
    for r in &report.runs {
        let k = &r.kpi;
        let estops = r
            .result
            .events
            .iter()
            .filter(|e| e.kind == super::EventKind::EStop)
            .count();
        let _ = writeln!(
            out,
            "{:<20} {:>12.3} {:>14} {:>12.4} {:>8.4} {:>8} {:>6} {:>9}",
            r.label,
            k.cycle_time,
            opt(k.reaction_time),
            k.flexibility_rate,
            k.oee,
            k.cycles,
            estops,
            k.deadlocks
        );
    }
    let _ = writeln!(out, "ideal cycle time: {:.3} s", report.ideal_cycle_time);
    out
}
