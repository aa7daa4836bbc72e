//! Fixed-step simulation of the cell and the three-way benchmark.

mod benchmark;
mod engine;
mod scenario;
mod task;

pub use benchmark::{
    benchmark, comparison_table, BenchmarkError, BenchmarkReport, ModeRun, SEQUENTIAL_LABEL,
};
pub use engine::{
    detect_deadlock, format_issues, human_position, run, run_observed, Event, EventKind, RunResult,
    RunStats, SimError, Simulation, TraceRow,
};
pub use scenario::{
    HumanScript, PerceptionSetup, RobotSetup, Scenario, TaskSpec, TaskStep, ValidationIssue,
    Waypoint,
};
pub use task::{move_duration, TaskEvent, TaskRunner};
