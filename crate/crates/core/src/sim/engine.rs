use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scenario::{Scenario, ValidationIssue};
use super::task::{TaskEvent, TaskRunner};
use crate::controller::{
    CommandSource, HierarchicalController, JointServo, ModeKind, SpeedCommand, Strategy,
};
use crate::kinematics::{Pose, RobotModel};
use crate::perception::{
    min_distance_tcp, occupancy_of, scan_to_occupancy, simulate_scan, skeleton_sample, HumanState,
    RangeNoise, ScannerMount,
};
use crate::separation::compute_msd_dynamic;
use crate::zones::{classify_footprint, QuadrantOccupancy, Zone, ZoneLayout};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario:\n{}", format_issues(.0))]
    Invalid(Vec<ValidationIssue>),
    #[error("kinematics failure at t={t}: {message}")]
    Kinematics { t: f64, message: String },
}

pub fn format_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    ZoneEnter,
    ZoneExit,
    ModeSwitch,
    EStop,
    Deadlock,
    TaskStepDone,
    CycleDone,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::ZoneEnter,
        EventKind::ZoneExit,
        EventKind::ModeSwitch,
        EventKind::EStop,
        EventKind::Deadlock,
        EventKind::TaskStepDone,
        EventKind::CycleDone,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ZoneEnter => "ZoneEnter",
            EventKind::ZoneExit => "ZoneExit",
            EventKind::ModeSwitch => "ModeSwitch",
            EventKind::EStop => "EStop",
            EventKind::Deadlock => "Deadlock",
            EventKind::TaskStepDone => "TaskStepDone",
            EventKind::CycleDone => "CycleDone",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Payload is a space-separated list of `key=value` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub payload: String,
}

impl Event {
    pub fn new(t: f64, kind: EventKind, payload: impl Into<String>) -> Self {
        Self {
            t,
            kind,
            payload: payload.into(),
        }
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.payload
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

/// One control tick. Robot state is at `t`; `qdot_ref` is the joint-rate
/// reference that produced it and `qdot_cmd` the one issued at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub q: [f64; 6],
    pub qdot: [f64; 6],
    pub qdot_ref: [f64; 6],
    pub qdot_cmd: [f64; 6],
    pub effort: [f64; 6],
    /// TCP position in the cell frame.
    pub tcp: [f64; 3],
    /// Ground position of the tracked human, NaN when there is none.
    pub human: [f64; 2],
    pub human_speed: f64,
    pub human_zone: Zone,
    pub occupancy_left: Zone,
    pub occupancy_right: Zone,
    /// Ground-truth closest landmark distance, infinite without a human.
    pub d_true: f64,
    /// Distance the secondary loop is holding, infinite without a frame.
    pub d_sensed: f64,
    pub k_s: f64,
    pub msd_dynamic: f64,
    pub mode: ModeKind,
    pub fraction: f64,
    pub v_cartesian: f64,
    pub source: CommandSource,
    pub damped: bool,
    pub lyapunov: f64,
    pub task_pending: bool,
    pub task_step: usize,
}

impl TraceRow {
    pub fn regulating(&self) -> bool {
        self.qdot_ref.iter().all(|v| *v == 0.0)
    }

    pub fn commanded_moving(&self) -> bool {
        self.v_cartesian > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub scans: u64,
    pub frames: u64,
    pub guard_ticks: u64,
    pub damped_ticks: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub layout: ZoneLayout,
    pub rows: Vec<TraceRow>,
    pub events: Vec<Event>,
    pub stats: RunStats,
    /// Full-speed solo duration of one cycle divided by the parallelism factor.
    pub ideal_cycle_time: f64,
}

fn human_zone(layout: &ZoneLayout, h: &HumanState) -> Zone {
    classify_footprint(layout, &h.position, h.footprint_radius).zone
}

pub struct Simulation {
    scenario: Scenario,
    layout: ZoneLayout,
    model: RobotModel,
    base_height: f64,
    mounts: Vec<ScannerMount>,
    scan_ticks: Vec<u64>,
    noise: Vec<Option<RangeNoise>>,
    latest_occupancy: Vec<QuadrantOccupancy>,
    controller: HierarchicalController,
    servo: JointServo,
    task: TaskRunner,
    tick: u64,
    total_ticks: u64,
    next_frame: u64,
    zone_levels: Vec<Zone>,
    last_mode: Option<ModeKind>,
    stats: RunStats,
    events: Vec<Event>,
    ideal_cycle_time: f64,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        let issues = scenario.validate();
        if !issues.is_empty() {
            return Err(SimError::Invalid(issues));
        }
        let layout = scenario.layout().map_err(|e| SimError::Invalid(vec![e]))?;
        let model = scenario.robot.model.clone();
        let mut config = scenario.controller;
        config.strategy = scenario.mode;
        let mounts = scenario.perception.mounts(&scenario.cell);
        let scan_ticks = scenario.scan_ticks();
        let scan_period = mounts.iter().map(|m| m.scan_period).fold(0.0, f64::max);
        let q0 = scenario.robot.initial_joints();
        let pose = model
            .forward_kinematics(&q0)
            .map_err(|e| SimError::Kinematics { t: 0.0, message: e.to_string() })?;
        let base_height = scenario.robot.base_height;
        let task = TaskRunner::new(
            &scenario.task,
            scenario.mode,
            config.nominal_speed,
            base_height,
            pose.orientation,
        );
        let solo = TaskRunner::new(
            &scenario.task,
            Strategy::Autonomous,
            config.nominal_speed,
            base_height,
            pose.orientation,
        );
        let ideal_cycle_time = solo.nominal_cycle_time() / scenario.task.ideal_parallelism;
        let noise = (0..mounts.len())
            .map(|i| {
                scenario.perception.noise.then(|| {
                    RangeNoise::new(
                        scenario.perception.noise_amplitude,
                        scenario.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)),
                    )
                })
            })
            .collect();
        Ok(Self {
            controller: HierarchicalController::new(
                config,
                layout,
                scan_period,
                1.0 / scenario.perception.skeleton_rate,
            ),
            servo: JointServo::new(q0, &config.gains, config.dt, &config.servo),
            task,
            latest_occupancy: vec![QuadrantOccupancy::default(); mounts.len()],
            mounts,
            scan_ticks,
            noise,
            tick: 0,
            total_ticks: scenario.control_ticks(),
            next_frame: 0,
            zone_levels: vec![Zone::Normal; scenario.humans.len()],
            last_mode: None,
            stats: RunStats::default(),
            events: Vec::new(),
            ideal_cycle_time,
            base_height,
            model,
            layout,
            scenario: scenario.clone(),
        })
    }

    pub fn layout(&self) -> &ZoneLayout {
        &self.layout
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.total_ticks
    }

    pub fn humans_at(&self, t: f64) -> Vec<HumanState> {
        self.scenario.humans.iter().map(|h| h.state_at(t)).collect()
    }

    fn zone_events(&mut self, t: f64, humans: &[HumanState]) {
        for (i, h) in humans.iter().enumerate() {
            let now = human_zone(&self.layout, h);
            let before = self.zone_levels[i];
            let quadrant = classify_footprint(&self.layout, &h.position, h.footprint_radius).quadrant;
            let payload = |z: Zone| format!("human={i} zone={} quadrant={}", z.as_str(), quadrant.as_str());
            if now > before {
                for z in [Zone::Warning, Zone::Danger] {
                    if z > before && z <= now {
                        self.events.push(Event::new(t, EventKind::ZoneEnter, payload(z)));
                    }
                }
            } else if now < before {
                for z in [Zone::Danger, Zone::Warning] {
                    if z <= before && z > now {
                        self.events.push(Event::new(t, EventKind::ZoneExit, payload(z)));
                    }
                }
            }
            self.zone_levels[i] = now;
        }
    }

    fn mode_events(&mut self, cmd: &SpeedCommand) {
        let kind = cmd.mode.kind;
        if let Some(prev) = self.last_mode {
            if prev != kind {
                self.events.push(Event::new(
                    cmd.t,
                    EventKind::ModeSwitch,
                    format!("from={} to={} source={}", prev.as_str(), kind.as_str(), cmd.source.as_str()),
                ));
                if kind == ModeKind::EStop {
                    let reason = if self.controller.diagnostics().guard_violated {
                        "separation"
                    } else {
                        match self.controller.latch() {
                            Some(crate::controller::Latch::Watchdog) => "watchdog",
                            _ => "operator",
                        }
                    };
                    self.events.push(Event::new(cmd.t, EventKind::EStop, format!("reason={reason}")));
                }
            }
        }
        self.last_mode = Some(kind);
    }

    /// Advances one control period and returns its trace row.
    pub fn step(&mut self) -> Result<Option<TraceRow>, SimError> {
        if self.is_finished() {
            return Ok(None);
        }
        let dt = self.controller.config().dt;
        let k = self.tick;
        let t = k as f64 * dt;
        let humans = self.humans_at(t);

        let mut scanned = false;
        for i in 0..self.mounts.len() {
            if k % self.scan_ticks[i] == 0 {
                let scan = simulate_scan(&self.mounts[i], &humans, t, self.noise[i].as_mut());
                let hits = scan_to_occupancy(&scan, &self.mounts[i], &self.layout);
                self.latest_occupancy[i] = occupancy_of(&hits);
                scanned = true;
            }
        }
        let occupancy = self
            .latest_occupancy
            .iter()
            .fold(QuadrantOccupancy::default(), |a, b| a.merge(b));
        if scanned {
            self.stats.scans += 1;
            self.controller.on_scan(t, occupancy);
        }

        let rate = self.scenario.perception.skeleton_rate;
        while self.next_frame as f64 / rate <= t + 1e-9 {
            let frame_t = self.next_frame as f64 / rate;
            let frame = self
                .scenario
                .humans
                .first()
                .map(|h| skeleton_sample(&h.state_at(frame_t), frame_t));
            self.controller.on_skeleton(frame_t, frame);
            self.stats.frames += 1;
            self.next_frame += 1;
        }

        let state = self.servo.state();
        let pose: Pose = self
            .model
            .forward_kinematics(&state.q)
            .map_err(|e| SimError::Kinematics { t, message: e.to_string() })?;
        let tcp = pose.position + Vector3::new(0.0, 0.0, self.base_height);
        let jacobian = self.model.jacobian(&state.q);

        let (demand, task_events) = self.task.update(&pose, self.controller.fraction(), dt);
        for e in task_events {
            self.events.push(match e {
                TaskEvent::StepDone { cycle, step, name } => Event::new(
                    t,
                    EventKind::TaskStepDone,
                    format!("cycle={cycle} step={step} name={name}"),
                ),
                TaskEvent::CycleDone { cycle } => {
                    Event::new(t, EventKind::CycleDone, format!("cycle={cycle}"))
                }
            });
        }

        let cmd = self
            .controller
            .step(t, &tcp, tcp.y, &jacobian.0, &state.q, &self.model, &demand);
        self.mode_events(&cmd);
        self.zone_events(t, &humans);

        let diag = *self.controller.diagnostics();
        if diag.guard_violated {
            self.stats.guard_ticks += 1;
        }
        if cmd.damped {
            self.stats.damped_ticks += 1;
        }

        let tracked = humans.first();
        let d_true = tracked
            .and_then(|h| min_distance_tcp(&skeleton_sample(h, t), &tcp))
            .map_or(f64::INFINITY, |(d, _)| d);
        let v_h = tracked.map_or(0.0, |h| h.walk_speed);
        let msd_dynamic = compute_msd_dynamic(
            &self.controller.config().separation.inputs(v_h, cmd.v_cartesian),
        );
        let (_, qdot_ref) = self.servo.reference();
        let row = TraceRow {
            t,
            q: state.q.into(),
            qdot: state.qdot.into(),
            qdot_ref: qdot_ref.into(),
            qdot_cmd: cmd.qdot_cmd.into(),
            effort: self.servo.effort().into(),
            tcp: tcp.into(),
            human: tracked.map_or([f64::NAN; 2], |h| h.position.into()),
            human_speed: v_h,
            human_zone: tracked.map_or(Zone::Normal, |h| human_zone(&self.layout, h)),
            occupancy_left: occupancy.left,
            occupancy_right: occupancy.right,
            d_true,
            d_sensed: diag.d_i.unwrap_or(f64::INFINITY),
            k_s: diag.k_s,
            msd_dynamic,
            mode: cmd.mode.kind,
            fraction: cmd.mode.fraction,
            v_cartesian: cmd.v_cartesian,
            source: cmd.source,
            damped: cmd.damped,
            lyapunov: self.servo.lyapunov(),
            task_pending: self.task.pending(),
            task_step: self.task.step_index(),
        };

        self.servo.step(&cmd.qdot_cmd);
        self.tick += 1;
        Ok(Some(row))
    }

    pub fn finish(self, rows: Vec<TraceRow>) -> RunResult {
        let mut events = self.events;
        events.extend(detect_deadlock(&rows, self.scenario.deadlock_threshold));
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        RunResult {
            scenario: self.scenario,
            layout: self.layout,
            rows,
            events,
            stats: self.stats,
            ideal_cycle_time: self.ideal_cycle_time,
        }
    }
}

/// Runs a scenario to completion, handing every row to `observer` as it is produced.
pub fn run_observed(
    scenario: &Scenario,
    observer: &mut dyn FnMut(&TraceRow),
) -> Result<RunResult, SimError> {
    let mut sim = Simulation::new(scenario)?;
    let mut rows = Vec::with_capacity(sim.total_ticks as usize);
    while let Some(row) = sim.step()? {
        observer(&row);
        rows.push(row);
    }
    Ok(sim.finish(rows))
}

pub fn run(scenario: &Scenario) -> Result<RunResult, SimError> {
    run_observed(scenario, &mut |_| {})
}

/// A stall is a stretch of rows with zero commanded speed while work is
/// pending; one event per stall longer than `threshold`, stamped when the
/// threshold is crossed.
pub fn detect_deadlock(rows: &[TraceRow], threshold: f64) -> Vec<Event> {
    let mut out = Vec::new();
    if !threshold.is_finite() {
        return out;
    }
    let mut start: Option<f64> = None;
    let mut last_t = 0.0;
    let close = |start: f64, end: f64, out: &mut Vec<Event>| {
        if end - start > threshold {
            out.push(Event::new(
                start + threshold,
                EventKind::Deadlock,
                format!("start={start} end={end}"),
            ));
        }
    };
    for row in rows {
        let stalled = row.task_pending && row.fraction == 0.0;
        match (stalled, start) {
            (true, None) => start = Some(row.t),
            (false, Some(s)) => {
                close(s, row.t, &mut out);
                start = None;
            }
            _ => {}
        }
        last_t = row.t;
    }
    if let Some(s) = start {
        let dt = rows.get(1).map_or(0.0, |r| r.t - rows[0].t);
        close(s, last_t + dt, &mut out);
    }
    out
}

/// Ground position of the tracked human, if any.
pub fn human_position(row: &TraceRow) -> Option<Vector2<f64>> {
    row.human[0]
        .is_finite()
        .then(|| Vector2::new(row.human[0], row.human[1]))
}
