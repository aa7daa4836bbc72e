//! Scenario files, trace CSV with its event and metadata sidecars, plot
//! series and benchmark reports.
//!
//! Trace columns, in order (units in the header suffix):
//!
//! `t_s`, `q1_rad`..`q6_rad`, `qdot1_rad_s`..`qdot6_rad_s`,
//! `qdot_ref1_rad_s`..`qdot_ref6_rad_s`, `qdot_cmd1_rad_s`..`qdot_cmd6_rad_s`,
//! `effort1_rad_s`..`effort6_rad_s`, `tcp_x_m`, `tcp_y_m`, `tcp_z_m`,
//! `human_x_m`, `human_y_m`, `human_speed_m_s`, `human_zone`,
//! `occupancy_left`, `occupancy_right`, `d_true_m`, `d_sensed_m`, `k_s`,
//! `msd_dynamic_m`, `mode`, `fraction`, `v_cartesian_m_s`, `source`,
//! `damped`, `lyapunov`, `task_pending`, `task_step`.
//!
//! Floats use the shortest representation that reads back to the same bits,
//! so a written trace parses to identical rows.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::controller::{CommandSource, ModeKind};
use crate::kpi::KpiReport;
use crate::sim::{BenchmarkReport, Event, EventKind, Scenario, TraceRow, ValidationIssue};
use crate::stability::{StabilityPoint, StabilityReport};
use crate::zones::Zone;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: invalid scenario\n{}", crate::sim::format_issues(.issues))]
    Invalid {
        path: PathBuf,
        issues: Vec<ValidationIssue>,
    },
    #[error("{path}: row {row}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Validation and syntax problems as opposed to I/O failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses scenario text without validating it.
pub fn scenario_from_str(text: &str, path: &Path) -> Result<Scenario, IoError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        IoError::Syntax {
            path: path.to_path_buf(),
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let scenario = scenario_from_str(&text, path)?;
    let issues = scenario.validate();
    if issues.is_empty() {
        Ok(scenario)
    } else {
        Err(IoError::Invalid {
            path: path.to_path_buf(),
            issues,
        })
    }
}

pub fn scenario_to_toml(scenario: &Scenario) -> String {
    toml::to_string(scenario).expect("scenario serializes to TOML")
}

const JOINT_GROUPS: [(&str, &str); 5] = [
    ("q", "rad"),
    ("qdot", "rad_s"),
    ("qdot_ref", "rad_s"),
    ("qdot_cmd", "rad_s"),
    ("effort", "rad_s"),
];

const TAIL_COLUMNS: [&str; 21] = [
    "tcp_x_m",
    "tcp_y_m",
    "tcp_z_m",
    "human_x_m",
    "human_y_m",
    "human_speed_m_s",
    "human_zone",
    "occupancy_left",
    "occupancy_right",
    "d_true_m",
    "d_sensed_m",
    "k_s",
    "msd_dynamic_m",
    "mode",
    "fraction",
    "v_cartesian_m_s",
    "source",
    "damped",
    "lyapunov",
    "task_pending",
    "task_step",
];

pub fn trace_columns() -> Vec<String> {
    let mut cols = vec!["t_s".to_string()];
    for (name, unit) in JOINT_GROUPS {
        cols.extend((1..=6).map(|i| format!("{name}{i}_{unit}")));
    }
    cols.extend(TAIL_COLUMNS.iter().map(|c| c.to_string()));
    cols
}

pub fn trace_header() -> String {
    trace_columns().join(",")
}

pub fn format_row(row: &TraceRow) -> String {
    let mut s = String::with_capacity(512);
    let _ = write!(s, "{}", row.t);
    for group in [&row.q, &row.qdot, &row.qdot_ref, &row.qdot_cmd, &row.effort] {
        for v in group {
            let _ = write!(s, ",{v}");
        }
    }
    let _ = write!(
        s,
        ",{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.tcp[0],
        row.tcp[1],
        row.tcp[2],
        row.human[0],
        row.human[1],
        row.human_speed,
        row.human_zone.as_str(),
        row.occupancy_left.as_str(),
        row.occupancy_right.as_str(),
        row.d_true,
        row.d_sensed,
        row.k_s,
        row.msd_dynamic,
        row.mode.as_str(),
        row.fraction,
        row.v_cartesian,
        row.source.as_str(),
        row.damped,
        row.lyapunov,
        row.task_pending,
        row.task_step
    );
    s
}

pub fn parse_row(line: &str) -> Result<TraceRow, String> {
    let columns = trace_columns();
    let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
    if fields.len() != columns.len() {
        return Err(format!("expected {} fields, found {}", columns.len(), fields.len()));
    }
    let mut pos = 0usize;
    let mut take = || {
        let i = pos;
        pos += 1;
        (columns[i].as_str(), fields[i])
    };
    macro_rules! float {
        () => {{
            let (name, s) = take();
            s.parse::<f64>()
                .map_err(|_| format!("{name}: not a number: {s:?}"))?
        }};
    }
    macro_rules! label {
        ($parse:expr) => {{
            let (name, s) = take();
            $parse(s).ok_or_else(|| format!("{name}: unknown value {s:?}"))?
        }};
    }
    macro_rules! flag {
        () => {{
            let (name, s) = take();
            s.parse::<bool>()
                .map_err(|_| format!("{name}: expected true or false, found {s:?}"))?
        }};
    }
    let t = float!();
    let mut joints = [[0.0; 6]; 5];
    for group in &mut joints {
        for v in group.iter_mut() {
            *v = float!();
        }
    }
    let [q, qdot, qdot_ref, qdot_cmd, effort] = joints;
    let tcp = [float!(), float!(), float!()];
    let human = [float!(), float!()];
    let human_speed = float!();
    let human_zone = label!(Zone::parse);
    let occupancy_left = label!(Zone::parse);
    let occupancy_right = label!(Zone::parse);
    let d_true = float!();
    let d_sensed = float!();
    let k_s = float!();
    let msd_dynamic = float!();
    let mode = label!(ModeKind::parse);
    let fraction = float!();
    let v_cartesian = float!();
    let source = label!(CommandSource::parse);
    let damped = flag!();
    let lyapunov = float!();
    let task_pending = flag!();
    let task_step = {
        let (name, s) = take();
        s.parse::<usize>()
            .map_err(|_| format!("{name}: not an index: {s:?}"))?
    };
    Ok(TraceRow {
        t,
        q,
        qdot,
        qdot_ref,
        qdot_cmd,
        effort,
        tcp,
        human,
        human_speed,
        human_zone,
        occupancy_left,
        occupancy_right,
        d_true,
        d_sensed,
        k_s,
        msd_dynamic,
        mode,
        fraction,
        v_cartesian,
        source,
        damped,
        lyapunov,
        task_pending,
        task_step,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| IoError::io(path, e))
}

fn write_lines<I, S>(path: &Path, header: &str, lines: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = create(path)?;
    let io = |e| IoError::io(path, e);
    writeln!(out, "{header}").map_err(io)?;
    for line in lines {
        writeln!(out, "{}", line.as_ref()).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn sidecar(trace: &Path, suffix: &str) -> PathBuf {
    let stem = trace.file_stem().map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
    trace.with_file_name(format!("{stem}{suffix}"))
}

pub fn events_path(trace: &Path) -> PathBuf {
    sidecar(trace, ".events.csv")
}

pub fn meta_path(trace: &Path) -> PathBuf {
    sidecar(trace, ".meta")
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), IoError> {
    write_lines(path, &trace_header(), rows.iter().map(format_row))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let malformed = |row: usize, message: String| IoError::MalformedRow {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == trace_header() => {}
        Some(_) => return Err(malformed(0, "header does not match the trace columns".into())),
        None => return Ok(Vec::new()),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| parse_row(l).map_err(|m| malformed(i + 1, m)))
        .collect()
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<(), IoError> {
    write_lines(
        path,
        "t_s,kind,payload",
        events
            .iter()
            .map(|e| format!("{},{},{}", e.t, e.kind.as_str(), e.payload)),
    )
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let mut parts = l.splitn(3, ',');
            let t = parts.next().and_then(|s| s.parse::<f64>().ok());
            let kind = parts.next().and_then(EventKind::parse);
            match (t, kind) {
                (Some(t), Some(kind)) => Ok(Event::new(t, kind, parts.next().unwrap_or(""))),
                _ => Err(IoError::MalformedRow {
                    path: path.to_path_buf(),
                    row: i + 1,
                    message: "expected t_s,kind,payload".into(),
                }),
            }
        })
        .collect()
}

/// `key=value` lines describing where a trace came from.
pub fn write_meta(path: &Path, entries: &[(&str, String)]) -> Result<(), IoError> {
    let mut out = create(path)?;
    let io = |e| IoError::io(path, e);
    for (k, v) in entries {
        writeln!(out, "{k}={v}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Adds or replaces the `stability=` verdict line of a metadata file.
pub fn append_stability_verdict(path: &Path, report: &StabilityReport) -> Result<(), IoError> {
    let existing = match fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(IoError::io(path, e)),
    };
    let mut lines: Vec<String> = existing
        .lines()
        .filter(|l| !l.starts_with("stability="))
        .map(str::to_string)
        .collect();
    let summary = report.summary_line();
    let verdict = summary.strip_prefix("stability ").unwrap_or(&summary);
    lines.push(format!("stability={verdict}"));
    write_lines(path, &lines[0], &lines[1..])
}

pub fn read_meta(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

pub const PROFILE_HEADER: &str = "t_s,fraction,commanded_speed_m_s";
pub const ZONE_INTERVAL_HEADER: &str = "start_s,end_s,zone";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneInterval {
    pub start: f64,
    pub end: f64,
    pub zone: Zone,
}

/// Maximal stretches during which the tracked human stays in one zone.
pub fn zone_intervals(rows: &[TraceRow]) -> Vec<ZoneInterval> {
    let mut out: Vec<ZoneInterval> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(last) if last.zone == r.human_zone => {}
            Some(last) => {
                last.end = r.t;
                out.push(ZoneInterval {
                    start: r.t,
                    end: r.t,
                    zone: r.human_zone,
                });
            }
            None => out.push(ZoneInterval {
                start: r.t,
                end: r.t,
                zone: r.human_zone,
            }),
        }
    }
    if let (Some(last), Some(row)) = (out.last_mut(), rows.last()) {
        let dt = rows.len().checked_sub(2).map_or(0.0, |i| row.t - rows[i].t);
        last.end = row.t + dt;
    }
    out
}

/// Writes the commanded-speed series to `path` and the zone intervals to
/// the `.zones.csv` sidecar next to it.
pub fn emit_profile_data(rows: &[TraceRow], path: &Path) -> Result<PathBuf, IoError> {
    write_lines(
        path,
        PROFILE_HEADER,
        rows.iter()
            .map(|r| format!("{},{},{}", r.t, r.fraction, r.v_cartesian)),
    )?;
    let zones = sidecar(path, ".zones.csv");
    write_lines(
        &zones,
        ZONE_INTERVAL_HEADER,
        zone_intervals(rows)
            .iter()
            .map(|z| format!("{},{},{}", z.start, z.end, z.zone.as_str())),
    )?;
    Ok(zones)
}

#[derive(Serialize)]
struct BenchmarkJson<'a> {
    scenario: &'a str,
    ideal_cycle_time: f64,
    modes: Vec<&'a KpiReport>,
}

/// `benchmark.json`, one `kpi_<mode>.json` per mode and `comparison.txt`.
pub fn write_benchmark(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), IoError> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    let all = BenchmarkJson {
        scenario: &report.scenario,
        ideal_cycle_time: report.ideal_cycle_time,
        modes: report.runs.iter().map(|r| &r.kpi).collect(),
    };
    put(
        "benchmark.json".into(),
        serde_json::to_string_pretty(&all).expect("report serializes"),
    )?;
    for r in &report.runs {
        put(
            format!("kpi_{}.json", r.label),
            serde_json::to_string_pretty(&r.kpi).expect("report serializes"),
        )?;
    }
    put("comparison.txt".into(), crate::sim::comparison_table(report))?;
    Ok(written)
}

/// Stability samples for a trace. Row `k` holds the state reached under the
/// command issued at row `k - 1`, so that command's mode keys the sample.
pub fn stability_points(rows: &[TraceRow]) -> Vec<StabilityPoint> {
    rows.iter()
        .enumerate()
        .map(|(k, r)| StabilityPoint {
            t: r.t,
            v: r.lyapunov,
            mode: if k == 0 { r.mode } else { rows[k - 1].mode },
            regulating: r.regulating(),
        })
        .collect()
}
