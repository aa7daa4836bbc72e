use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use ssm_core::bridge::{self, BridgeConfig, ReplayError, ReplayOptions};
use ssm_core::controller::Strategy;
use ssm_core::io::{self, IoError};
use ssm_core::kpi::kpi_report;
use ssm_core::separation::{compute_msd_dynamic, separation_terms, SeparationConfig, SeparationInputs};
use ssm_core::sim::{self, Scenario, SimError};
use ssm_core::stability::{check_trace, DEFAULT_EPS_REL};
use ssm_core::zones::{build_zone_layout_with, compute_msd_static, CellGeometry, SafetyParams};

/// Speed and separation monitoring simulator.
///
/// Exit status: 0 success, 1 invalid input, 2 runtime failure, 3 a check
/// reported a failure.
#[derive(Parser)]
#[command(name = "ssm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Safety zone layout.
    #[command(subcommand)]
    Zones(ZonesCommand),
    /// Separation distance calculators.
    #[command(subcommand)]
    Msd(MsdCommand),
    /// Offline checks on scenarios and traces.
    #[command(subcommand)]
    Check(CheckCommand),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Simulate one scenario and write its trace, events, metadata and speed profile.
    Run(RunArgs),
    /// Run a scenario under every strategy and compare the KPIs.
    Benchmark(BenchArgs),
    /// Stream a recorded trace over the telemetry bridge.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct Overrides {
    /// Replace the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Enable scanner range noise.
    #[arg(long, conflicts_with = "no_noise")]
    noise: bool,
    /// Disable scanner range noise.
    #[arg(long)]
    no_noise: bool,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) {
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if self.noise {
            s.perception.noise = true;
        }
        if self.no_noise {
            s.perception.noise = false;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Override the control strategy: proposed, traditional_hrc or autonomous.
    #[arg(long)]
    mode: Option<String>,
    /// Refresh zone occupancy only when a skeleton frame arrives.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    overrides: Overrides,
    /// Publish commands on this address while running, e.g. 127.0.0.1:7400.
    #[arg(long)]
    bridge: Option<String>,
    /// Publish every n-th control tick on the bridge.
    #[arg(long, default_value_t = 1)]
    decimation: u64,
    /// Wait for this many bridge clients before starting.
    #[arg(long, default_value_t = 0)]
    wait_clients: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory for the JSON reports and comparison table.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace CSV written by `sim run`.
    trace: PathBuf,
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:7400")]
    bind: String,
    /// Real-time multiplier; `inf` streams as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    factor: f64,
    #[arg(long, default_value_t = 1)]
    decimation: u64,
    /// Wait for this many clients before streaming.
    #[arg(long, default_value_t = 1)]
    wait_clients: usize,
    /// Seconds to wait for clients.
    #[arg(long, default_value_t = 30.0)]
    wait_timeout: f64,
}

#[derive(Subcommand)]
enum ZonesCommand {
    /// Print the danger, warning and normal rectangles.
    Compute(ZonesArgs),
}

#[derive(Args)]
struct ZonesArgs {
    /// Take safety parameters and cell geometry from a scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Operator approach speed K (m/s).
    #[arg(long)]
    k: Option<f64>,
    /// Overall stop time T (s).
    #[arg(long)]
    t: Option<f64>,
    /// Intrusion distance C (m).
    #[arg(long)]
    c: Option<f64>,
    /// Position uncertainty allowance (m).
    #[arg(long)]
    delta: Option<f64>,
    /// Monitored length along the approach axis (m).
    #[arg(long)]
    length: Option<f64>,
    /// Monitored width (m).
    #[arg(long)]
    width: Option<f64>,
    /// Half width of each quadrant (m).
    #[arg(long)]
    half_width: Option<f64>,
    /// Write the layout here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MsdCommand {
    /// Dynamic separation distance for given speeds.
    Dynamic(DynamicArgs),
}

#[derive(Args)]
struct DynamicArgs {
    /// Human speed (m/s).
    #[arg(long)]
    v_h: f64,
    /// Robot speed (m/s).
    #[arg(long)]
    v_r: f64,
    /// Robot reaction time (s).
    #[arg(long)]
    t_r: Option<f64>,
    /// Perception response time (s).
    #[arg(long)]
    t_s: Option<f64>,
    /// Intrusion distance (m).
    #[arg(long)]
    c: Option<f64>,
    /// Human position uncertainty (m).
    #[arg(long)]
    z_d: Option<f64>,
    /// Robot position uncertainty (m).
    #[arg(long)]
    z_r: Option<f64>,
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Verify the Lyapunov decrease condition on a trace and record the verdict.
    Stability(StabilityArgs),
    /// Parse and validate a scenario file.
    Scenario {
        /// Scenario file (TOML).
        path: PathBuf,
    },
}

#[derive(Args)]
struct StabilityArgs {
    /// Trace CSV written by `sim run`.
    trace: PathBuf,
    /// Tolerance on the discrete derivative, relative to the segment maximum.
    #[arg(long, default_value_t = DEFAULT_EPS_REL)]
    eps_rel: f64,
    /// List every segment, not only failures.
    #[arg(long)]
    verbose: bool,
    /// Do not append the verdict to the metadata sidecar.
    #[arg(long)]
    no_meta: bool,
}

enum Failure {
    Validation(String),
    Runtime(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Check(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::Check(m) => m,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invalid(_) => Failure::Validation(e.to_string()),
            SimError::Kinematics { .. } => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn require(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("{}: no such file", path.display())))
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<Scenario, Failure> {
    require(path)?;
    let mut s = io::parse_scenario(path)?;
    overrides.apply(&mut s);
    Ok(s)
}

fn parse_mode(name: &str) -> Result<Strategy, Failure> {
    Strategy::ALL
        .into_iter()
        .find(|s| s.as_str() == name)
        .ok_or_else(|| Failure::Validation(format!("unknown mode {name:?}")))
}

fn sim_run(args: &RunArgs) -> Outcome {
    let mut scenario = load(&args.scenario, &args.overrides)?;
    if let Some(m) = &args.mode {
        scenario.mode = parse_mode(m)?;
    }
    if args.sequential {
        scenario.controller.sequential = true;
    }
    let bridge = match &args.bridge {
        Some(addr) => {
            let cfg = BridgeConfig {
                decimation: args.decimation,
                ..BridgeConfig::default()
            };
            let handle = bridge::serve(addr.as_str(), cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
            eprintln!("bridge listening on {}", handle.local_addr());
            if args.wait_clients > 0 && !handle.wait_for_clients(args.wait_clients, Duration::from_secs(60)) {
                return Err(Failure::Runtime("timed out waiting for bridge clients".into()));
            }
            Some(handle)
        }
        None => None,
    };
    let mut publisher = bridge.as_ref().map(|b| b.publisher());
    let result = sim::run_observed(&scenario, &mut |row| {
        if let Some(p) = publisher.as_mut() {
            p.publish(row);
        }
    })?;
    let bridge_stats = bridge.map(|b| b.finish());

    let trace = args.out.join(format!("{}.csv", scenario.name));
    io::write_trace(&trace, &result.rows)?;
    io::write_events(&io::events_path(&trace), &result.events)?;
    let mut meta = vec![
        ("scenario", scenario.name.clone()),
        ("mode", scenario.mode.as_str().to_string()),
        ("sequential", scenario.controller.sequential.to_string()),
        ("seed", scenario.seed.to_string()),
        ("noise", scenario.perception.noise.to_string()),
        ("dt_s", scenario.controller.dt.to_string()),
        ("duration_s", scenario.duration.to_string()),
        ("rows", result.rows.len().to_string()),
        ("events", result.events.len().to_string()),
        ("ideal_cycle_time_s", result.ideal_cycle_time.to_string()),
    ];
    if let Some(addr) = &args.bridge {
        meta.push(("bridge", addr.clone()));
    }
    io::write_meta(&io::meta_path(&trace), &meta)?;
    let profile = args.out.join(format!("{}.profile.csv", scenario.name));
    io::emit_profile_data(&result.rows, &profile)?;

    println!("trace: {} ({} rows)", trace.display(), result.rows.len());
    println!("events: {}", result.events.len());
    match kpi_report(scenario.mode.as_str(), &result.rows, &result.events, result.ideal_cycle_time) {
        Ok(k) => println!(
            "cycles={} cycle_time={:.3}s reaction_time={} flexibility={:.4} oee={:.4} deadlocks={}",
            k.cycles,
            k.cycle_time,
            k.reaction_time.map_or("n/a".into(), |r| format!("{r:.4}s")),
            k.flexibility_rate,
            k.oee,
            k.deadlocks
        ),
        Err(e) => println!("kpi: {e}"),
    }
    if let Some(s) = bridge_stats {
        println!(
            "bridge: dispatched={} dropped={} clients={} disconnects={}",
            s.dispatched,
            s.dropped,
            s.clients_accepted,
            s.disconnects.len()
        );
    }
    Ok(())
}

fn sim_benchmark(args: &BenchArgs) -> Outcome {
    let scenario = load(&args.scenario, &args.overrides)?;
    let report = sim::benchmark(&scenario).map_err(|e| match e {
        sim::BenchmarkError::Sim { source, .. } => Failure::from(source),
        other => Failure::Runtime(other.to_string()),
    })?;
    io::write_benchmark(&report, &args.out)?;
    print!("{}", sim::comparison_table(&report));
    Ok(())
}

fn sim_replay(args: &ReplayArgs) -> Outcome {
    require(&args.trace)?;
    let options = ReplayOptions {
        factor: args.factor,
        wait_clients: args.wait_clients,
        wait_timeout: Duration::from_secs_f64(args.wait_timeout.max(0.0)),
        bridge: BridgeConfig {
            decimation: args.decimation,
            ..BridgeConfig::default()
        },
    };
    let handle = bridge::replay(&args.trace, args.bind.as_str(), options).map_err(|e| match e {
        ReplayError::Trace(io) => Failure::from(io),
        ReplayError::InvalidFactor(_) => Failure::Validation(e.to_string()),
        ReplayError::Bridge(_) => Failure::Runtime(e.to_string()),
    })?;
    eprintln!("replaying on {}", handle.local_addr());
    let stats = handle.join();
    println!(
        "replay: dispatched={} clients={} disconnects={}",
        stats.dispatched,
        stats.clients_accepted,
        stats.disconnects.len()
    );
    Ok(())
}

fn zones_compute(args: &ZonesArgs) -> Outcome {
    let (mut safety, mut cell) = match &args.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            let s = io::scenario_from_str(&text, p)?;
            (s.safety, s.cell)
        }
        None => (SafetyParams::default(), CellGeometry::default()),
    };
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut safety.k, args.k);
    set(&mut safety.t, args.t);
    set(&mut safety.c, args.c);
    set(&mut safety.delta, args.delta);
    set(&mut cell.workspace_length, args.length);
    set(&mut cell.workspace_width, args.width);
    set(&mut cell.quadrant_half_width, args.half_width);
    let msd = compute_msd_static(&safety).map_err(|e| Failure::Validation(e.to_string()))?;
    let layout = build_zone_layout_with(msd, &cell).map_err(|e| Failure::Validation(e.to_string()))?;
    let text = layout.export_text();
    match &args.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn msd_dynamic(args: &DynamicArgs) -> Outcome {
    let base = SeparationConfig::default();
    let inputs = SeparationInputs {
        v_h: args.v_h,
        v_r: args.v_r,
        t_r: args.t_r.unwrap_or(base.t_r),
        t_s: args.t_s.unwrap_or(base.t_s),
        c: args.c.unwrap_or(base.c),
        z_r: args.z_r.unwrap_or(base.z_r),
        z_d: args.z_d.unwrap_or(base.z_d),
    };
    if !inputs.is_valid() {
        return Err(Failure::Validation("all inputs must be finite and non-negative".into()));
    }
    let terms = separation_terms(&inputs);
    println!("s_h {:.6}", terms.s_h);
    println!("s_r {:.6}", terms.s_r);
    println!("s_s {:.6}", terms.s_s);
    println!("c {:.6}", inputs.c);
    println!("z_d {:.6}", inputs.z_d);
    println!("z_r {:.6}", inputs.z_r);
    println!("msd {:.6}", compute_msd_dynamic(&inputs));
    Ok(())
}

fn check_stability(args: &StabilityArgs) -> Outcome {
    require(&args.trace)?;
    let rows = io::read_trace(&args.trace)?;
    if rows.is_empty() {
        return Err(Failure::Validation(format!("{}: trace has no rows", args.trace.display())));
    }
    let report = check_trace(&io::stability_points(&rows), args.eps_rel);
    for s in &report.segments {
        if args.verbose || !s.passed {
            println!(
                "segment {}..{} t=[{:.3}, {:.3}] mode={} regulating={} checked={} max_v={:.3e} max_vdot={:.3e} eps={:.3e} invariant={} {}",
                s.start,
                s.end,
                s.t_start,
                s.t_end,
                s.mode.as_str(),
                s.regulating,
                s.checked,
                s.max_v,
                s.max_vdot,
                s.eps,
                s.invariant_set,
                if s.passed { "ok" } else { "FAIL" }
            );
        }
    }
    println!("{}", report.summary_line());
    if !args.no_meta {
        io::append_stability_verdict(&io::meta_path(&args.trace), &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check("stability check failed".into()))
    }
}

fn check_scenario(path: &Path) -> Outcome {
    require(path)?;
    let s = io::parse_scenario(path)?;
    println!("{}: ok ({} humans, {} task steps)", s.name, s.humans.len(), s.task.steps.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Sim(SimCommand::Run(a)) => sim_run(a),
        Command::Sim(SimCommand::Benchmark(a)) => sim_benchmark(a),
        Command::Sim(SimCommand::Replay(a)) => sim_replay(a),
        Command::Zones(ZonesCommand::Compute(a)) => zones_compute(a),
        Command::Msd(MsdCommand::Dynamic(a)) => msd_dynamic(a),
        Command::Check(CheckCommand::Stability(a)) => check_stability(a),
        Command::Check(CheckCommand::Scenario { path }) => check_scenario(path),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
