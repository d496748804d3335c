use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use fleet_core::bridge::encode;
use fleet_core::sim::{Mode, SimConfig, World};

use crate::hub::Hub;
use crate::replay::{read_log, replay_frames};
use crate::report::{mode_means, paired_wins, sign_test, summary_table, write_rows, MetricsRow};
use crate::scenario::Scenario;
use crate::serve::{serve, write_records, ServeOptions};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "fleet", version, about = "Warehouse fleet simulator with human intention recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Run(RunArgs),
    /// Compare all modes over several seeds.
    Bench(BenchArgs),
    /// Serve the live bridge.
    Serve(ServeArgs),
    /// Re-emit a replay log as bridge frames.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Nhir,
    Shir,
    Phir,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Nhir => Mode::Nhir,
            ModeArg::Shir => Mode::Shir,
            ModeArg::Phir => Mode::Phir,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file; the bundled demo when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Simulation step in milliseconds.
    #[arg(long = "tick-ms")]
    pub tick_ms: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, CliError> {
        let mut s = match &self.scenario {
            Some(p) => Scenario::load(p)?,
            None => Scenario::demo(),
        };
        if let Some(d) = self.duration {
            s.config.duration = d;
        }
        if let Some(ms) = self.tick_ms {
            s.config.dt = ms as f64 / 1000.0;
        }
        s.config.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long = "metrics-out")]
    pub metrics_out: Option<PathBuf>,
    #[arg(long = "log-out")]
    pub log_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Seeds 0..N are run in every mode.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long = "metrics-out")]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    #[arg(long = "metrics-out")]
    pub metrics_out: Option<PathBuf>,
    #[arg(long = "log-out")]
    pub log_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Replay log written by `run` or `serve`.
    pub log: PathBuf,
    /// Stream to the first client on this port instead of stdout.
    #[arg(long)]
    pub port: Option<u16>,
    /// Pause between frames when streaming to a client.
    #[arg(long = "tick-ms", default_value_t = 100)]
    pub tick_ms: u64,
}

/// Parses `args` and runs the command. Usage errors return 2.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Stream(e)) if e.kind() == io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Replay(a) => replay(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    write_rows(create(path)?, rows)
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let s = a.scenario.load()?;
    let mut cfg = s.config;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    let (seed, mode) = (cfg.seed, cfg.mode);
    let mut world = World::new(s.graph, cfg)?;
    let m = world.run();
    let log = world.drain_log();
    if let Some(p) = &a.log_out {
        let mut w = create(p)?;
        write_records(&mut w, &log).and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))?;
    }
    let row = MetricsRow::from_run(seed, mode, &m);
    if let Some(p) = &a.metrics_out {
        write_metrics(p, std::slice::from_ref(&row))?;
    }
    println!(
        "seed {seed} mode {mode}: robot {} human {} total {} encounters {} ({:.3}/min) over {:.0} s",
        m.robot_deliveries, m.human_deliveries, m.total_deliveries, m.encounters, m.encounters_per_min, m.sim_time
    );
    Ok(())
}

/// Runs every mode for seeds `0..seeds`; rows are ordered by mode, then seed.
pub fn bench_rows(s: &Scenario, seeds: u64) -> Result<Vec<MetricsRow>, CliError> {
    let mut rows = Vec::new();
    for mode in Mode::ALL {
        for seed in 0..seeds {
            let cfg = SimConfig { seed, mode, ..s.config.clone() };
            let mut world = World::new(s.graph.clone(), cfg)?;
            let m = world.run();
            rows.push(MetricsRow::from_run(seed, mode, &m));
        }
    }
    Ok(rows)
}

fn column(rows: &[MetricsRow], mode: Mode, f: fn(&MetricsRow) -> f64) -> Vec<f64> {
    rows.iter().filter(|r| r.mode == mode && !r.is_mean()).map(f).collect()
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    let s = a.scenario.load()?;
    let mut rows = bench_rows(&s, a.seeds)?;
    let means = mode_means(&rows);
    print!("{}", summary_table(&means));
    let checks: [(&str, fn(&MetricsRow) -> f64, bool); 3] = [
        ("total deliveries", |r| r.total_deliveries, true),
        ("human deliveries", |r| r.human_deliveries, true),
        ("encounters/min", |r| r.encounters_per_min, false),
    ];
    for (name, f, higher) in checks {
        let (p, n) = (column(&rows, Mode::Phir, f), column(&rows, Mode::Nhir, f));
        let (w, l) = if higher { paired_wins(&p, &n) } else { paired_wins(&n, &p) };
        println!("phir vs nhir {name}: {w} better, {l} worse, sign test p = {:.4}", sign_test(w, l));
    }
    rows.extend(means);
    if let Some(p) = &a.metrics_out {
        write_metrics(p, &rows)?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<(), CliError> {
    let s = a.scenario.load()?;
    let mut cfg = s.config;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    cfg.snapshot_every = 1;
    let period = Duration::from_secs_f64(cfg.dt);
    let limit = a.scenario.duration.map(|_| cfg.ticks());
    let mut hub = Hub::new(World::new(s.graph, cfg)?);
    if let Some(l) = limit {
        hub = hub.with_tick_limit(l);
    }
    let listener = TcpListener::bind(("127.0.0.1", a.port))?;
    println!("listening on {}", listener.local_addr()?);
    let log_sink: Option<Box<dyn Write + Send>> = match &a.log_out {
        Some(p) => Some(Box::new(create(p)?)),
        None => None,
    };
    let opts =
        ServeOptions { period, stop: Arc::new(AtomicBool::new(false)), log_sink, exit_when_finished: limit.is_some() };
    let hub = serve(hub, listener, opts)?;
    if let Some(p) = &a.metrics_out {
        let w = hub.world();
        write_metrics(p, &[MetricsRow::from_run(w.config().seed, w.mode(), &w.metrics())])?;
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let file = File::open(&a.log).map_err(|e| CliError::io(&a.log, e))?;
    let frames = replay_frames(&read_log(BufReader::new(file))?);
    match a.port {
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            for f in &frames {
                writeln!(out, "{}", encode(f))?;
            }
            out.flush()?;
        }
        Some(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port))?;
            println!("listening on {}", listener.local_addr()?);
            let (stream, _) = listener.accept()?;
            let mut out = BufWriter::new(stream);
            for f in &frames {
                writeln!(out, "{}", encode(f))?;
                out.flush()?;
                thread::sleep(Duration::from_millis(a.tick_ms));
            }
        }
    }
    Ok(())
}
