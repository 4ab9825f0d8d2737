//! Subcommands behind the `red-bench` executable.
//!
//! Every option can also come from a `key=value` file passed with
//! `--config`, where keys are long option names without the dashes
//! (`capacity=10e6`). Command-line flags win over the file. Every file written
//! starts with comment lines recording the resolved configuration, so
//! re-running with the same inputs reproduces it byte for byte.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::{self, Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::analysis;
use crate::dat::DatTable;
use crate::fluid::{
    self, fokker_planck::WindowCoefficients, EnsembleConfig, FluidParams, FluidState, Grid1D,
    MarkingMode, WindowEquation,
};
use crate::metrics::{self, Metric, PacketLog};
use crate::red::RedParams;
use crate::sim::{self, Discipline, LinkConfig};
use crate::traffic::{self, FlowSpec, Transport};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// `on`/`off` switch accepted by boolean options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switch(pub bool);

impl FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "on" | "true" | "1" | "yes" => Ok(Switch(true)),
            "off" | "false" | "0" | "no" => Ok(Switch(false)),
            other => Err(format!("expected on/off, got {other:?}")),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "red-bench", version, about = "RED verification workbench")]
pub struct Cli {
    /// key=value file supplying defaults for any long option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate flows through the bottleneck; writes recv.log and queue.dat.
    Sim(SimArgs),
    /// Print the statistics report of a log, or write binned series.
    Decode(DecodeArgs),
    /// Integrate the fluid model (det, sde) or its window density (fp).
    #[command(allow_negative_numbers = true)]
    Fluid(FluidArgs),
    /// Compare packet-level and fluid queue series.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RedArgs {
    #[arg(long)]
    pub q_min: Option<f64>,
    #[arg(long)]
    pub q_max: Option<f64>,
    #[arg(long)]
    pub p_max: Option<f64>,
    #[arg(long)]
    pub w_q: Option<f64>,
    /// Count-adjusted drop probability (on/off).
    #[arg(long)]
    pub use_count: Option<Switch>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Flow script, one ITGSend-style flow per line.
    pub script: Option<PathBuf>,
    /// Destination of a single inline flow.
    #[arg(short = 'a')]
    pub dest: Option<String>,
    /// Transport of the inline flow (UDP|TCP).
    #[arg(short = 'T')]
    pub transport: Option<Transport>,
    /// Packet rate of the inline flow, pkt/s.
    #[arg(short = 'C')]
    pub rate: Option<f64>,
    /// Payload of the inline flow, bytes.
    #[arg(short = 'c')]
    pub payload: Option<u32>,
    /// Duration of the inline flow, ms.
    #[arg(short = 't')]
    pub duration: Option<f64>,
    /// Bottleneck capacity, bit/s.
    #[arg(long)]
    pub capacity: Option<f64>,
    #[arg(long)]
    pub prop_delay: Option<f64>,
    /// Buffer size, packets.
    #[arg(long)]
    pub buffer: Option<usize>,
    /// red | droptail
    #[arg(long)]
    pub discipline: Option<String>,
    #[command(flatten)]
    pub red: RedArgs,
    /// Delivery-to-ACK delay of TCP flows, s.
    #[arg(long)]
    pub rtt_base: Option<f64>,
    #[arg(long)]
    pub header_bytes: Option<u32>,
    /// Stop sending at this time, s (default: longest flow duration).
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Grid spacing of queue.dat, s.
    #[arg(long)]
    pub sample_dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub log: PathBuf,
    /// Write bitrate.dat with this bin width (ms).
    #[arg(short = 'b')]
    pub bitrate: Option<f64>,
    /// Write delay.dat with this bin width (ms).
    #[arg(short = 'd')]
    pub delay: Option<f64>,
    /// Write jitter.dat with this bin width (ms).
    #[arg(short = 'j')]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FluidArgs {
    /// det | sde | fp
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub rtt: Option<f64>,
    /// Service intensity, pkt/s.
    #[arg(long)]
    pub capacity: Option<f64>,
    #[arg(long)]
    pub buffer: Option<f64>,
    #[command(flatten)]
    pub red: RedArgs,
    #[arg(long)]
    pub noise: Option<Switch>,
    #[arg(long)]
    pub marking: Option<Switch>,
    /// drift | poisson
    #[arg(long)]
    pub marking_mode: Option<String>,
    /// Include queueing delay in the round-trip time (on/off).
    #[arg(long)]
    pub delay_coupled: Option<Switch>,
    #[arg(long)]
    pub w0: Option<f64>,
    #[arg(long)]
    pub q0: Option<f64>,
    #[arg(long)]
    pub qhat0: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    /// Individual sde trajectories to write.
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sample_dt: Option<f64>,
    /// final | per-ack | heat
    #[arg(long)]
    pub fp_equation: Option<String>,
    /// Frozen marking intensity for fp, events/s.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub grid_lo: Option<f64>,
    #[arg(long)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub init_mean: Option<f64>,
    #[arg(long)]
    pub init_sd: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Packet-level queue.dat; repeat to average several seeds.
    #[arg(long = "packet", required = true)]
    pub packet: Vec<PathBuf>,
    /// Fluid trajectory (fluid_det.dat or fluid_mean.dat).
    #[arg(long)]
    pub fluid: PathBuf,
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Comparison grid spacing, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Values from a `--config` file.
#[derive(Debug, Default)]
struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            map.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Self { map })
    }

    fn check_keys(&self, known: &[&str]) -> CliResult<()> {
        for k in self.map.keys() {
            if !known.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("unknown config key {k:?}")));
            }
        }
        Ok(())
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config {key}={v}: {e}"))),
        }
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }
}

const RED_KEYS: &[&str] = &["q-min", "q-max", "p-max", "w-q", "use-count"];

fn resolve_red(args: RedArgs, s: &Settings) -> CliResult<RedParams> {
    let d = RedParams::default();
    let p = RedParams {
        q_min: s.or(args.q_min, "q-min", d.q_min)?,
        q_max: s.or(args.q_max, "q-max", d.q_max)?,
        p_max: s.or(args.p_max, "p-max", d.p_max)?,
        w_q: s.or(args.w_q, "w-q", d.w_q)?,
        use_count: s.or(args.use_count, "use-count", Switch(false))?.0,
    };
    p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(p)
}

fn red_header(out: &mut Vec<String>, p: &RedParams) {
    out.push(format!("q-min={}", p.q_min));
    out.push(format!("q-max={}", p.q_max));
    out.push(format!("p-max={}", p.p_max));
    out.push(format!("w-q={}", p.w_q));
    out.push(format!(
        "use-count={}",
        if p.use_count { "on" } else { "off" }
    ));
}

/// Fully resolved `sim` configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub script: Option<PathBuf>,
    pub flows: Vec<FlowSpec>,
    pub link: LinkConfig,
    pub t_end: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sample_dt: f64,
}

impl SimRun {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["command=sim".to_string()];
        if let Some(p) = &self.script {
            h.push(format!("script={}", p.display()));
        }
        for (i, f) in self.flows.iter().enumerate() {
            h.push(format!(
                "flow{}=-a {} -T {} -C {} -c {} -t {} interval={:?} size={:?}",
                i + 1,
                f.dest,
                f.transport,
                f.rate,
                f.payload,
                f.duration_ms,
                f.interval_dist,
                f.size_dist
            ));
        }
        h.push(format!("capacity={}", self.link.capacity));
        h.push(format!("prop-delay={}", self.link.prop_delay));
        h.push(format!("buffer={}", self.link.buffer));
        match &self.link.discipline {
            Discipline::DropTail => h.push("discipline=droptail".into()),
            Discipline::Red(p) => {
                h.push("discipline=red".into());
                red_header(&mut h, p);
            }
        }
        h.push(format!("rtt-base={}", self.link.rtt_base));
        h.push(format!("header-bytes={}", self.link.header_bytes));
        h.push(format!("t-end={}", self.t_end));
        h.push(format!("seed={}", self.seed));
        h.push(format!("sample-dt={}", self.sample_dt));
        h
    }
}

const SIM_KEYS: &[&str] = &[
    "capacity",
    "prop-delay",
    "buffer",
    "discipline",
    "rtt-base",
    "header-bytes",
    "t-end",
    "seed",
    "out-dir",
    "sample-dt",
];

impl SimArgs {
    fn resolve(self, s: &Settings) -> CliResult<SimRun> {
        let mut known = SIM_KEYS.to_vec();
        known.extend_from_slice(RED_KEYS);
        s.check_keys(&known)?;

        let inline = self.dest.is_some()
            || self.transport.is_some()
            || self.rate.is_some()
            || self.payload.is_some()
            || self.duration.is_some();
        let flows = match (&self.script, inline) {
            (Some(_), true) => {
                return Err(CliError::Usage(
                    "give either a flow script or inline -a/-T/-C/-c/-t flags".into(),
                ))
            }
            (Some(path), false) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                traffic::parse_flow_script(&text)?
            }
            (None, true) => {
                let dest = self
                    .dest
                    .clone()
                    .ok_or_else(|| CliError::Usage("inline flow needs -a".into()))?;
                let spec = FlowSpec::constant(
                    dest,
                    self.transport.unwrap_or(Transport::Udp),
                    self.rate.unwrap_or(traffic::DEFAULT_RATE),
                    self.payload.unwrap_or(traffic::DEFAULT_PAYLOAD),
                    self.duration.unwrap_or(traffic::DEFAULT_DURATION_MS),
                );
                spec.validate()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                vec![spec]
            }
            (None, false) => return Err(CliError::Usage("no flows given".into())),
        };
        if flows.is_empty() {
            return Err(CliError::Usage("flow script defines no flows".into()));
        }

        let d = LinkConfig::default();
        let discipline = match s
            .or(self.discipline, "discipline", "red".to_string())?
            .as_str()
        {
            "red" => Discipline::Red(resolve_red(self.red, s)?),
            "droptail" => Discipline::DropTail,
            other => return Err(CliError::Usage(format!("unknown discipline {other:?}"))),
        };
        let link = LinkConfig {
            capacity: s.or(self.capacity, "capacity", d.capacity)?,
            prop_delay: s.or(self.prop_delay, "prop-delay", d.prop_delay)?,
            buffer: s.or(self.buffer, "buffer", d.buffer)?,
            discipline,
            header_bytes: s.or(self.header_bytes, "header-bytes", d.header_bytes)?,
            rtt_base: s.or(self.rtt_base, "rtt-base", d.rtt_base)?,
        };
        link.validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let longest = flows.iter().map(FlowSpec::duration_s).fold(0.0, f64::max);
        let t_end = s.or(self.t_end, "t-end", longest)?;
        let sample_dt = s.or(self.sample_dt, "sample-dt", 0.01)?;
        if !(t_end > 0.0 && sample_dt > 0.0) {
            return Err(CliError::Usage(
                "t-end and sample-dt must be positive".into(),
            ));
        }
        Ok(SimRun {
            script: self.script,
            flows,
            link,
            t_end,
            seed: s.or(self.seed, "seed", 1)?,
            out_dir: s.or(self.out_dir, "out-dir", PathBuf::from("."))?,
            sample_dt,
        })
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs the packet simulation and writes `recv.log` and `queue.dat`.
pub fn cmd_sim(run: &SimRun) -> Result<()> {
    let res = sim::run_simulation(&run.flows, &run.link, run.t_end, run.seed)?;
    ensure_dir(&run.out_dir)?;
    let header = run.header();

    let mut log = res.packet_log();
    log.comments = header.clone();
    log.write(&run.out_dir.join("recv.log"))?;

    let mut table = DatTable::new(["t", "Q", "Qhat"]);
    table.comments = header;
    table.rows = sim::queue_timeseries(&res.trace, run.sample_dt)?
        .into_iter()
        .map(|s| vec![s.t, s.q, s.q_hat])
        .collect();
    table.write(&run.out_dir.join("queue.dat"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeRun {
    pub log: PathBuf,
    pub bins: Vec<(Metric, f64)>,
    pub out_dir: PathBuf,
}

impl DecodeArgs {
    fn resolve(self, s: &Settings) -> CliResult<DecodeRun> {
        s.check_keys(&["out-dir"])?;
        let bins: Vec<(Metric, f64)> = [
            (Metric::Bitrate, self.bitrate),
            (Metric::Delay, self.delay),
            (Metric::Jitter, self.jitter),
        ]
        .into_iter()
        .filter_map(|(m, b)| b.map(|b| (m, b)))
        .collect();
        if bins.iter().any(|(_, b)| !(*b > 0.0)) {
            return Err(CliError::Usage("bin widths must be positive".into()));
        }
        Ok(DecodeRun {
            log: self.log,
            bins,
            out_dir: s.or(self.out_dir, "out-dir", PathBuf::from("."))?,
        })
    }
}

/// Returns the report text when no bins are requested; otherwise writes the
/// requested `.dat` files and returns an empty string.
pub fn cmd_decode(run: &DecodeRun) -> Result<String> {
    let log = PacketLog::read(&run.log)?;
    if run.bins.is_empty() {
        return Ok(metrics::render_report(&metrics::decode(&log)?));
    }
    ensure_dir(&run.out_dir)?;
    for &(metric, bin_ms) in &run.bins {
        let mut table = metrics::binned_series(&log, bin_ms, metric)?;
        table
            .comments
            .insert(0, format!("command=decode log={}", run.log.display()));
        table.write(&run.out_dir.join(metric.file_name()))?;
    }
    Ok(String::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluidMode {
    Det,
    Sde,
    Fp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpEquation {
    Window(WindowCoefficients),
    /// `A = 0`, `D = 2`: the heat kernel check.
    Heat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSetup {
    pub equation: FpEquation,
    pub lambda: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_n: usize,
    pub init_mean: f64,
    pub init_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidRun {
    pub mode: FluidMode,
    pub params: FluidParams,
    pub initial: FluidState,
    pub t_end: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub keep: usize,
    pub seed: u64,
    pub sample_every: usize,
    pub fp: FpSetup,
    pub out_dir: PathBuf,
}

impl FluidRun {
    pub fn header(&self) -> Vec<String> {
        let p = &self.params;
        let on = |b: bool| if b { "on" } else { "off" };
        let mut h = vec![
            format!(
                "command=fluid mode={}",
                match self.mode {
                    FluidMode::Det => "det",
                    FluidMode::Sde => "sde",
                    FluidMode::Fp => "fp",
                }
            ),
            format!("rtt={}", p.rtt),
            format!("capacity={}", p.capacity),
            format!("buffer={}", p.buffer),
        ];
        red_header(&mut h, &p.red);
        h.push(format!("noise={}", on(p.noise_enabled)));
        h.push(format!("marking={}", on(p.marking_enabled)));
        h.push(format!(
            "marking-mode={}",
            match p.marking_mode {
                MarkingMode::ExpectedDrift => "drift",
                MarkingMode::Poisson => "poisson",
            }
        ));
        h.push(format!("delay-coupled={}", on(p.delay_coupled)));
        h.push(format!(
            "w0={} q0={} qhat0={}",
            self.initial.w, self.initial.q, self.initial.q_hat
        ));
        h.push(format!("t-end={} dt={}", self.t_end, self.dt));
        h.push(format!("n-traj={} seed={}", self.n_traj, self.seed));
        h.push(format!("sample-every={}", self.sample_every));
        if self.mode == FluidMode::Fp {
            let f = &self.fp;
            h.push(format!(
                "fp-equation={} lambda={}",
                match f.equation {
                    FpEquation::Window(WindowCoefficients::FinalSystem) => "final",
                    FpEquation::Window(WindowCoefficients::PerAck) => "per-ack",
                    FpEquation::Heat => "heat",
                },
                f.lambda
            ));
            h.push(format!(
                "grid=[{}, {}] n={}",
                f.grid_lo, f.grid_hi, f.grid_n
            ));
            h.push(format!("init-mean={} init-sd={}", f.init_mean, f.init_sd));
        }
        h
    }
}

const FLUID_KEYS: &[&str] = &[
    "mode",
    "rtt",
    "capacity",
    "buffer",
    "noise",
    "marking",
    "marking-mode",
    "delay-coupled",
    "w0",
    "q0",
    "qhat0",
    "t-end",
    "dt",
    "n-traj",
    "keep",
    "seed",
    "sample-dt",
    "fp-equation",
    "lambda",
    "grid-lo",
    "grid-hi",
    "grid-n",
    "init-mean",
    "init-sd",
    "out-dir",
];

impl FluidArgs {
    fn resolve(self, s: &Settings) -> CliResult<FluidRun> {
        let mut known = FLUID_KEYS.to_vec();
        known.extend_from_slice(RED_KEYS);
        s.check_keys(&known)?;
        let usage = |e: Error| CliError::Usage(e.to_string());

        let mode = match s.or(self.mode, "mode", "det".to_string())?.as_str() {
            "det" => FluidMode::Det,
            "sde" => FluidMode::Sde,
            "fp" => FluidMode::Fp,
            other => return Err(CliError::Usage(format!("unknown mode {other:?}"))),
        };
        let red = resolve_red(self.red, s)?;
        let mut params = FluidParams::new(
            s.or(self.rtt, "rtt", 0.1)?,
            s.or(self.capacity, "capacity", 100.0)?,
            s.or(self.buffer, "buffer", 100.0)?,
            red,
        )
        .map_err(usage)?;
        params.noise_enabled = s.or(self.noise, "noise", Switch(true))?.0;
        params.marking_enabled = s.or(self.marking, "marking", Switch(true))?.0;
        params.marking_mode = match s
            .or(self.marking_mode, "marking-mode", "drift".to_string())?
            .as_str()
        {
            "drift" => MarkingMode::ExpectedDrift,
            "poisson" => MarkingMode::Poisson,
            other => return Err(CliError::Usage(format!("unknown marking mode {other:?}"))),
        };
        params.delay_coupled = s.or(self.delay_coupled, "delay-coupled", Switch(false))?.0;

        let initial = FluidState::new(
            s.or(self.w0, "w0", 1.0)?,
            s.or(self.q0, "q0", 0.0)?,
            s.or(self.qhat0, "qhat0", 0.0)?,
        );
        initial.validate(&params).map_err(usage)?;
        let t_end = s.or(self.t_end, "t-end", 20.0)?;
        let dt = s.or(self.dt, "dt", params.default_dt())?;
        let sample_dt = s.or(self.sample_dt, "sample-dt", 0.01)?;
        if !(t_end > 0.0 && dt > 0.0 && sample_dt > 0.0) {
            return Err(CliError::Usage(
                "t-end, dt and sample-dt must be positive".into(),
            ));
        }
        let sample_every = ((sample_dt / dt).round() as usize).max(1);

        let equation = match s
            .or(self.fp_equation, "fp-equation", "final".to_string())?
            .as_str()
        {
            "final" => FpEquation::Window(WindowCoefficients::FinalSystem),
            "per-ack" => FpEquation::Window(WindowCoefficients::PerAck),
            "heat" => FpEquation::Heat,
            other => return Err(CliError::Usage(format!("unknown fp equation {other:?}"))),
        };
        let fp = FpSetup {
            equation,
            lambda: s.or(self.lambda, "lambda", 2.0)?,
            grid_lo: s.or(self.grid_lo, "grid-lo", 1.0)?,
            grid_hi: s.or(self.grid_hi, "grid-hi", 41.0)?,
            grid_n: s.or(self.grid_n, "grid-n", 200)?,
            init_mean: s.or(self.init_mean, "init-mean", 10.0)?,
            init_sd: s.or(self.init_sd, "init-sd", 1.0)?,
        };

        Ok(FluidRun {
            mode,
            params,
            initial,
            t_end,
            dt,
            n_traj: s.or(self.n_traj, "n-traj", 1000)?,
            keep: s.or(self.keep, "keep", 0)?,
            seed: s.or(self.seed, "seed", 1)?,
            sample_every,
            fp,
            out_dir: s.or(self.out_dir, "out-dir", PathBuf::from("."))?,
        })
    }
}

fn trajectory_table(header: &[String], rows: impl Iterator<Item = (f64, [f64; 3])>) -> DatTable {
    let mut t = DatTable::new(["t", "W", "Q", "Qhat"]);
    t.comments = header.to_vec();
    t.rows = rows.map(|(time, v)| vec![time, v[0], v[1], v[2]]).collect();
    t
}

/// Solves the window Fokker–Planck equation described by `setup` from a
/// Gaussian initial density.
pub fn solve_fp(setup: &FpSetup, rtt: f64, t_end: f64) -> Result<fluid::FpSolution> {
    let (m, sd) = (setup.init_mean, setup.init_sd);
    if !(sd > 0.0) {
        return Err(Error::InvalidParams(format!(
            "init-sd must be positive, got {sd}"
        )));
    }
    let grid = Grid1D::from_fn(setup.grid_lo, setup.grid_hi, setup.grid_n, |x| {
        (-(x - m).powi(2) / (2.0 * sd * sd)).exp()
    })?;
    let (drift, diff): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = match setup.equation {
        FpEquation::Heat => (Box::new(|_| 0.0), Box::new(|_| 2.0)),
        FpEquation::Window(coefficients) => {
            let eq = WindowEquation {
                coefficients,
                rtt,
                lambda: setup.lambda,
            };
            (
                Box::new(move |w| eq.drift(w)),
                Box::new(move |w| eq.diffusion_sq(w)),
            )
        }
    };
    let dx = grid.dx;
    let d_max = grid.centers().map(&diff).fold(0.0, f64::max);
    let a_max = (0..=grid.n)
        .map(|i| drift(grid.lo + i as f64 * dx).abs())
        .fold(0.0, f64::max);
    let mut dt = f64::INFINITY;
    if d_max > 0.0 {
        dt = dt.min(0.5 * dx * dx / d_max);
    }
    if a_max > 0.0 {
        dt = dt.min(0.5 * dx / a_max);
    }
    if !dt.is_finite() {
        dt = t_end.max(f64::MIN_POSITIVE);
    }
    fluid::solve_fokker_planck_1d(grid, drift, diff, dt, t_end)
}

/// Integrates the fluid model and writes its output files. Returns the paths
/// written.
pub fn cmd_fluid(run: &FluidRun) -> Result<Vec<PathBuf>> {
    ensure_dir(&run.out_dir)?;
    let header = run.header();
    let mut written = Vec::new();
    match run.mode {
        FluidMode::Det => {
            let traj = fluid::solve_deterministic(
                &run.params,
                &run.initial,
                run.t_end,
                run.dt,
                run.sample_every,
            )?;
            let path = run.out_dir.join("fluid_det.dat");
            trajectory_table(&header, traj.iter().map(|s| (s.t, s.as_array()))).write(&path)?;
            written.push(path);
        }
        FluidMode::Sde => {
            let cfg = EnsembleConfig {
                sample_every: run.sample_every,
                keep: run.keep,
                ..EnsembleConfig::new(run.t_end, run.dt, run.seed, run.n_traj)
            };
            let ens = fluid::simulate_fluid(&run.params, &run.initial, &cfg)?;
            let path = run.out_dir.join("fluid_mean.dat");
            trajectory_table(
                &header,
                ens.times.iter().copied().zip(ens.mean.iter().copied()),
            )
            .write(&path)?;
            written.push(path);
            let path = run.out_dir.join("fluid_var.dat");
            trajectory_table(
                &header,
                ens.times.iter().copied().zip(ens.variance.iter().copied()),
            )
            .write(&path)?;
            written.push(path);
            for (i, traj) in ens.trajectories.iter().enumerate() {
                let path = run.out_dir.join(format!("fluid_traj_{i}.dat"));
                trajectory_table(&header, traj.iter().map(|s| (s.t, s.as_array()))).write(&path)?;
                written.push(path);
            }
        }
        FluidMode::Fp => {
            let sol = solve_fp(&run.fp, run.params.rtt, run.t_end)?;
            let mut t = DatTable::new(["x", "density"]);
            t.comments = header;
            t.comments.push(format!(
                "t={} steps={} dt={:e} mass={:.12} mean={:.9} variance={:.9} clip-events={}",
                run.t_end,
                sol.steps,
                sol.dt,
                sol.grid.mass(),
                sol.grid.mean(),
                sol.grid.variance(),
                sol.clip_events
            ));
            t.rows = sol
                .grid
                .centers()
                .zip(&sol.grid.density)
                .map(|(x, d)| vec![x, *d])
                .collect();
            let path = run.out_dir.join("fluid_fp.dat");
            t.write(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRun {
    pub packet: Vec<PathBuf>,
    pub fluid: PathBuf,
    pub warmup: f64,
    pub dt: f64,
    pub out: Option<PathBuf>,
}

impl CompareArgs {
    fn resolve(self, s: &Settings) -> CliResult<CompareRun> {
        s.check_keys(&["warmup", "dt", "out"])?;
        let dt = s.or(self.dt, "dt", 0.01)?;
        let warmup = s.or(self.warmup, "warmup", 0.0)?;
        if !(dt > 0.0 && warmup >= 0.0) {
            return Err(CliError::Usage(
                "dt must be positive and warmup >= 0".into(),
            ));
        }
        Ok(CompareRun {
            packet: self.packet,
            fluid: self.fluid,
            warmup,
            dt,
            out: s.get(self.out, "out")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesComparison {
    pub rel_l1: f64,
    pub rel_linf: f64,
    pub mean_packet: f64,
    pub mean_fluid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub start: f64,
    pub end: f64,
    pub points: usize,
    pub q: SeriesComparison,
    pub q_hat: SeriesComparison,
}

fn series(table: &DatTable, name: &str, path: &Path) -> Result<Vec<f64>> {
    table
        .column(name)
        .ok_or_else(|| Error::parse(1, format!("{}: no column {name:?}", path.display())))
}

/// Compares the (seed-averaged) packet-level `Q`, `Q̂` against a fluid
/// trajectory on a common grid after `warmup`.
pub fn compare(run: &CompareRun) -> Result<Comparison> {
    let fluid = DatTable::read(&run.fluid)?;
    let ft = series(&fluid, "t", &run.fluid)?;
    let fq = series(&fluid, "Q", &run.fluid)?;
    let fh = series(&fluid, "Qhat", &run.fluid)?;

    let mut packets = Vec::new();
    for p in &run.packet {
        let t = DatTable::read(p)?;
        packets.push((
            series(&t, "t", p)?,
            series(&t, "Q", p)?,
            series(&t, "Qhat", p)?,
        ));
    }
    let (mut start, mut end) = (f64::NEG_INFINITY, f64::INFINITY);
    for (t, _, _) in &packets {
        let (s, e) = analysis::overlap(t, &ft, run.warmup)?;
        start = start.max(s);
        end = end.min(e);
    }
    if start >= end {
        return Err(Error::DisjointRanges(
            "packet series do not share a window".into(),
        ));
    }
    let grid = analysis::grid(start, end, run.dt);
    let n = packets.len() as f64;
    let mut pq = vec![0.0; grid.len()];
    let mut ph = vec![0.0; grid.len()];
    for (t, q, h) in &packets {
        for (acc, v) in pq.iter_mut().zip(analysis::resample(t, q, &grid)) {
            *acc += v / n;
        }
        for (acc, v) in ph.iter_mut().zip(analysis::resample(t, h, &grid)) {
            *acc += v / n;
        }
    }
    let fq = analysis::resample(&ft, &fq, &grid);
    let fh = analysis::resample(&ft, &fh, &grid);
    let cmp = |a: &[f64], b: &[f64]| SeriesComparison {
        rel_l1: analysis::relative_l1(a, b),
        rel_linf: analysis::relative_linf(a, b),
        mean_packet: analysis::mean(a),
        mean_fluid: analysis::mean(b),
    };
    Ok(Comparison {
        start,
        end,
        points: grid.len(),
        q: cmp(&pq, &fq),
        q_hat: cmp(&ph, &fh),
    })
}

pub fn render_comparison(run: &CompareRun, c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# command=compare fluid={}", run.fluid.display());
    for p in &run.packet {
        let _ = writeln!(out, "# packet={}", p.display());
    }
    let _ = writeln!(out, "# warmup={} dt={}", run.warmup, run.dt);
    let _ = writeln!(
        out,
        "window = [{:.6}, {:.6}] s, {} points",
        c.start, c.end, c.points
    );
    for (name, s) in [("Q", &c.q), ("Qhat", &c.q_hat)] {
        let _ = writeln!(
            out,
            "{name:<4}: rel_L1 = {:.6}  rel_Linf = {:.6}  mean_packet = {:.6}  mean_fluid = {:.6}",
            s.rel_l1, s.rel_linf, s.mean_packet, s.mean_fluid
        );
    }
    let _ = writeln!(
        out,
        "summary q_l1={:.6} q_linf={:.6} q_mean_packet={:.6} q_mean_fluid={:.6} \
         qhat_l1={:.6} qhat_linf={:.6} qhat_mean_packet={:.6} qhat_mean_fluid={:.6}",
        c.q.rel_l1,
        c.q.rel_linf,
        c.q.mean_packet,
        c.q.mean_fluid,
        c.q_hat.rel_l1,
        c.q_hat.rel_linf,
        c.q_hat.mean_packet,
        c.q_hat.mean_fluid
    );
    out
}

pub fn cmd_compare(run: &CompareRun) -> Result<String> {
    let text = render_comparison(run, &compare(run)?);
    if let Some(path) = &run.out {
        std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    }
    Ok(text)
}

/// Parses the arguments and resolves them against the config file.
pub fn resolve(cli: Cli) -> CliResult<RunConfig> {
    let settings = Settings::load(cli.config.as_deref())?;
    Ok(match cli.command {
        Command::Sim(a) => RunConfig::Sim(a.resolve(&settings)?),
        Command::Decode(a) => RunConfig::Decode(a.resolve(&settings)?),
        Command::Fluid(a) => RunConfig::Fluid(a.resolve(&settings)?),
        Command::Compare(a) => RunConfig::Compare(a.resolve(&settings)?),
    })
}

/// A validated subcommand with every parameter resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Sim(SimRun),
    Decode(DecodeRun),
    Fluid(FluidRun),
    Compare(CompareRun),
}

/// Executes a resolved command, returning what should go to stdout.
pub fn execute(config: &RunConfig) -> Result<String> {
    match config {
        RunConfig::Sim(r) => {
            cmd_sim(r)?;
            Ok(String::new())
        }
        RunConfig::Decode(r) => cmd_decode(r),
        RunConfig::Fluid(r) => {
            cmd_fluid(r)?;
            Ok(String::new())
        }
        RunConfig::Compare(r) => cmd_compare(r),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = resolve(cli).and_then(|cfg| execute(&cfg).map_err(CliError::from));
    match result {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("red-bench: {e}");
            e.exit_code()
        }
    }
}
