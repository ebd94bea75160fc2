//! Command-line front end.
//!
//! Each subcommand builds its inputs from an optional JSON config file, lets
//! flags override individual values, runs one computation and writes a
//! table as CSV or JSON to `--out` (stdout when absent). A one-line summary
//! goes to stderr.
//!
//! Exit codes: 0 success, 1 configuration or parse error, 2 domain error
//! (singular geometry, no real root), 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::counter::{CounterConfig, ProcessorClock};
use crate::experiments::{
    alpha_bounds, duty_cycle_grid, error_map, period_grid, sweep_emax, AlphaSweep, ErrorMapConfig,
    ErrorModelSettings, ExperimentError, SweepConfig,
};
use crate::error_model::ErrorModelError;
use crate::geometry::{canonical_triangle, GatewayTriple, GeometryError, Position, SyncNodeConfig};
use crate::lora_phy::{
    duty_cycle, payload_symbol_count, preamble_duration, symbol_duration, time_on_air, Bandwidth, RadioError,
    RadioParams,
};
use crate::solver::{solve_analytic, ToAObservation};

/// Environment variable consulted when no seed is given on the command line or in the config.
pub const SEED_ENV: &str = "LORAFIX_SEED";

const DEFAULT_DIAMETER_M: f64 = 10_000.0;
const DEFAULT_PERIOD_S: f64 = 40e-9;
const DEFAULT_BITS: u32 = 32;
const DEFAULT_SWEEP_POINTS: usize = 100_000;
const DEFAULT_TAUS_S: [f64; 8] = [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.6];

#[derive(Debug, Parser)]
#[command(name = "lorafix", version, about = "TDoA localization studies for beacon-synchronized LoRa gateways")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Locate a transmitter from three arrival times.
    Solve,
    /// Airtime breakdown and duty cycle for one radio configuration.
    Airtime,
    /// Mean worst-case localization error against counter period.
    SweepEmax,
    /// Duty cycle and feasibility over airtime and counter width.
    DutycycleGrid,
    /// Worst localization error at random points inside the triangle.
    ErrorMap,
    /// Airtime range of the sync packet over the SF12 parameter space.
    AlphaBounds,
}

impl Command {
    fn config_name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Airtime => "airtime",
            Command::SweepEmax => "sweep-emax",
            Command::DutycycleGrid => "dutycycle-grid",
            Command::ErrorMap => "error-map",
            Command::AlphaBounds => "alpha-bounds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Counter period in nanoseconds.
    #[arg(long = "T-ns", global = true)]
    pub t_ns: Option<f64>,
    #[arg(long, global = true)]
    pub n_bits: Option<u32>,
    #[arg(long, global = true)]
    pub sf: Option<u8>,
    #[arg(long, global = true)]
    pub bw_hz: Option<u32>,
    /// Coding rate index 1..=4 (4/5 to 4/8).
    #[arg(long, global = true)]
    pub cr: Option<u8>,
    /// Payload length in bytes.
    #[arg(long, global = true)]
    pub payload: Option<u8>,
    #[arg(long, global = true)]
    pub points: Option<usize>,
    #[arg(long, global = true)]
    pub transmissions: Option<usize>,
    /// Circumdiameter of the equilateral gateway triangle in meters.
    #[arg(long, global = true)]
    pub diameter_m: Option<f64>,
    /// Three arrival times in seconds, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub toa_s: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub circumdiameter_m: Option<f64>,
    pub gateways: Option<[Position; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSection {
    /// Defaults to the circumcenter.
    pub position: Option<Position>,
    #[serde(default)]
    pub position_error_m: (f64, f64),
    pub period_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterSection {
    pub n_bits: Option<u32>,
    pub period_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    pub sf: Option<u8>,
    pub bw_hz: Option<u32>,
    pub cr: Option<u8>,
    pub payload: Option<u8>,
    pub preamble: Option<u16>,
    pub header_disabled: Option<bool>,
    /// Forces low data rate optimization on or off; automatic when absent.
    pub low_dr_opt: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModelSection {
    #[serde(default)]
    pub drift: bool,
    #[serde(default)]
    pub slippage: bool,
    #[serde(default)]
    pub counter_drift_sigma_s: f64,
    #[serde(default)]
    pub processor_drift_sigma_s: f64,
    #[serde(default)]
    pub max_slippages: u32,
    pub processor_period_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub points: Option<usize>,
    pub transmissions: Option<usize>,
    /// Explicit list of counter periods for the sweep.
    pub periods_s: Option<Vec<f64>>,
    /// `[start, stop, step]` for the sweep when no explicit list is given.
    pub period_range_s: Option<[f64; 3]>,
    #[serde(default)]
    pub sigma_bands: bool,
    pub tau_s: Option<Vec<f64>>,
    pub n_bits: Option<Vec<u32>>,
}

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    #[serde(default)]
    pub geometry: GeometrySection,
    pub sync: Option<SyncSection>,
    #[serde(default)]
    pub counter: CounterSection,
    #[serde(default)]
    pub radio: RadioSection,
    #[serde(default)]
    pub error_model: ErrorModelSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub toa_s: Option<[f64; 3]>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    /// Machine-readable name plus detail.
    Domain(&'static str, String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Domain(..) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config-error: {m}"),
            CliError::Domain(name, m) => write!(f, "{name}: {m}"),
            CliError::Io(m) => write!(f, "io-error: {m}"),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Collinear { .. } => CliError::Domain("singular-geometry", e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<RadioError> for CliError {
    fn from(e: RadioError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::ErrorModel(ErrorModelError::DegenerateSyncTiming) => {
                CliError::Domain("degenerate-sync-timing", e.to_string())
            }
            ExperimentError::ThreadPool(m) => CliError::Io(m),
            _ => CliError::Config(e.to_string()),
        }
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    /// Floats use 17 significant digits so they parse back to the same bits.
    fn to_csv(&self) -> String {
        match self {
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
        }
    }
}

/// Named columns (units in the names) and rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "ragged row");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_csv)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Result<Vec<u8>, CliError> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>, CliError> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Table plus the human summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: ResultTable,
    pub summary: String,
}

/// Config file merged with flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub args: CommonArgs,
    pub config: RunConfig,
}

impl Resolved {
    pub fn new(command: Command, args: CommonArgs, config: RunConfig) -> Result<Self, CliError> {
        if let Some(name) = &config.command {
            if name != command.config_name() {
                return Err(CliError::Config(format!(
                    "config is for `{name}` but `{}` was requested",
                    command.config_name()
                )));
            }
        }
        Ok(Self { command, args, config })
    }

    fn seed(&self) -> Result<u64, CliError> {
        if let Some(s) = self.args.seed.or(self.config.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not a u64"))),
            Err(_) => Err(CliError::Config(format!(
                "a seed is required: pass --seed, set `seed` in the config or {SEED_ENV}"
            ))),
        }
    }

    pub fn workers(&self) -> Result<usize, CliError> {
        match self.args.workers.or(self.config.workers).unwrap_or(1) {
            0 => Err(CliError::Config("--workers must be at least 1".into())),
            n => Ok(n),
        }
    }

    pub fn format(&self) -> OutputFormat {
        self.args.format.or(self.config.format).unwrap_or_default()
    }

    pub fn out(&self) -> Option<PathBuf> {
        self.args.out.clone().or_else(|| self.config.out.clone())
    }

    fn gateways(&self) -> Result<GatewayTriple, CliError> {
        let g = &self.config.geometry;
        if let Some(d) = self.args.diameter_m {
            return Ok(canonical_triangle(d)?);
        }
        match (g.gateways, g.circumdiameter_m) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "geometry: give either `gateways` or `circumdiameter_m`, not both".into(),
            )),
            (Some([g1, g2, g3]), None) => Ok(GatewayTriple::new(g1, g2, g3)?),
            (None, d) => Ok(canonical_triangle(d.unwrap_or(DEFAULT_DIAMETER_M))?),
        }
    }

    fn period(&self) -> Result<f64, CliError> {
        let t = match self.args.t_ns {
            Some(ns) => ns * 1e-9,
            None => self.config.counter.period_s.unwrap_or(DEFAULT_PERIOD_S),
        };
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::Config(format!("counter period {t} s")));
        }
        Ok(t)
    }

    fn bits(&self) -> u32 {
        self.args.n_bits.or(self.config.counter.n_bits).unwrap_or(DEFAULT_BITS)
    }

    fn radio(&self) -> Result<RadioParams, CliError> {
        let r = &self.config.radio;
        let bw = Bandwidth::try_from(self.args.bw_hz.or(r.bw_hz).unwrap_or(125_000))?;
        let mut p = RadioParams::new(
            self.args.sf.or(r.sf).unwrap_or(12),
            bw,
            self.args.cr.or(r.cr).unwrap_or(1),
            self.args.payload.or(r.payload).unwrap_or(51),
        )?;
        if let Some(n) = r.preamble {
            p = p.with_preamble(n)?;
        }
        if let Some(h) = r.header_disabled {
            p = p.with_header_disabled(h);
        }
        if let Some(de) = r.low_dr_opt {
            p = p.with_low_dr_opt(de);
        }
        Ok(p)
    }

    fn sync(&self, gws: &GatewayTriple) -> Result<Option<SyncNodeConfig>, CliError> {
        let Some(s) = &self.config.sync else {
            return Ok(None);
        };
        let position = s.position.unwrap_or_else(|| gws.circumcenter());
        Ok(Some(SyncNodeConfig::new(position, s.position_error_m, s.period_s.unwrap_or(1.0))?))
    }

    fn model(&self) -> Result<ErrorModelSettings, CliError> {
        let m = &self.config.error_model;
        let processor = match m.processor_period_s {
            Some(p) => ProcessorClock::new(p).map_err(|e| CliError::Config(e.to_string()))?,
            None => ProcessorClock::default(),
        };
        Ok(ErrorModelSettings {
            drift_enabled: m.drift,
            slippage_enabled: m.slippage,
            counter_drift_sigma: m.counter_drift_sigma_s,
            processor_drift_sigma: m.processor_drift_sigma_s,
            max_slippages: m.max_slippages,
            processor,
        })
    }

    fn points(&self, default: usize) -> usize {
        self.args.points.or(self.config.experiment.points).unwrap_or(default)
    }
}

/// Run the resolved command and build its table.
pub fn execute(r: &Resolved) -> Result<Outcome, CliError> {
    match r.command {
        Command::Solve => cmd_solve(r),
        Command::Airtime => cmd_airtime(r),
        Command::SweepEmax => cmd_sweep_emax(r),
        Command::DutycycleGrid => cmd_dutycycle_grid(r),
        Command::ErrorMap => cmd_error_map(r),
        Command::AlphaBounds => cmd_alpha_bounds(r),
    }
}

fn cmd_solve(r: &Resolved) -> Result<Outcome, CliError> {
    let gws = r.gateways()?;
    let toa = match (&r.args.toa_s, r.config.toa_s) {
        (Some(v), _) => <[f64; 3]>::try_from(v.as_slice())
            .map_err(|_| CliError::Config(format!("--toa-s needs exactly 3 values, got {}", v.len())))?,
        (None, Some(t)) => t,
        (None, None) => return Err(CliError::Config("solve needs --toa-s t1,t2,t3 or `toa_s`".into())),
    };
    let obs = ToAObservation::new(toa[0], toa[1], toa[2]).map_err(|e| CliError::Config(e.to_string()))?;
    let est = solve_analytic(&obs, &gws).map_err(|e| CliError::Domain(e.name(), e.to_string()))?;
    let mut table = ResultTable::new(&["x_m", "y_m", "t0_s", "residual_m", "root_index"]);
    table.push(vec![
        Cell::Float(est.pos.x),
        Cell::Float(est.pos.y),
        Cell::Float(est.t0),
        Cell::Float(est.residual),
        Cell::Int(est.root_index as u64),
    ]);
    Ok(Outcome {
        table,
        summary: format!("position ({:.3}, {:.3}) m, t0 {:.6e} s", est.pos.x, est.pos.y, est.t0),
    })
}

fn cmd_airtime(r: &Resolved) -> Result<Outcome, CliError> {
    let p = r.radio()?;
    let (bits, period) = (r.bits(), r.period()?);
    let tau = time_on_air(&p);
    let delta = duty_cycle(tau, bits, period)?;
    let mut table = ResultTable::new(&[
        "T_sym_s",
        "T_preamble_s",
        "payload_symbols",
        "tau_s",
        "n_bits",
        "T_s",
        "delta",
    ]);
    table.push(vec![
        Cell::Float(symbol_duration(&p)),
        Cell::Float(preamble_duration(&p)),
        Cell::Int(payload_symbol_count(&p) as u64),
        Cell::Float(tau),
        Cell::Int(bits as u64),
        Cell::Float(period),
        Cell::Float(delta),
    ]);
    Ok(Outcome {
        table,
        summary: format!("{p}: time on air {tau:.6} s, duty cycle {:.4} %", delta * 100.0),
    })
}

fn cmd_sweep_emax(r: &Resolved) -> Result<Outcome, CliError> {
    let e = &r.config.experiment;
    let periods = match (&e.periods_s, e.period_range_s) {
        (Some(list), _) => list.clone(),
        (None, Some([a, b, s])) => period_grid(a, b, s)?,
        (None, None) => period_grid(2.5e-9, 100e-9, 2.5e-9)?,
    };
    let cfg = SweepConfig {
        periods,
        n_points: r.points(DEFAULT_SWEEP_POINTS),
        seed: r.seed()?,
        gateways: r.gateways()?,
        sigma_bands: e.sigma_bands,
    };
    let result = sweep_emax(&cfg, r.workers()?)?;
    let mut columns = vec!["T_s", "e_max_m", "sigma_m", "failed_solves"];
    if cfg.sigma_bands {
        columns.extend(["lo1_m", "hi1_m", "lo2_m", "hi2_m", "lo3_m", "hi3_m"]);
    }
    let mut table = ResultTable::new(&columns);
    for row in &result.rows {
        let mut cells = vec![
            Cell::Float(row.period),
            Cell::Float(row.e_max),
            Cell::Float(row.sigma),
            Cell::Int(row.failed_solves as u64),
        ];
        for (lo, hi) in row.bands.iter().flatten() {
            cells.extend([Cell::Float(*lo), Cell::Float(*hi)]);
        }
        table.push(cells);
    }
    let target = r.period()?;
    let summary = match result.nearest(target) {
        Some(row) => format!(
            "e_max at T = {:.1} ns: {:.3} m (sigma {:.3} m, {} failed solves)",
            row.period * 1e9,
            row.e_max,
            row.sigma,
            row.failed_solves
        ),
        None => "no rows".into(),
    };
    Ok(Outcome { table, summary })
}

fn cmd_dutycycle_grid(r: &Resolved) -> Result<Outcome, CliError> {
    let e = &r.config.experiment;
    let taus = e.tau_s.clone().unwrap_or_else(|| DEFAULT_TAUS_S.to_vec());
    let bits: Vec<u32> = match (r.args.n_bits, &e.n_bits) {
        (Some(n), _) => vec![n],
        (None, Some(list)) => list.clone(),
        (None, None) => (16..=40).collect(),
    };
    let grid = duty_cycle_grid(&taus, &bits, r.period()?)?;
    let mut table = ResultTable::new(&["tau_s", "n_bits", "T_s", "delta", "feasible_10pct", "feasible_1pct"]);
    for c in &grid.cells {
        table.push(vec![
            Cell::Float(c.time_on_air),
            Cell::Int(c.n_bits as u64),
            Cell::Float(c.period),
            Cell::Float(c.duty_cycle),
            Cell::Bool(c.feasible_10pct),
            Cell::Bool(c.feasible_1pct),
        ]);
    }
    let feasible = grid.cells.iter().filter(|c| c.feasible_1pct).count();
    Ok(Outcome {
        table,
        summary: format!("{} of {} cells within the 1 % cap", feasible, grid.cells.len()),
    })
}

fn cmd_error_map(r: &Resolved) -> Result<Outcome, CliError> {
    let gws = r.gateways()?;
    let mut cfg = ErrorMapConfig::new(r.period()?, r.bits(), r.seed()?, gws);
    cfg.n_points = r.points(ErrorMapConfig::DEFAULT_POINTS);
    cfg.n_transmissions = r
        .args
        .transmissions
        .or(r.config.experiment.transmissions)
        .unwrap_or(ErrorMapConfig::DEFAULT_TRANSMISSIONS);
    cfg.model = r.model()?;
    cfg.sync = r.sync(&gws)?;
    if cfg.period > 0.0 {
        CounterConfig::new(cfg.n_bits, cfg.period).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let map = error_map(&cfg, r.workers()?)?;
    let mut table = ResultTable::new(&["x_m", "y_m", "max_error_m", "failed_solves"]);
    for p in &map.points {
        table.push(vec![
            Cell::Float(p.pos.x),
            Cell::Float(p.pos.y),
            Cell::Float(p.max_error),
            Cell::Int(p.failed_solves as u64),
        ]);
    }
    Ok(Outcome {
        table,
        summary: format!(
            "global max error {:.3} m over {} points ({} failed solves)",
            map.global_max(),
            map.points.len(),
            map.failed_solves()
        ),
    })
}

fn cmd_alpha_bounds(r: &Resolved) -> Result<Outcome, CliError> {
    let mut sweep = AlphaSweep::sf12();
    if let Some(sf) = r.args.sf.or(r.config.radio.sf) {
        sweep.sf = sf;
    }
    let b = alpha_bounds(&sweep)?;
    let mut table = ResultTable::new(&["tau_min_s", "tau_max_s", "argmin_params", "argmax_params"]);
    table.push(vec![
        Cell::Float(b.tau_min),
        Cell::Float(b.tau_max),
        Cell::Text(b.argmin.to_string()),
        Cell::Text(b.argmax.to_string()),
    ]);
    Ok(Outcome {
        table,
        summary: format!("airtime between {:.6} s and {:.6} s over {} settings", b.tau_min, b.tau_max, b.evaluated),
    })
}

fn write_output(r: &Resolved, outcome: &Outcome) -> Result<(), CliError> {
    let bytes = outcome.table.render(r.format())?;
    match r.out() {
        Some(path) => {
            std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn run_parsed(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let resolved = Resolved::new(cli.command, cli.common, config)?;
    let outcome = execute(&resolved)?;
    write_output(&resolved, &outcome)?;
    eprintln!("{}", outcome.summary);
    Ok(())
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
