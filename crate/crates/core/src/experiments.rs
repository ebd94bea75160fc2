//! Monte Carlo studies of localization error and duty-cycle feasibility.
//!
//! Stochastic studies split their target points into fixed-size chunks. Chunk
//! `i` draws from a ChaCha8 stream seeded with the master seed and stream id
//! `i`, and results are merged in chunk order. Output therefore depends only
//! on the seed and configuration, never on the number of worker threads.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::counter::{quantize, CounterConfig, CounterError, ProcessorClock};
use crate::error_model::{
    sample_error, sign_permutations, sign_permutations_per_gateway, sync_offsets, ErrorModelError,
    ErrorModelParams,
};
use crate::geometry::{distance, sample_in_triangle, GatewayTriple, Position, SyncNodeConfig};
use crate::lora_phy::{duty_cycle, Bandwidth, DutyCyclePreset, RadioError, RadioParams};
use crate::solver::{forward_toa, localization_error, solve_analytic, ToAObservation};

/// Target points handled by one random stream.
pub const CHUNK_SIZE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Counter(#[from] CounterError),
    #[error(transparent)]
    ErrorModel(#[from] ErrorModelError),
    #[error("worker pool: {0}")]
    ThreadPool(String),
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunk_ranges(n: usize) -> Vec<(usize, Range<usize>)> {
    (0..n.div_ceil(CHUNK_SIZE))
        .map(|i| (i, i * CHUNK_SIZE..((i + 1) * CHUNK_SIZE).min(n)))
        .collect()
}

/// Run `f` over every chunk on `workers` threads, returning results in chunk order.
fn run_chunks<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync,
{
    let chunks = chunk_ranges(n);
    if workers <= 1 {
        return Ok(chunks.into_iter().map(|(i, r)| f(i, r)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| chunks.into_par_iter().map(|(i, r)| f(i, r)).collect()))
}

/// Largest localization error over a set of perturbed observations, plus the
/// number of solves that failed. `None` when every solve failed.
fn worst_error<'a>(
    truth: Position,
    gws: &GatewayTriple,
    observations: impl IntoIterator<Item = &'a ToAObservation>,
) -> (Option<f64>, usize) {
    let mut worst: Option<f64> = None;
    let mut failed = 0;
    for obs in observations {
        match solve_analytic(obs, gws) {
            Ok(est) => {
                let e = localization_error(truth, &est);
                worst = Some(worst.map_or(e, |w| w.max(e)));
            }
            Err(_) => failed += 1,
        }
    }
    (worst, failed)
}

/// `start, start + step, ...` up to and including `stop` (within rounding).
pub fn period_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, ExperimentError> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || start < 0.0 || stop < start {
        return Err(ExperimentError::InvalidConfig(format!(
            "period range start={start} stop={stop} step={step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Counter periods `T` to evaluate (s). The perturbation applied is `e = T`.
    pub periods: Vec<f64>,
    pub n_points: usize,
    pub seed: u64,
    pub gateways: GatewayTriple,
    pub sigma_bands: bool,
}

impl SweepConfig {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_points == 0 {
            return Err(ExperimentError::InvalidConfig("n_points must be at least 1".into()));
        }
        if self.periods.is_empty() || self.periods.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(ExperimentError::InvalidConfig("periods must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmaxRow {
    pub period: f64,
    /// Mean over points of the per-point worst error (m).
    pub e_max: f64,
    /// Sample standard deviation of the per-point worst error (m).
    pub sigma: f64,
    pub failed_solves: usize,
    /// `e_max ± k·sigma` for k = 1, 2, 3, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bands: Option<[(f64, f64); 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmaxResult {
    pub rows: Vec<EmaxRow>,
}

impl EmaxResult {
    /// Row whose period is closest to `period`.
    pub fn nearest(&self, period: f64) -> Option<&EmaxRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.period - period).abs().total_cmp(&(b.period - period).abs()))
    }
}

fn mean_and_sigma(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Worst-case mean localization error as a function of the counter period.
///
/// The same target points are reused for every period. Each point's arrival
/// times are offset by `±T` in all eight sign patterns and the largest
/// resulting error is kept; `e_max` is the mean of these over all points.
pub fn sweep_emax(cfg: &SweepConfig, workers: usize) -> Result<EmaxResult, ExperimentError> {
    cfg.validate()?;
    let gws = &cfg.gateways;
    let periods = &cfg.periods;

    // [chunk][period][point] -> (worst error, failures)
    let per_chunk = run_chunks(cfg.n_points, workers, |chunk, range| {
        let mut rng = chunk_rng(cfg.seed, chunk);
        let targets: Vec<(Position, ToAObservation)> = range
            .map(|_| {
                let p = sample_in_triangle(gws, &mut rng);
                (p, forward_toa(p, gws, 0.0))
            })
            .collect();
        periods
            .iter()
            .map(|&t| {
                targets
                    .iter()
                    .map(|(p, obs)| worst_error(*p, gws, &sign_permutations(obs, t)))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    })?;

    let rows = periods
        .iter()
        .enumerate()
        .map(|(k, &period)| {
            let mut values = Vec::with_capacity(cfg.n_points);
            let mut failed_solves = 0;
            for chunk in &per_chunk {
                for &(worst, failed) in &chunk[k] {
                    failed_solves += failed;
                    if failed == 0 {
                        values.extend(worst);
                    }
                }
            }
            let (e_max, sigma) = mean_and_sigma(&values);
            let bands = cfg
                .sigma_bands
                .then(|| [1.0, 2.0, 3.0].map(|m| (e_max - m * sigma, e_max + m * sigma)));
            EmaxRow {
                period,
                e_max,
                sigma,
                failed_solves,
                bands,
            }
        })
        .collect();
    Ok(EmaxResult { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DutyCycleCell {
    pub time_on_air: f64,
    pub n_bits: u32,
    pub period: f64,
    pub duty_cycle: f64,
    pub feasible_10pct: bool,
    pub feasible_1pct: bool,
}

impl DutyCycleCell {
    pub fn feasible_under(&self, cap: f64) -> bool {
        self.duty_cycle <= cap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DutyCycleGrid {
    pub cells: Vec<DutyCycleCell>,
}

/// Duty cycle for every `(τ, n)` pair at a fixed counter period, flagged
/// against the 10 % and 1 % caps. Rows are τ-major.
pub fn duty_cycle_grid(time_on_air: &[f64], n_values: &[u32], period: f64) -> Result<DutyCycleGrid, ExperimentError> {
    let mut cells = Vec::with_capacity(time_on_air.len() * n_values.len());
    for &tau in time_on_air {
        for &n in n_values {
            let d = duty_cycle(tau, n, period)?;
            cells.push(DutyCycleCell {
                time_on_air: tau,
                n_bits: n,
                period,
                duty_cycle: d,
                feasible_10pct: DutyCyclePreset::RELAXED.allows(d),
                feasible_1pct: DutyCyclePreset::STANDARD.allows(d),
            });
        }
    }
    Ok(DutyCycleGrid { cells })
}

/// Optional non-ideal error terms for the spatial error map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModelSettings {
    pub drift_enabled: bool,
    pub slippage_enabled: bool,
    pub counter_drift_sigma: f64,
    pub processor_drift_sigma: f64,
    pub max_slippages: u32,
    pub processor: ProcessorClock,
}

impl Default for ErrorModelSettings {
    fn default() -> Self {
        Self {
            drift_enabled: false,
            slippage_enabled: false,
            counter_drift_sigma: 0.0,
            processor_drift_sigma: 0.0,
            max_slippages: 0,
            processor: ProcessorClock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMapConfig {
    /// Counter period `T` (s). Zero disables every random error term.
    pub period: f64,
    pub n_bits: u32,
    pub n_points: usize,
    pub n_transmissions: usize,
    pub seed: u64,
    pub gateways: GatewayTriple,
    pub model: ErrorModelSettings,
    /// Sync node, for the survey-error offset. `None` means a perfect survey.
    pub sync: Option<SyncNodeConfig>,
}

impl ErrorMapConfig {
    pub const DEFAULT_POINTS: usize = 7050;
    pub const DEFAULT_TRANSMISSIONS: usize = 23;

    pub fn new(period: f64, n_bits: u32, seed: u64, gateways: GatewayTriple) -> Self {
        Self {
            period,
            n_bits,
            n_points: Self::DEFAULT_POINTS,
            n_transmissions: Self::DEFAULT_TRANSMISSIONS,
            seed,
            gateways,
            model: ErrorModelSettings::default(),
            sync: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMapPoint {
    pub pos: Position,
    /// Worst error over every transmission and sign pattern (m); NaN if every solve failed.
    pub max_error: f64,
    pub failed_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMap {
    pub points: Vec<ErrorMapPoint>,
}

impl ErrorMap {
    pub fn global_max(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.max_error)
            .filter(|e| e.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn failed_solves(&self) -> usize {
        self.points.iter().map(|p| p.failed_solves).sum()
    }

    /// Mean worst error over points within `radius` of `center`; `None` if no point qualifies.
    pub fn mean_within(&self, center: Position, radius: f64) -> Option<f64> {
        let near: Vec<f64> = self
            .points
            .iter()
            .filter(|p| distance(p.pos, center) <= radius && p.max_error.is_finite())
            .map(|p| p.max_error)
            .collect();
        (!near.is_empty()).then(|| near.iter().sum::<f64>() / near.len() as f64)
    }
}

/// Spatial map of the worst localization error inside the gateway triangle.
///
/// Each point transmits `n_transmissions` times. Every transmission draws an
/// independent arrival-time error per gateway from the error model, and the
/// eight sign patterns of those errors are applied on top.
pub fn error_map(cfg: &ErrorMapConfig, workers: usize) -> Result<ErrorMap, ExperimentError> {
    if cfg.n_points == 0 || cfg.n_transmissions == 0 {
        return Err(ExperimentError::InvalidConfig(
            "n_points and n_transmissions must be at least 1".into(),
        ));
    }
    if !(cfg.period.is_finite() && cfg.period >= 0.0) {
        return Err(ExperimentError::InvalidConfig(format!("period {}", cfg.period)));
    }
    let gws = &cfg.gateways;
    // A zero period means a perfect clock: no random terms at all.
    let model = if cfg.period > 0.0 {
        let counter = CounterConfig::new(cfg.n_bits, cfg.period)?;
        let params = ErrorModelParams {
            counter_drift_sigma: cfg.model.counter_drift_sigma,
            processor_drift_sigma: cfg.model.processor_drift_sigma,
            max_slippages: cfg.model.max_slippages,
            counter,
            processor: cfg.model.processor,
            drift_enabled: cfg.model.drift_enabled,
            slippage_enabled: cfg.model.slippage_enabled,
        };
        params.validate()?;
        Some(params)
    } else {
        None
    };
    let offsets = match &cfg.sync {
        Some(sync) => sync_offsets(sync, gws.gateways())?,
        None => [0.0; 3],
    };

    let per_chunk = run_chunks(cfg.n_points, workers, |chunk, range| {
        let mut rng = chunk_rng(cfg.seed, chunk);
        range
            .map(|_| {
                let pos = sample_in_triangle(gws, &mut rng);
                let truth = forward_toa(pos, gws, 0.0);
                let counts = match &model {
                    Some(params) => {
                        let mut counts = [0u64; 3];
                        for (c, t) in counts.iter_mut().zip(truth.arrivals) {
                            *c = quantize(t, &params.counter)?;
                        }
                        counts
                    }
                    None => [0; 3],
                };
                let mut worst: Option<f64> = None;
                let mut failed_solves = 0;
                for _ in 0..cfg.n_transmissions {
                    let e: [f64; 3] = match &model {
                        Some(params) => {
                            std::array::from_fn(|j| sample_error(params, offsets[j], counts[j], &mut rng).total())
                        }
                        None => offsets,
                    };
                    let (w, failed) = worst_error(pos, gws, &sign_permutations_per_gateway(&truth, e));
                    failed_solves += failed;
                    if let Some(w) = w {
                        worst = Some(worst.map_or(w, |m: f64| m.max(w)));
                    }
                }
                Ok(ErrorMapPoint {
                    pos,
                    max_error: worst.unwrap_or(f64::NAN),
                    failed_solves,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;

    let mut points = Vec::with_capacity(cfg.n_points);
    for chunk in per_chunk {
        points.extend(chunk?);
    }
    Ok(ErrorMap { points })
}

/// Parameter space swept when bounding the sync node's airtime.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSweep {
    pub sf: u8,
    /// Bandwidths with the largest payload allowed at each (bytes).
    pub bandwidth_caps: Vec<(Bandwidth, u8)>,
    pub min_payload: u8,
    pub coding_rates: Vec<u8>,
}

impl AlphaSweep {
    /// SF12 over all three bandwidths, payloads up to 51 bytes (33 at
    /// 500 kHz) and coding rates 4/5 to 4/8.
    pub fn sf12() -> Self {
        Self {
            sf: 12,
            bandwidth_caps: vec![(Bandwidth::Khz125, 51), (Bandwidth::Khz250, 51), (Bandwidth::Khz500, 33)],
            min_payload: 1,
            coding_rates: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBounds {
    pub tau_min: f64,
    pub tau_max: f64,
    pub argmin: RadioParams,
    pub argmax: RadioParams,
    pub evaluated: usize,
}

/// Range of sync-packet airtime over a parameter sweep. Low data rate
/// optimization follows the symbol-duration rule in [`RadioParams::new`].
pub fn alpha_bounds(sweep: &AlphaSweep) -> Result<AlphaBounds, ExperimentError> {
    let mut best: Option<AlphaBounds> = None;
    for &(bw, cap) in &sweep.bandwidth_caps {
        for &cr in &sweep.coding_rates {
            for pl in sweep.min_payload..=cap {
                let params = RadioParams::new(sweep.sf, bw, cr, pl)?;
                let tau = params.time_on_air();
                best = Some(match best {
                    None => AlphaBounds {
                        tau_min: tau,
                        tau_max: tau,
                        argmin: params,
                        argmax: params,
                        evaluated: 1,
                    },
                    Some(mut b) => {
                        if tau < b.tau_min {
                            b.tau_min = tau;
                            b.argmin = params;
                        }
                        if tau > b.tau_max {
                            b.tau_max = tau;
                            b.argmax = params;
                        }
                        b.evaluated += 1;
                        b
                    }
                });
            }
        }
    }
    best.ok_or_else(|| ExperimentError::InvalidConfig("empty airtime sweep".into()))
}
