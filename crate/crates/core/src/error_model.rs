//! Stochastic arrival-time error model.
//!
//! The error added to a gateway's arrival time has four parts:
//!
//! ```text
//! e_t = Δt_d + N·ω₁ + U[0, T) + K·(T_g + ω₂)
//! ```
//!
//! * `Δt_d`: offset caused by a mis-surveyed sync node position,
//! * `N·ω₁`: counter-clock drift, `ω₁ ~ N(0, σ₁²)` scaled by the latched count,
//! * `U[0, T)`: counter quantization,
//! * `K·(T_g + ω₂)`: processor clock slippage, `K ~ U{0..=k}`, `ω₂ ~ N(0, σ₂²)`.
//!
//! Drift and slippage are off by default.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::counter::{CounterConfig, ProcessorClock};
use crate::geometry::{distance, Position, SyncNodeConfig};
use crate::solver::ToAObservation;
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ErrorModelError {
    #[error("sync arrival time must be non-zero")]
    DegenerateSyncTiming,
    #[error("drift standard deviation must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModelParams {
    /// σ₁, standard deviation of the per-count drift ω₁ (s).
    pub counter_drift_sigma: f64,
    /// σ₂, standard deviation of the processor drift ω₂ (s).
    pub processor_drift_sigma: f64,
    /// k, maximum number of processor clock slippages.
    pub max_slippages: u32,
    pub counter: CounterConfig,
    pub processor: ProcessorClock,
    pub drift_enabled: bool,
    pub slippage_enabled: bool,
}

impl ErrorModelParams {
    /// Quantization only.
    pub fn ideal(counter: CounterConfig) -> Self {
        Self {
            counter_drift_sigma: 0.0,
            processor_drift_sigma: 0.0,
            max_slippages: 0,
            counter,
            processor: ProcessorClock::default(),
            drift_enabled: false,
            slippage_enabled: false,
        }
    }

    pub fn validate(&self) -> Result<(), ErrorModelError> {
        for sigma in [self.counter_drift_sigma, self.processor_drift_sigma] {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(ErrorModelError::InvalidSigma(sigma));
            }
        }
        Ok(())
    }
}

/// One draw of the arrival-time error at a single gateway, split by source.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ToAErrorSample {
    pub sync_offset: f64,
    pub drift: f64,
    pub rounding: f64,
    pub slippage: f64,
}

impl ToAErrorSample {
    pub fn total(&self) -> f64 {
        self.sync_offset + self.drift + self.rounding + self.slippage
    }
}

/// Arrival time of a sync packet at `gw`, measured against the reset it
/// triggers, i.e. `-distance / c`.
pub fn sync_arrival_time(sync: &SyncNodeConfig, gw: Position) -> f64 {
    -distance(sync.position, gw) / SPEED_OF_LIGHT
}

/// `Δt_d = ((x₀-a)Δx₀ + (y₀-b)Δy₀) / (c² t_d)`.
pub fn sync_offset(sync: &SyncNodeConfig, gw: Position, t_d: f64) -> Result<f64, ErrorModelError> {
    if t_d == 0.0 || !t_d.is_finite() {
        return Err(ErrorModelError::DegenerateSyncTiming);
    }
    let (dx, dy) = sync.position_error;
    let num = (sync.position.x - gw.x) * dx + (sync.position.y - gw.y) * dy;
    Ok(num / (SPEED_OF_LIGHT * SPEED_OF_LIGHT * t_d))
}

/// Per-gateway sync offsets for a sync node, using the geometric arrival times.
pub fn sync_offsets(sync: &SyncNodeConfig, gws: &[Position; 3]) -> Result<[f64; 3], ErrorModelError> {
    let mut out = [0.0; 3];
    for (o, g) in out.iter_mut().zip(gws) {
        *o = sync_offset(sync, *g, sync_arrival_time(sync, *g))?;
    }
    Ok(out)
}

/// Draw the error for one gateway whose counter latched `count`.
///
/// `sync_offset` is the deterministic `Δt_d` for that gateway. The slippage
/// drift ω₂ is drawn once per sample and shared by all `K` slips.
pub fn sample_error<R: Rng + ?Sized>(
    params: &ErrorModelParams,
    sync_offset: f64,
    count: u64,
    rng: &mut R,
) -> ToAErrorSample {
    let period = params.counter.period();
    let mut rounding = period * rng.random::<f64>();
    if rounding >= period {
        rounding = period * (1.0 - f64::EPSILON);
    }

    let drift = if params.drift_enabled && params.counter_drift_sigma > 0.0 {
        let omega1 = Normal::new(0.0, params.counter_drift_sigma)
            .expect("validated sigma")
            .sample(rng);
        count as f64 * omega1
    } else {
        0.0
    };

    let slippage = if params.slippage_enabled {
        let slips = rng.random_range(0..=params.max_slippages);
        let omega2 = if params.processor_drift_sigma > 0.0 {
            Normal::new(0.0, params.processor_drift_sigma)
                .expect("validated sigma")
                .sample(rng)
        } else {
            0.0
        };
        f64::from(slips) * (params.processor.period() + omega2)
    } else {
        0.0
    };

    ToAErrorSample {
        sync_offset,
        drift,
        rounding,
        slippage,
    }
}

/// Worst-case quantization error once drift and slippage are ignored: `T`.
pub fn ideal_error_bound(period: f64) -> f64 {
    period
}

/// The eight observations `(t₁ ± e, t₂ ± e, t₃ ± e)`.
///
/// Pattern `k` uses `-` for gateway `j` when bit `2 - j` of `k` is set, so
/// index 0 is `(+, +, +)` and index 7 is `(-, -, -)`.
pub fn sign_permutations(toa: &ToAObservation, e: f64) -> [ToAObservation; 8] {
    sign_permutations_per_gateway(toa, [e; 3])
}

/// Like [`sign_permutations`] with a separate magnitude per gateway.
pub fn sign_permutations_per_gateway(toa: &ToAObservation, e: [f64; 3]) -> [ToAObservation; 8] {
    std::array::from_fn(|k| {
        let mut arrivals = toa.arrivals;
        for (j, t) in arrivals.iter_mut().enumerate() {
            if k & (1 << (2 - j)) == 0 {
                *t += e[j];
            } else {
                *t -= e[j];
            }
        }
        ToAObservation { arrivals }
    })
}
