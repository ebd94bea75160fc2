//! The n-bit synchronous counter each gateway uses to timestamp arrivals.
//!
//! Counters are reset by every sync packet and latch `floor(t / T)` when a
//! target packet arrives, so the reading always lags the true arrival by a
//! value in `[0, T)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CounterError {
    #[error("counter width must be in 1..=64 bits, got {0}")]
    InvalidBits(u32),
    #[error("clock period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("arrival time must be finite and non-negative, got {0}")]
    NegativeTime(f64),
    #[error("counter overflowed: {time} s is past the {overflow_time} s wrap")]
    Overflow { time: f64, overflow_time: f64 },
    #[error("count {count} does not fit in {bits} bits")]
    CountOutOfRange { count: u64, bits: u32 },
}

/// Counter width `n` and clock period `T` (frequency `1/T`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterConfig {
    bits: u32,
    period: f64,
}

impl CounterConfig {
    pub fn new(bits: u32, period: f64) -> Result<Self, CounterError> {
        if !(1..=64).contains(&bits) {
            return Err(CounterError::InvalidBits(bits));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(CounterError::InvalidPeriod(period));
        }
        Ok(Self { bits, period })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn frequency(&self) -> f64 {
        1.0 / self.period
    }

    /// Number of distinct counts, `2ⁿ`, as a float (exact for n ≤ 64).
    pub fn capacity(&self) -> f64 {
        2f64.powi(self.bits as i32)
    }

    pub fn overflow_time(&self) -> f64 {
        overflow_time(self)
    }
}

/// Gateway processor clock period `T_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessorClock {
    period: f64,
}

impl ProcessorClock {
    pub fn new(period: f64) -> Result<Self, CounterError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(CounterError::InvalidPeriod(period));
        }
        Ok(Self { period })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn frequency(&self) -> f64 {
        1.0 / self.period
    }
}

impl Default for ProcessorClock {
    /// 400 MHz.
    fn default() -> Self {
        Self { period: 2.5e-9 }
    }
}

/// Count latched for an arrival `t_true` seconds after the last reset.
pub fn quantize(t_true: f64, cfg: &CounterConfig) -> Result<u64, CounterError> {
    if !(t_true.is_finite() && t_true >= 0.0) {
        return Err(CounterError::NegativeTime(t_true));
    }
    let overflow = || CounterError::Overflow {
        time: t_true,
        overflow_time: cfg.overflow_time(),
    };
    let q = (t_true / cfg.period).floor();
    if q >= cfg.capacity() {
        return Err(overflow());
    }
    let mut count = q as u64;
    // The division can land one grid step off when t is on (or next to) a
    // multiple of T; nudge so that count*T <= t < (count+1)*T holds in f64.
    // Above 2^52 consecutive counts are no longer distinct floats.
    if q < 2f64.powi(52) {
        while count > 0 && count as f64 * cfg.period > t_true {
            count -= 1;
        }
        while (count as f64 + 1.0) * cfg.period <= t_true {
            count += 1;
        }
    }
    if count as f64 >= cfg.capacity() {
        return Err(overflow());
    }
    Ok(count)
}

/// Time represented by a count: `N * T`.
pub fn counter_to_time(count: u64, cfg: &CounterConfig) -> Result<f64, CounterError> {
    if cfg.bits < 64 && count >> cfg.bits != 0 {
        return Err(CounterError::CountOutOfRange {
            count,
            bits: cfg.bits,
        });
    }
    Ok(count as f64 * cfg.period)
}

/// Wrap-around time `2ⁿ T`.
pub fn overflow_time(cfg: &CounterConfig) -> f64 {
    cfg.capacity() * cfg.period
}

/// Error accumulated by a free-running clock with the given drift (ppm) over `elapsed` seconds.
pub fn rtc_drift_error(ppm: f64, elapsed: f64) -> f64 {
    ppm * elapsed / 1e6
}
