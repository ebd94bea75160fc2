//! LoRa airtime and duty-cycle arithmetic.
//!
//! Symbol counts follow the Semtech modem formula with CRC always on:
//! `8 + max(ceil((8PL - 4SF + 28 + 16 - 20H) / (4(SF - 2DE))) * (CR + 4), 0)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("spreading factor must be in 7..=12, got {0}")]
    SpreadingFactor(u8),
    #[error("bandwidth must be 125000, 250000 or 500000 Hz, got {0}")]
    Bandwidth(u32),
    #[error("coding rate index must be in 1..=4, got {0}")]
    CodingRate(u8),
    #[error("preamble must have at least one symbol")]
    Preamble,
    #[error("time-on-air must be positive and finite, got {0}")]
    TimeOnAir(f64),
    #[error("counter width must be in 1..=64 bits, got {0}")]
    CounterBits(u32),
    #[error("counter period must be positive and finite, got {0}")]
    CounterPeriod(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Bandwidth {
    Khz125,
    Khz250,
    Khz500,
}

impl Bandwidth {
    pub const ALL: [Bandwidth; 3] = [Bandwidth::Khz125, Bandwidth::Khz250, Bandwidth::Khz500];

    pub const fn hz(self) -> u32 {
        match self {
            Bandwidth::Khz125 => 125_000,
            Bandwidth::Khz250 => 250_000,
            Bandwidth::Khz500 => 500_000,
        }
    }
}

impl TryFrom<u32> for Bandwidth {
    type Error = RadioError;

    fn try_from(hz: u32) -> Result<Self, Self::Error> {
        match hz {
            125_000 => Ok(Bandwidth::Khz125),
            250_000 => Ok(Bandwidth::Khz250),
            500_000 => Ok(Bandwidth::Khz500),
            other => Err(RadioError::Bandwidth(other)),
        }
    }
}

impl From<Bandwidth> for u32 {
    fn from(bw: Bandwidth) -> u32 {
        bw.hz()
    }
}

/// Symbol duration at or above which low data rate optimization is mandated (s).
pub const LOW_DATA_RATE_SYMBOL_THRESHOLD: f64 = 16.0e-3;

/// Modulation and packet parameters that determine airtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RadioParams {
    sf: u8,
    bw: Bandwidth,
    cr: u8,
    payload_len: u8,
    n_preamble: u16,
    header_disabled: bool,
    low_dr_opt: bool,
}

impl RadioParams {
    /// Explicit header, 8 preamble symbols, low data rate optimization
    /// switched on automatically for symbols of 16 ms or longer.
    pub fn new(sf: u8, bw: Bandwidth, cr: u8, payload_len: u8) -> Result<Self, RadioError> {
        if !(7..=12).contains(&sf) {
            return Err(RadioError::SpreadingFactor(sf));
        }
        if !(1..=4).contains(&cr) {
            return Err(RadioError::CodingRate(cr));
        }
        let mut params = Self {
            sf,
            bw,
            cr,
            payload_len,
            n_preamble: 8,
            header_disabled: false,
            low_dr_opt: false,
        };
        params.low_dr_opt = params.symbol_duration() >= LOW_DATA_RATE_SYMBOL_THRESHOLD;
        Ok(params)
    }

    pub fn with_preamble(mut self, n_preamble: u16) -> Result<Self, RadioError> {
        if n_preamble == 0 {
            return Err(RadioError::Preamble);
        }
        self.n_preamble = n_preamble;
        Ok(self)
    }

    pub fn with_header_disabled(mut self, disabled: bool) -> Self {
        self.header_disabled = disabled;
        self
    }

    pub fn with_low_dr_opt(mut self, enabled: bool) -> Self {
        self.low_dr_opt = enabled;
        self
    }

    pub fn sf(&self) -> u8 {
        self.sf
    }
    pub fn bandwidth(&self) -> Bandwidth {
        self.bw
    }
    pub fn cr(&self) -> u8 {
        self.cr
    }
    pub fn payload_len(&self) -> u8 {
        self.payload_len
    }
    pub fn n_preamble(&self) -> u16 {
        self.n_preamble
    }
    pub fn header_disabled(&self) -> bool {
        self.header_disabled
    }
    pub fn low_dr_opt(&self) -> bool {
        self.low_dr_opt
    }

    pub fn symbol_duration(&self) -> f64 {
        symbol_duration(self)
    }

    pub fn time_on_air(&self) -> f64 {
        time_on_air(self)
    }
}

impl std::fmt::Display for RadioParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "sf={};bw_hz={};cr={};pl={};preamble={};h={};de={}",
            self.sf,
            self.bw.hz(),
            self.cr,
            self.payload_len,
            self.n_preamble,
            u8::from(self.header_disabled),
            u8::from(self.low_dr_opt)
        )
    }
}

/// `2^SF / BW` in seconds.
pub fn symbol_duration(params: &RadioParams) -> f64 {
    f64::from(1u32 << params.sf) / f64::from(params.bw.hz())
}

/// `(n_preamble + 4.25) * T_sym` in seconds.
pub fn preamble_duration(params: &RadioParams) -> f64 {
    (f64::from(params.n_preamble) + 4.25) * symbol_duration(params)
}

fn ceil_div(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    if num.rem_euclid(den) == 0 {
        q
    } else {
        q + 1
    }
}

/// Number of payload-plus-header symbols.
pub fn payload_symbol_count(params: &RadioParams) -> u32 {
    let sf = i64::from(params.sf);
    let h = i64::from(params.header_disabled);
    let de = i64::from(params.low_dr_opt);
    let num = 8 * i64::from(params.payload_len) - 4 * sf + 28 + 16 - 20 * h;
    let den = 4 * (sf - 2 * de);
    let blocks = ceil_div(num, den) * (i64::from(params.cr) + 4);
    // bounded by 8 + ceil(2044/12)*8
    (8 + blocks.max(0)) as u32
}

/// Total packet airtime τ in seconds.
pub fn time_on_air(params: &RadioParams) -> f64 {
    preamble_duration(params) + f64::from(payload_symbol_count(params)) * symbol_duration(params)
}

/// `τ / (2ⁿ T)`: fraction of each counter period the sync node spends transmitting.
pub fn duty_cycle(time_on_air: f64, n_bits: u32, period: f64) -> Result<f64, RadioError> {
    if !(time_on_air.is_finite() && time_on_air > 0.0) {
        return Err(RadioError::TimeOnAir(time_on_air));
    }
    if !(1..=64).contains(&n_bits) {
        return Err(RadioError::CounterBits(n_bits));
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(RadioError::CounterPeriod(period));
    }
    // 2^n is exact in f64 for every n up to 1023.
    Ok(time_on_air / (2f64.powi(n_bits as i32) * period))
}

/// A regulatory duty-cycle cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DutyCyclePreset {
    pub name: &'static str,
    pub max_ratio: f64,
}

impl DutyCyclePreset {
    pub const STRICT: DutyCyclePreset = DutyCyclePreset {
        name: "0.1%",
        max_ratio: 0.001,
    };
    pub const STANDARD: DutyCyclePreset = DutyCyclePreset {
        name: "1%",
        max_ratio: 0.01,
    };
    pub const RELAXED: DutyCyclePreset = DutyCyclePreset {
        name: "10%",
        max_ratio: 0.1,
    };
    pub const ALL: [DutyCyclePreset; 3] = [Self::STRICT, Self::STANDARD, Self::RELAXED];

    pub fn allows(&self, duty_cycle: f64) -> bool {
        duty_cycle <= self.max_ratio
    }
}
