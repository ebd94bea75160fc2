//! Time-difference-of-arrival localization for a three-gateway LoRa network
//! synchronized by a beacon node instead of GNSS.
//!
//! The crate covers gateway geometry, LoRa airtime and duty cycle, the
//! gateway counter, the arrival-time error model, two position solvers and
//! the Monte Carlo studies built on them. The `lorafix` binary wraps these
//! behind a small CLI (see [`cli`]).

pub mod cli;
pub mod counter;
pub mod error_model;
pub mod experiments;
pub mod geometry;
pub mod lora_phy;
pub mod solver;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
