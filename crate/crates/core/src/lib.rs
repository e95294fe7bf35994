//! Link-level kernels for backscatter-assisted NOMA (BAC-NOMA).
//!
//! A legacy SDMA or OFDMA downlink excites `M` backscatter devices, which
//! reflect the legacy signal towards a full-duplex base station. This crate
//! holds everything that is pure computation:
//!
//! * [`specfun`]: the exponential integral and the average-rate kernel
//!   `f(x) = -e^{1/x} Ei(-1/x)` with its derivatives.
//! * [`geometry`]: node placement, Rayleigh/path-loss channel draws and the
//!   self-interference pre-whitening transform.
//! * [`legacy`]: zero-forcing downlink beamformers, downlink rates and the
//!   per-user interference budgets.
//! * [`mac`]: log-det sum capacity and MMSE-SIC stage rates of a vector MAC.
//! * [`sdma`]: the two receiver designs for the SDMA legacy system.
//! * [`ofdma`]: the stacked per-subcarrier model for the OFDMA legacy system.
//! * [`solver`]: projected Newton / gradient maximization over `0 <= eta <= 1, A eta <= tau`.
//! * [`oma`]: the time-sharing baseline.
//!
//! The crate is `no_std` (with `alloc`); IO, configuration and the experiment
//! driver live in `bacnoma-sim`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod legacy;
pub mod linalg;
pub mod mac;
pub mod ofdma;
pub mod oma;
pub mod sdma;
pub mod solver;
pub mod specfun;

pub use error::Error;
pub use num_complex::Complex64;

/// `log2(e)`, the nats-to-bits factor.
pub const LOG2_E: f64 = core::f64::consts::LOG2_E;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    libm::pow(10.0, (dbm - 30.0) / 10.0)
}
