//! Uplink receivers for backscatter devices riding an SDMA downlink.
//!
//! After pre-whitening the base station sees
//! `ỹ = Σ_m sqrt(η_m) (h_mᵀ s_0) h̃_m s_m + ñ`.
//!
//! * Approach I treats `D = diag(sqrt(η_m) h_mᵀ s_0)` as a power allocation
//!   on the MAC `H̃` and decodes with MMSE-SIC, reaching the sum capacity.
//! * Approach II applies `Qᴴ` from `H̃ = QR` and decodes bottom-up through the
//!   triangular `R`; its rate averaged over the excitation has a closed form
//!   in [`specfun::f`].

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{SdmaChannelSet, WhitenedChannels};
use crate::legacy::BeamformingMatrix;
use crate::linalg::{self, CVector};
use crate::mac::MacChannel;
use crate::solver::Objective;
use crate::specfun::{self, PosReal};
use crate::LOG2_E;

/// Relative size of `|R_mm|` below which `H̃` counts as rank deficient.
pub const QR_RANK_TOLERANCE: f64 = 1e-10;

/// Reflection coefficients `η ∈ [0, 1]^M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionVector(Vec<f64>);

impl ReflectionVector {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        for &e in &eta {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Domain {
                    function: "ReflectionVector",
                    value: e,
                });
            }
        }
        Ok(Self(eta))
    }

    /// Clamps every entry into `[0, 1]`; NaN becomes 0.
    pub fn clamped(eta: Vec<f64>) -> Self {
        Self(
            eta.into_iter()
                .map(|e| if e.is_nan() { 0.0 } else { e.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn zeros(m: usize) -> Self {
        Self(alloc::vec![0.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// One draw of the legacy symbols and the resulting excitation of each device.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationRealization {
    /// Legacy symbols `x_k`.
    pub x: Vec<Complex64>,
    /// `h_mᵀ s_0` with `s_0 = sqrt(P0) Σ_k w_k x_k`.
    pub s0_gain: Vec<Complex64>,
}

impl ExcitationRealization {
    pub fn from_symbols(
        x: Vec<Complex64>,
        w: &BeamformingMatrix,
        channels: &SdmaChannelSet,
        p0: f64,
    ) -> Result<Self> {
        if x.len() != w.n_streams() {
            return Err(Error::Dimension("one legacy symbol per beam"));
        }
        let xv = CVector::from_column_slice(&x);
        let s0 = w.matrix() * xv * Complex64::new(libm::sqrt(p0), 0.0);
        let s0_gain = channels.h.iter().map(|h| linalg::dot_t(h, &s0)).collect();
        Ok(Self { x, s0_gain })
    }

    /// Draws `x ~ CN(0, I_K)`.
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        w: &BeamformingMatrix,
        channels: &SdmaChannelSet,
        p0: f64,
    ) -> Self {
        let x = (0..w.n_streams())
            .map(|_| linalg::complex_normal(rng, 1.0))
            .collect();
        Self::from_symbols(x, w, channels, p0).expect("symbol count matches beams")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ApproachI,
    ApproachII,
    Ofdma,
}

/// Per-device and total rates of one scheme on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub per_device: Vec<f64>,
    pub sum: f64,
    pub scheme: Scheme,
    pub feasible: bool,
}

impl RateReport {
    pub fn new(per_device: Vec<f64>, scheme: Scheme) -> Self {
        let sum = per_device.iter().sum();
        Self {
            per_device,
            sum,
            scheme,
            feasible: true,
        }
    }
}

/// The MAC seen after whitening: column `m` is `(h_mᵀ s_0) h̃_m`.
pub fn sdma_mac(wh: &WhitenedChannels, exc: &ExcitationRealization) -> Result<MacChannel> {
    if wh.n_devices() != exc.s0_gain.len() {
        return Err(Error::Dimension("excitation and channel device counts differ"));
    }
    MacChannel::new(
        wh.h_tilde
            .iter()
            .zip(&exc.s0_gain)
            .map(|(h, &a)| h * a)
            .collect(),
    )
}

/// `log2 det(I_N + Σ_m η_m |h_mᵀ s_0|² h̃_m h̃_mᴴ)`.
pub fn sum_capacity_sdma(
    wh: &WhitenedChannels,
    exc: &ExcitationRealization,
    eta: &ReflectionVector,
) -> Result<f64> {
    sdma_mac(wh, exc)?.sum_capacity(eta.as_slice())
}

/// Approach I stage rates for decoding order `order` (`order[0]` first).
pub fn sic_rates_approach1(
    wh: &WhitenedChannels,
    exc: &ExcitationRealization,
    eta: &ReflectionVector,
    order: &[usize],
) -> Result<RateReport> {
    let rates = sdma_mac(wh, exc)?.stage_rates(eta.as_slice(), order)?;
    Ok(RateReport::new(rates, Scheme::ApproachI))
}

pub fn grad_sum_capacity(
    wh: &WhitenedChannels,
    exc: &ExcitationRealization,
    eta: &ReflectionVector,
) -> Result<Vec<f64>> {
    sdma_mac(wh, exc)?.gradient(eta.as_slice())
}

/// `|R_mm|²` from the Householder QR of `H̃` (no column pivoting).
pub fn qr_diagonal(wh: &WhitenedChannels) -> Result<Vec<f64>> {
    let h = wh.matrix();
    let (n, m) = h.shape();
    if m > n {
        return Err(Error::Overload {
            devices: m,
            antennas: n,
        });
    }
    let scale = h.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let r = h.qr().r();
    (0..m)
        .map(|i| {
            let d = r[(i, i)].norm();
            if d <= QR_RANK_TOLERANCE * scale {
                Err(Error::RankDeficient { column: i })
            } else {
                Ok(d * d)
            }
        })
        .collect()
}

/// Approach II instantaneous rates `log2(1 + |R_mm|² η_m |h_mᵀ s_0|²)`.
pub fn qr_rates_approach2(
    wh: &WhitenedChannels,
    exc: &ExcitationRealization,
    eta: &ReflectionVector,
) -> Result<RateReport> {
    if eta.len() != wh.n_devices() || exc.s0_gain.len() != wh.n_devices() {
        return Err(Error::Dimension("device counts differ"));
    }
    let diag = qr_diagonal(wh)?;
    let rates = diag
        .iter()
        .zip(eta.as_slice())
        .zip(&exc.s0_gain)
        .map(|((r2, e), a)| libm::log2(1.0 + r2 * e * a.norm_sqr()))
        .collect();
    Ok(RateReport::new(rates, Scheme::ApproachII))
}

/// Per-device mean SNR scale `c_m = P0 |R_mm|² ‖h_mᵀ W‖²` of Approach II.
///
/// The average sum rate is `Σ_m log2(e) f(c_m η_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrGains {
    pub c: Vec<f64>,
}

impl QrGains {
    pub fn new(
        wh: &WhitenedChannels,
        channels: &SdmaChannelSet,
        w: &BeamformingMatrix,
        p0: f64,
    ) -> Result<Self> {
        let diag = qr_diagonal(wh)?;
        let c = diag
            .iter()
            .zip(&channels.h)
            .map(|(r2, h)| p0 * r2 * w.row_gain(h))
            .collect();
        Ok(Self { c })
    }

    fn check(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.c.len() {
            return Err(Error::Dimension("reflection vector length differs from device count"));
        }
        Ok(())
    }

    pub fn value(&self, eta: &[f64]) -> Result<f64> {
        self.check(eta)?;
        let mut acc = 0.0;
        for (c, e) in self.c.iter().zip(eta) {
            acc += specfun::f(PosReal::new(c * e)?);
        }
        Ok(LOG2_E * acc)
    }

    pub fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check(eta)?;
        self.c
            .iter()
            .zip(eta)
            .map(|(&c, &e)| {
                let x = c * e;
                let d = if x > 0.0 {
                    specfun::f_prime(PosReal::new(x)?)?
                } else {
                    1.0
                };
                Ok(LOG2_E * d * c)
            })
            .collect()
    }

    /// Diagonal, `log2(e) c_m² f''(c_m η_m)`, row-major.
    pub fn hessian(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check(eta)?;
        let m = self.c.len();
        let mut h = alloc::vec![0.0; m * m];
        for (i, (&c, &e)) in self.c.iter().zip(eta).enumerate() {
            let x = c * e;
            // f is linear below the small-argument switch
            let d = if x > 0.0 { specfun::f_second(PosReal::new(x)?)? } else { 0.0 };
            h[i * m + i] = LOG2_E * c * c * d;
        }
        Ok(h)
    }
}

/// Closed-form excitation-averaged Approach II sum rate.
pub fn avg_qr_sum_rate(gains: &QrGains, eta: &ReflectionVector) -> Result<f64> {
    gains.value(eta.as_slice())
}

pub fn grad_avg_qr_sum_rate(gains: &QrGains, eta: &ReflectionVector) -> Result<Vec<f64>> {
    gains.gradient(eta.as_slice())
}

impl Objective for MacChannel {
    fn value(&self, eta: &[f64]) -> Result<f64> {
        self.sum_capacity(eta)
    }

    fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        MacChannel::gradient(self, eta)
    }

    fn hessian(&self, eta: &[f64]) -> Result<Option<Vec<f64>>> {
        MacChannel::hessian(self, eta).map(Some)
    }
}

impl Objective for QrGains {
    fn value(&self, eta: &[f64]) -> Result<f64> {
        QrGains::value(self, eta)
    }

    fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        QrGains::gradient(self, eta)
    }

    fn hessian(&self, eta: &[f64]) -> Result<Option<Vec<f64>>> {
        QrGains::hessian(self, eta).map(Some)
    }
}
