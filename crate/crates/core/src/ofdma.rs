//! Backscatter devices sharing an OFDMA legacy downlink.
//!
//! User `k` owns subcarrier `k`. Every device reflects every subcarrier, so
//! the base station stacks its `K` per-subcarrier observations into one
//! `K`-dimensional MAC with columns `h̄_m = sqrt(P0) D_x h̆ᴴ_{·,m}`.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{distance, Positions, SystemConfig};
use crate::linalg::{self, CMatrix, CVector};
use crate::mac::MacChannel;
use crate::sdma::{RateReport, ReflectionVector, Scheme};

/// Per-subcarrier gains of one realization. Matrices are `M x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmaChannelSet {
    /// `G_k`: base station to user `k` on subcarrier `k`.
    pub g_dl: Vec<Complex64>,
    /// `H_{m,k}`: base station to device `m`.
    pub h_fwd: CMatrix,
    /// `G_{m,k}`: device `m` to user `k`.
    pub g_cross: CMatrix,
    /// `F_{m,k}`: device `m` back to the base station.
    pub f_bwd: CMatrix,
    /// `h_SI^k`: self-interference channel, independent across subcarriers.
    pub h_si: Vec<Complex64>,
    pub positions: Positions,
}

impl OfdmaChannelSet {
    pub fn n_subcarriers(&self) -> usize {
        self.g_dl.len()
    }

    pub fn n_devices(&self) -> usize {
        self.h_fwd.nrows()
    }
}

/// Independent Rayleigh draws per subcarrier with `max(d, 1)^{-3}` path loss;
/// self-interference channels are `CN(0, 1)`.
///
/// Draw order: downlink gains, self-interference gains, then per device its
/// `(H, G, F)` triple for each subcarrier.
pub fn sample_ofdma_channels<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    positions: &Positions,
    rng: &mut R,
) -> OfdmaChannelSet {
    let bs = positions.base_station;
    let k = positions.users.len();
    let m = positions.devices.len();
    let g_dl = positions
        .users
        .iter()
        .map(|&u| linalg::complex_normal(rng, cfg.path_gain(distance(bs, u))))
        .collect();
    let h_si = (0..k).map(|_| linalg::complex_normal(rng, 1.0)).collect();
    let mut h_fwd = CMatrix::zeros(m, k);
    let mut g_cross = CMatrix::zeros(m, k);
    let mut f_bwd = CMatrix::zeros(m, k);
    for (j, &dev) in positions.devices.iter().enumerate() {
        let up = cfg.path_gain(distance(bs, dev));
        for (i, &user) in positions.users.iter().enumerate() {
            h_fwd[(j, i)] = linalg::complex_normal(rng, up);
            g_cross[(j, i)] = linalg::complex_normal(rng, cfg.path_gain(distance(dev, user)));
            f_bwd[(j, i)] = linalg::complex_normal(rng, up);
        }
    }
    OfdmaChannelSet {
        g_dl,
        h_fwd,
        g_cross,
        f_bwd,
        h_si,
        positions: positions.clone(),
    }
}

/// Coefficients `|G_{m,k}|² |H_{m,k}|²` of user `k`'s budget constraint.
pub fn ofdma_constraint_row(ch: &OfdmaChannelSet, k: usize) -> Vec<f64> {
    (0..ch.n_devices())
        .map(|m| ch.g_cross[(m, k)].norm_sqr() * ch.h_fwd[(m, k)].norm_sqr())
        .collect()
}

pub fn ofdma_constraint_rows(ch: &OfdmaChannelSet) -> Vec<Vec<f64>> {
    (0..ch.n_subcarriers())
        .map(|k| ofdma_constraint_row(ch, k))
        .collect()
}

/// `P0 Σ_m η_m |G_{m,k}|² |H_{m,k}|²`.
pub fn ofdma_interference_power(ch: &OfdmaChannelSet, eta: &ReflectionVector, p0: f64, k: usize) -> f64 {
    p0 * ofdma_constraint_row(ch, k)
        .iter()
        .zip(eta.as_slice())
        .map(|(a, e)| a * e)
        .sum::<f64>()
}

pub fn downlink_rate_ofdma(
    ch: &OfdmaChannelSet,
    eta: &ReflectionVector,
    p0: f64,
    sigma2: f64,
    k: usize,
) -> f64 {
    let interference = ofdma_interference_power(ch, eta, p0, k);
    libm::log2(1.0 + p0 * ch.g_dl[k].norm_sqr() / (interference + sigma2))
}

/// Whitened, stacked base-station model for one legacy symbol vector `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMacModel {
    /// `H̄ = sqrt(P0) D_x H̆ᴴ`, `K x M`.
    pub h_bar: CMatrix,
    /// `H̆ = [h̆_1 … h̆_K]`, `M x K`, with
    /// `h̆_k = (α P0 |h_SI^k|² + σ²)^{-1/2} [F_{1,k} H_{1,k} … F_{M,k} H_{M,k}]ᴴ`.
    pub h_breve: CMatrix,
}

impl StackedMacModel {
    pub fn mac(&self) -> Result<MacChannel> {
        MacChannel::new(linalg::columns(&self.h_bar))
    }
}

pub fn build_stacked_mac(
    ch: &OfdmaChannelSet,
    x: &[Complex64],
    p0: f64,
    alpha: f64,
    sigma2: f64,
) -> Result<StackedMacModel> {
    let k = ch.n_subcarriers();
    let m = ch.n_devices();
    if x.len() != k {
        return Err(Error::Dimension("one legacy symbol per subcarrier"));
    }
    if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Domain {
            function: "build_stacked_mac",
            value: f64::NAN,
        });
    }
    let mut h_breve = CMatrix::zeros(m, k);
    for j in 0..k {
        let scale = 1.0 / libm::sqrt(alpha * p0 * ch.h_si[j].norm_sqr() + sigma2);
        for i in 0..m {
            h_breve[(i, j)] = (ch.f_bwd[(i, j)] * ch.h_fwd[(i, j)]).conj() * scale;
        }
    }
    let sqrt_p0 = libm::sqrt(p0);
    let mut h_bar = h_breve.adjoint();
    for (j, mut row) in h_bar.row_iter_mut().enumerate() {
        row *= x[j] * sqrt_p0;
    }
    Ok(StackedMacModel { h_bar, h_breve })
}

/// `log2 det(I_K + Σ_m η_m h̄_m h̄_mᴴ)`.
pub fn sum_capacity_ofdma(model: &StackedMacModel, eta: &ReflectionVector) -> Result<f64> {
    model.mac()?.sum_capacity(eta.as_slice())
}

pub fn sic_rates_ofdma(
    model: &StackedMacModel,
    eta: &ReflectionVector,
    order: &[usize],
) -> Result<RateReport> {
    let rates = model.mac()?.stage_rates(eta.as_slice(), order)?;
    Ok(RateReport::new(rates, Scheme::Ofdma))
}

/// Draws `x ~ CN(0, I_K)` for the stacked model.
pub fn draw_symbols<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<Complex64> {
    (0..k).map(|_| linalg::complex_normal(rng, 1.0)).collect()
}

/// Column `m` of `H̄` as an owned vector.
pub fn h_bar_column(model: &StackedMacModel, m: usize) -> CVector {
    model.h_bar.column(m).into_owned()
}
