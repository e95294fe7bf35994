//! The legacy SDMA downlink: zero-forcing beamformers, downlink rates under
//! backscatter interference, and the interference budgets `τ_k`.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{SdmaChannelSet, TauPolicy};
use crate::linalg::{self, CMatrix, CVector};
use crate::sdma::ReflectionVector;

/// Largest accepted condition number of the downlink channel matrix.
pub const MAX_CONDITION: f64 = 1e8;

/// `N x K` matrix of unit-norm beamforming columns `w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingMatrix {
    w: CMatrix,
}

impl BeamformingMatrix {
    /// Wraps an arbitrary beamformer, normalizing every column.
    pub fn from_columns_normalized(mut w: CMatrix) -> Result<Self> {
        for mut col in w.column_iter_mut() {
            let n = col.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Dimension("beamforming column with zero norm"));
            }
            col /= Complex64::new(n, 0.0);
        }
        Ok(Self { w })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.w
    }

    pub fn column(&self, k: usize) -> CVector {
        self.w.column(k).into_owned()
    }

    pub fn n_streams(&self) -> usize {
        self.w.ncols()
    }

    /// `‖hᵀ W‖² = Σ_j |hᵀ w_j|²`.
    pub fn row_gain(&self, h: &CVector) -> f64 {
        self.w
            .column_iter()
            .map(|w| h.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr())
            .sum()
    }
}

/// Per-user tolerable interference, normalized by `P0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceBudget {
    tau: Vec<f64>,
}

impl InterferenceBudget {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        for (user, &t) in tau.iter().enumerate() {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InfeasibleTarget { user, tau: t });
            }
        }
        Ok(Self { tau })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.tau
    }
}

/// Zero-forcing beamformers `w_k ∝ [G* (Gᵀ G*)^{-1}]_k`, unit-norm.
pub fn build_beamformers(channels: &SdmaChannelSet) -> Result<BeamformingMatrix> {
    let g = channels.g_matrix();
    let (n, k) = g.shape();
    if k > n {
        return Err(Error::DegenerateChannel {
            condition: f64::INFINITY,
        });
    }
    let g_conj = g.map(|z| z.conj());
    let gram = g.transpose() * &g_conj;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    let condition = if lo > 0.0 {
        libm::sqrt(hi / lo)
    } else {
        f64::INFINITY
    };
    if !(condition < MAX_CONDITION) {
        return Err(Error::DegenerateChannel { condition });
    }
    let inv = gram
        .try_inverse()
        .ok_or(Error::DegenerateChannel { condition })?;
    BeamformingMatrix::from_columns_normalized(g_conj * inv)
}

/// `P0 Σ_m η_m |g_{m,k}|² ‖h_mᵀ W‖²`, the backscatter interference power at user `k`.
pub fn backcom_interference_power(
    channels: &SdmaChannelSet,
    w: &BeamformingMatrix,
    eta: &ReflectionVector,
    k: usize,
    p0: f64,
) -> f64 {
    p0 * interference_row(channels, w, k)
        .iter()
        .zip(eta.as_slice())
        .map(|(a, e)| a * e)
        .sum::<f64>()
}

/// Coefficients `a_{k,m} = |g_{m,k}|² ‖h_mᵀ W‖²` of user `k`'s budget constraint.
pub fn interference_row(channels: &SdmaChannelSet, w: &BeamformingMatrix, k: usize) -> Vec<f64> {
    channels
        .h
        .iter()
        .enumerate()
        .map(|(m, h)| channels.g_cross[(k, m)].norm_sqr() * w.row_gain(h))
        .collect()
}

/// All `K` constraint rows.
pub fn interference_rows(channels: &SdmaChannelSet, w: &BeamformingMatrix) -> Vec<Vec<f64>> {
    (0..channels.n_downlink())
        .map(|k| interference_row(channels, w, k))
        .collect()
}

/// `(|g_kᵀ w_k|², Σ_{i≠k} |g_kᵀ w_i|²)`.
fn signal_and_leakage(channels: &SdmaChannelSet, w: &BeamformingMatrix, k: usize) -> (f64, f64) {
    let gk = &channels.g[k];
    let mut signal = 0.0;
    let mut leak = 0.0;
    for i in 0..w.n_streams() {
        let v = linalg::dot_t(gk, &w.column(i)).norm_sqr();
        if i == k {
            signal = v;
        } else {
            leak += v;
        }
    }
    (signal, leak)
}

/// Downlink rate of user `k` in bits per channel use.
pub fn downlink_rate_sdma(
    channels: &SdmaChannelSet,
    w: &BeamformingMatrix,
    eta: &ReflectionVector,
    k: usize,
    p0: f64,
    sigma2: f64,
) -> f64 {
    let (signal, leak) = signal_and_leakage(channels, w, k);
    let interference = backcom_interference_power(channels, w, eta, k, p0);
    libm::log2(1.0 + p0 * signal / (p0 * leak + interference + sigma2))
}

/// `τ_k` under the given policy.
///
/// For target rates, `τ_k = (|g_kᵀw_k|² − ε_k Σ_{i≠k}|g_kᵀw_i|²)/ε_k − σ²/P0`
/// with `ε_k = 2^{R_k} − 1`; a negative value means the target is out of
/// reach even without backscatter.
pub fn interference_budgets(
    channels: &SdmaChannelSet,
    w: &BeamformingMatrix,
    policy: &TauPolicy,
    p0: f64,
    sigma2: f64,
) -> Result<InterferenceBudget> {
    let k = channels.n_downlink();
    match policy {
        TauPolicy::FixedTau(t) => InterferenceBudget::new(alloc::vec![*t; k]),
        TauPolicy::TargetRate(rates) => {
            if rates.len() != k {
                return Err(Error::Dimension("one target rate per downlink user"));
            }
            let tau = rates
                .iter()
                .enumerate()
                .map(|(user, &r)| {
                    let (signal, leak) = signal_and_leakage(channels, w, user);
                    budget_from_target(signal, leak, r, p0, sigma2)
                })
                .collect();
            InterferenceBudget::new(tau)
        }
    }
}

/// Budget for one user from its target rate.
///
/// Values within rounding of zero (relative to `σ²/P0`) snap to zero.
pub fn budget_from_target(signal: f64, leak: f64, rate: f64, p0: f64, sigma2: f64) -> f64 {
    let eps = libm::exp2(rate) - 1.0;
    if eps <= 0.0 {
        return f64::INFINITY;
    }
    let floor = sigma2 / p0;
    let tau = (signal - eps * leak) / eps - floor;
    if tau < 0.0 && tau >= -1e-9 * floor {
        0.0
    } else {
        tau
    }
}
