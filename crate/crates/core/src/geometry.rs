//! Scenario configuration, node placement, channel draws and pre-whitening.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

/// Link distances are clamped to at least this many meters.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// How downlink interference budgets are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum TauPolicy {
    /// Same budget `tau` for every downlink user.
    FixedTau(f64),
    /// Budget derived from per-user target rates (bits/channel use).
    TargetRate(Vec<f64>),
}

/// Placement of the downlink users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryCase {
    /// Users share the devices' square, centered on the base station.
    CaseI,
    /// Users' square is shifted by half a side along +x.
    CaseII,
}

/// Self-interference covariance `C_SI` at the full-duplex base station.
#[derive(Debug, Clone, PartialEq)]
pub enum SiCovariance {
    /// `C_SI = I_N` (trace `N`).
    Identity,
    /// Caller-supplied Hermitian PSD `N x N` matrix.
    Custom(CMatrix),
}

/// Reading of `|h_mᵀ W|²` for the `1 x K` row `h_mᵀ W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterferenceNorm {
    /// Squared Euclidean norm `Σ_j |h_mᵀ w_j|²`.
    #[default]
    VectorNorm,
}

/// All scalars of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_downlink: usize,
    pub n_devices: usize,
    pub p0_dbm: f64,
    pub alpha: f64,
    pub noise_dbm: f64,
    pub path_loss_exp: f64,
    pub tau_policy: TauPolicy,
    pub geometry_case: GeometryCase,
    pub side_m: f64,
    pub rng_seed: u64,
    pub si_covariance: SiCovariance,
    pub interference_norm: InterferenceNorm,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            n_downlink: 4,
            n_devices: 4,
            p0_dbm: 20.0,
            alpha: 1e-3,
            noise_dbm: -94.0,
            path_loss_exp: 3.0,
            tau_policy: TauPolicy::FixedTau(0.01),
            geometry_case: GeometryCase::CaseI,
            side_m: 6.0,
            rng_seed: 0,
            si_covariance: SiCovariance::Identity,
            interference_norm: InterferenceNorm::VectorNorm,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 {
            return Err(Error::Config("n_antennas must be at least 1"));
        }
        if self.n_downlink == 0 {
            return Err(Error::Config("n_downlink must be at least 1"));
        }
        if self.n_devices == 0 {
            return Err(Error::Config("n_devices must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 1]"));
        }
        if !(self.side_m > 0.0 && self.side_m.is_finite()) {
            return Err(Error::Config("side_m must be positive"));
        }
        if !(self.p0_dbm.is_finite() && self.noise_dbm.is_finite()) {
            return Err(Error::Config("powers must be finite"));
        }
        if !(self.path_loss_exp.is_finite() && self.path_loss_exp >= 0.0) {
            return Err(Error::Config("path_loss_exp must be nonnegative"));
        }
        match &self.tau_policy {
            TauPolicy::FixedTau(t) if !(*t >= 0.0 && t.is_finite()) => {
                return Err(Error::Config("fixed tau must be nonnegative"));
            }
            TauPolicy::TargetRate(r) => {
                if r.len() != self.n_downlink {
                    return Err(Error::Config("one target rate per downlink user is required"));
                }
                if r.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::Config("target rates must be nonnegative"));
                }
            }
            _ => {}
        }
        if let SiCovariance::Custom(c) = &self.si_covariance {
            if c.nrows() != self.n_antennas || c.ncols() != self.n_antennas {
                return Err(Error::Config("si_covariance must be n_antennas x n_antennas"));
            }
        }
        Ok(())
    }

    pub fn p0_watts(&self) -> f64 {
        crate::dbm_to_watts(self.p0_dbm)
    }

    pub fn noise_watts(&self) -> f64 {
        crate::dbm_to_watts(self.noise_dbm)
    }

    /// Path-loss factor `max(d, d_min)^{-exponent}`.
    pub fn path_gain(&self, d: f64) -> f64 {
        libm::pow(d.max(MIN_DISTANCE_M), -self.path_loss_exp)
    }

    pub fn si_matrix(&self) -> CMatrix {
        match &self.si_covariance {
            SiCovariance::Identity => CMatrix::identity(self.n_antennas, self.n_antennas),
            SiCovariance::Custom(c) => c.clone(),
        }
    }
}

/// Planar node coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Positions {
    pub base_station: [f64; 2],
    pub users: Vec<[f64; 2]>,
    pub devices: Vec<[f64; 2]>,
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

fn uniform_in_square<R: Rng + ?Sized>(rng: &mut R, center: [f64; 2], side: f64) -> [f64; 2] {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    [center[0] + side * (u - 0.5), center[1] + side * (v - 0.5)]
}

/// Drops downlink users, then devices, uniformly in their squares.
///
/// Devices are drawn after users so the first `m` device positions do not
/// depend on the total device count.
pub fn sample_geometry<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Positions {
    let user_center = match cfg.geometry_case {
        GeometryCase::CaseI => [0.0, 0.0],
        GeometryCase::CaseII => [cfg.side_m / 2.0, 0.0],
    };
    let users = (0..cfg.n_downlink)
        .map(|_| uniform_in_square(rng, user_center, cfg.side_m))
        .collect();
    let devices = (0..cfg.n_devices)
        .map(|_| uniform_in_square(rng, [0.0, 0.0], cfg.side_m))
        .collect();
    Positions {
        base_station: [0.0, 0.0],
        users,
        devices,
    }
}

/// One realization of every SDMA link.
#[derive(Debug, Clone, PartialEq)]
pub struct SdmaChannelSet {
    /// Base station to downlink user `k`, length `N`.
    pub g: Vec<CVector>,
    /// Base station to device `m`, length `N` (used in both directions).
    pub h: Vec<CVector>,
    /// `K x M`: device `m` to downlink user `k`.
    pub g_cross: CMatrix,
    /// Self-interference covariance, `N x N`.
    pub c_si: CMatrix,
    pub positions: Positions,
}

impl SdmaChannelSet {
    pub fn n_antennas(&self) -> usize {
        self.c_si.nrows()
    }

    pub fn n_downlink(&self) -> usize {
        self.g.len()
    }

    pub fn n_devices(&self) -> usize {
        self.h.len()
    }

    /// `G = [g_1 … g_K]`, `N x K`.
    pub fn g_matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.g)
    }
}

/// Rayleigh fading scaled by `max(d, 1)^{-3}` path loss on every link.
///
/// Draw order: all downlink vectors, then per device its base-station
/// vector followed by its `K` cross gains.
pub fn sample_sdma_channels<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    positions: &Positions,
    rng: &mut R,
) -> SdmaChannelSet {
    let n = cfg.n_antennas;
    let bs = positions.base_station;
    let g = positions
        .users
        .iter()
        .map(|&u| linalg::complex_normal_vector(rng, n, cfg.path_gain(distance(bs, u))))
        .collect();
    let k = positions.users.len();
    let m = positions.devices.len();
    let mut h = Vec::with_capacity(m);
    let mut g_cross = CMatrix::zeros(k, m);
    for (j, &dev) in positions.devices.iter().enumerate() {
        h.push(linalg::complex_normal_vector(rng, n, cfg.path_gain(distance(bs, dev))));
        for (i, &user) in positions.users.iter().enumerate() {
            g_cross[(i, j)] = linalg::complex_normal(rng, cfg.path_gain(distance(dev, user)));
        }
    }
    SdmaChannelSet {
        g,
        h,
        g_cross,
        c_si: cfg.si_matrix(),
        positions: positions.clone(),
    }
}

/// Device channels after the `(σ² I + α P0 C_SI)^{-1/2}` detector.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedChannels {
    pub h_tilde: Vec<CVector>,
    pub whitener: CMatrix,
}

impl WhitenedChannels {
    /// `H̃ = [h̃_1 … h̃_M]`, `N x M`.
    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.h_tilde)
    }

    pub fn n_devices(&self) -> usize {
        self.h_tilde.len()
    }
}

/// Noise-plus-self-interference covariance `σ² I + α P0 C_SI`.
pub fn interference_covariance(cfg: &SystemConfig, c_si: &CMatrix) -> CMatrix {
    let n = c_si.nrows();
    CMatrix::identity(n, n) * Complex64::new(cfg.noise_watts(), 0.0)
        + c_si * Complex64::new(cfg.alpha * cfg.p0_watts(), 0.0)
}

pub fn prewhiten(cfg: &SystemConfig, channels: &SdmaChannelSet) -> Result<WhitenedChannels> {
    let sigma2 = cfg.noise_watts();
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain {
            function: "prewhiten",
            value: sigma2,
        });
    }
    let min = linalg::min_eigenvalue(&channels.c_si);
    if min < -linalg::PSD_TOLERANCE {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let whitener = linalg::hermitian_inv_sqrt(&interference_covariance(cfg, &channels.c_si))?;
    let h_tilde = channels.h.iter().map(|h| &whitener * h).collect();
    Ok(WhitenedChannels { h_tilde, whitener })
}
