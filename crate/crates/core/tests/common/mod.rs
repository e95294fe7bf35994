#![allow(dead_code)]

pub mod quad;

use bacnoma_core::geometry::{
    prewhiten, sample_geometry, sample_sdma_channels, SdmaChannelSet, SystemConfig, WhitenedChannels,
};
use bacnoma_core::legacy::{build_beamformers, interference_budgets, interference_rows, BeamformingMatrix};
use bacnoma_core::linalg::CMatrix;
use bacnoma_core::ofdma::{ofdma_constraint_rows, sample_ofdma_channels, OfdmaChannelSet};
use bacnoma_core::solver::FeasibleRegion;
use bacnoma_core::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct SdmaInstance {
    pub cfg: SystemConfig,
    pub ch: SdmaChannelSet,
    pub w: BeamformingMatrix,
    pub wh: WhitenedChannels,
    pub region: FeasibleRegion,
}

/// Random SDMA scenario; redraws until the beamformer exists.
pub fn sdma_instance(seed: u64, n: usize, k: usize, m: usize) -> SdmaInstance {
    let cfg = SystemConfig {
        n_antennas: n,
        n_downlink: k,
        n_devices: m,
        ..SystemConfig::default()
    };
    let mut r = rng(seed);
    loop {
        let pos = sample_geometry(&cfg, &mut r);
        let ch = sample_sdma_channels(&cfg, &pos, &mut r);
        let Ok(w) = build_beamformers(&ch) else { continue };
        let wh = prewhiten(&cfg, &ch).unwrap();
        let tau = interference_budgets(&ch, &w, &cfg.tau_policy, cfg.p0_watts(), cfg.noise_watts()).unwrap();
        let region = FeasibleRegion::new(m, interference_rows(&ch, &w), tau.as_slice().to_vec()).unwrap();
        return SdmaInstance { cfg, ch, w, wh, region };
    }
}

pub struct OfdmaInstance {
    pub cfg: SystemConfig,
    pub ch: OfdmaChannelSet,
    pub region: FeasibleRegion,
}

pub fn ofdma_instance(seed: u64, k: usize, m: usize) -> OfdmaInstance {
    let cfg = SystemConfig {
        n_antennas: k,
        n_downlink: k,
        n_devices: m,
        ..SystemConfig::default()
    };
    let mut r = rng(seed);
    let pos = sample_geometry(&cfg, &mut r);
    let ch = sample_ofdma_channels(&cfg, &pos, &mut r);
    let region = FeasibleRegion::new(m, ofdma_constraint_rows(&ch), vec![0.01; k]).unwrap();
    OfdmaInstance { cfg, ch, region }
}

/// `log2 det` through LU, independent of the Cholesky path in the library.
pub fn log2_det_lu(a: &CMatrix) -> f64 {
    a.clone().determinant().re.log2()
}

/// `log2 det(I + Σ_{m ∈ users} η_m u_m u_mᴴ)`.
pub fn log2_det_subset(cols: &[bacnoma_core::linalg::CVector], eta: &[f64], users: &[usize]) -> f64 {
    let n = cols[0].len();
    let mut a = CMatrix::identity(n, n);
    for &u in users {
        a += &cols[u] * cols[u].adjoint() * Complex64::new(eta[u], 0.0);
    }
    log2_det_lu(&a)
}

/// Best objective of a two-device problem on a `step` grid of `η_1`, with
/// `η_2` pushed to its largest feasible value (both objectives increase in
/// every coordinate). Returns the grid optimum and a golden-section refinement.
pub fn grid_search_2d(region: &FeasibleRegion, step: f64, obj: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    assert_eq!(region.dim(), 2);
    let eta2 = |e1: f64| -> Option<f64> {
        let mut best = 1.0f64;
        for (row, &t) in region.rows().iter().zip(region.tau()) {
            let rest = t - row[0] * e1;
            if rest < -1e-15 * t.max(1.0) {
                return None;
            }
            if row[1] > 0.0 {
                best = best.min(rest.max(0.0) / row[1]);
            }
        }
        Some(best)
    };
    let h = |e1: f64| eta2(e1).map(|e2| obj(e1, e2));
    let steps = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut last_feasible = 0;
    for i in 0..=steps {
        let e1 = i as f64 * step;
        match h(e1) {
            Some(v) => {
                last_feasible = i;
                if v > best.0 {
                    best = (v, i);
                }
            }
            None => break,
        }
    }
    // the profile is concave along the boundary, so refine around the best node
    let mut lo = best.1.saturating_sub(1) as f64 * step;
    let mut hi = ((best.1 + 1).min(last_feasible)) as f64 * step;
    // extend to the exact end of the feasible η_1 range when it lies between nodes
    if best.1 == last_feasible {
        let mut e1_max = 1.0f64;
        for (row, &t) in region.rows().iter().zip(region.tau()) {
            if row[0] > 0.0 {
                e1_max = e1_max.min(t / row[0]);
            }
        }
        hi = e1_max;
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |e: f64| h(e.clamp(0.0, 1.0)).unwrap_or(f64::NEG_INFINITY);
    let mut refined = best.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        let (fa, fb) = (eval(a), eval(b));
        refined = refined.max(fa).max(fb);
        if fa < fb {
            lo = a;
        } else {
            hi = b;
        }
    }
    (best.0, refined.max(eval(hi)).max(eval(lo)))
}
