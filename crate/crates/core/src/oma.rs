//! Time-division baseline: devices take turns, one per slot, each with the
//! largest reflection coefficient its budget rows allow.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mac::MacChannel;
use crate::solver::FeasibleRegion;

/// `min(1, min_k τ_k / a_{k,m})` over rows with `a_{k,m} > 0`.
pub fn solo_eta(region: &FeasibleRegion, m: usize) -> f64 {
    region
        .rows()
        .iter()
        .zip(region.tau())
        .filter(|(row, _)| row[m] > 0.0)
        .fold(1.0f64, |acc, (row, &t)| acc.min(t / row[m]))
        .max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmaOutcome {
    /// Mean throughput with a `1/M` time share per device.
    pub rate: f64,
    pub solo_eta: Vec<f64>,
    /// Each device's solo rate averaged over the draws.
    pub solo_rate: Vec<f64>,
}

/// `(1/M) Σ_m mean_draws log2(1 + η_m^solo ‖u_m‖²)`.
///
/// `draws` holds one MAC per excitation; all must share the device count.
pub fn oma_baseline(draws: &[MacChannel], region: &FeasibleRegion) -> Result<OmaOutcome> {
    let m = region.dim();
    if draws.is_empty() {
        return Err(Error::Dimension("at least one excitation draw is required"));
    }
    if draws.iter().any(|d| d.n_users() != m) {
        return Err(Error::Dimension("draw device count differs from region"));
    }
    let solo_eta: Vec<f64> = (0..m).map(|j| solo_eta(region, j)).collect();
    let solo_rate: Vec<f64> = (0..m)
        .map(|j| {
            draws
                .iter()
                .map(|d| libm::log2(1.0 + solo_eta[j] * d.columns()[j].norm_squared()))
                .sum::<f64>()
                / draws.len() as f64
        })
        .collect();
    let rate = solo_rate.iter().sum::<f64>() / m as f64;
    Ok(OmaOutcome {
        rate,
        solo_eta,
        solo_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::solver::{maximize, SolverOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mac(seed: u64, users: usize) -> MacChannel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MacChannel::new(
            (0..users)
                .map(|_| linalg::complex_normal_vector(&mut rng, 3, 2.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_device_equals_optimized_mac() {
        let draws: Vec<MacChannel> = (0..5).map(|s| mac(s, 1)).collect();
        let region = FeasibleRegion::new(1, alloc::vec![alloc::vec![4.0], alloc::vec![1.0]], alloc::vec![1.0, 0.5]).unwrap();
        let oma = oma_baseline(&draws, &region).unwrap();
        assert_eq!(oma.solo_eta, alloc::vec![0.25]);
        let opt: f64 = draws
            .iter()
            .map(|d| maximize(d, &region, &SolverOptions::default()).unwrap().objective)
            .sum::<f64>()
            / 5.0;
        assert!((oma.rate - opt).abs() < 1e-9);
    }

    #[test]
    fn zero_budget_means_zero_rate() {
        let draws = [mac(1, 3)];
        let region = FeasibleRegion::new(3, alloc::vec![alloc::vec![1.0, 2.0, 3.0]], alloc::vec![0.0]).unwrap();
        assert_eq!(oma_baseline(&draws, &region).unwrap().rate, 0.0);
    }

    #[test]
    fn unconstrained_devices_reflect_fully() {
        let draws = [mac(2, 2)];
        let region = FeasibleRegion::unit_box(2);
        let oma = oma_baseline(&draws, &region).unwrap();
        assert_eq!(oma.solo_eta, alloc::vec![1.0, 1.0]);
    }

    #[test]
    fn mismatched_draws_rejected() {
        let region = FeasibleRegion::unit_box(2);
        assert!(oma_baseline(&[], &region).is_err());
        assert!(oma_baseline(&[mac(3, 3)], &region).is_err());
    }
}
