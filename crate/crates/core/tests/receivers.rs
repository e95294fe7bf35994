//! Receiver rate identities checked against independent determinant and
//! Monte Carlo oracles.

mod common;

use bacnoma_core::geometry::{
    interference_covariance, prewhiten, sample_geometry, sample_sdma_channels, SiCovariance, SystemConfig, TauPolicy,
};
use bacnoma_core::legacy::{
    backcom_interference_power, build_beamformers, downlink_rate_sdma, interference_budgets,
};
use bacnoma_core::linalg::{self, CMatrix};
use bacnoma_core::ofdma::{build_stacked_mac, draw_symbols, sic_rates_ofdma, sum_capacity_ofdma};
use bacnoma_core::sdma::{
    avg_qr_sum_rate, grad_avg_qr_sum_rate, grad_sum_capacity, qr_rates_approach2, sdma_mac,
    sic_rates_approach1, sum_capacity_sdma, ExcitationRealization, QrGains, ReflectionVector,
};
use bacnoma_core::solver::random_feasible;
use bacnoma_core::Complex64;
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::RngExt;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn random_eta(r: &mut impl rand::Rng, m: usize) -> ReflectionVector {
    ReflectionVector::new((0..m).map(|_| r.random::<f64>()).collect()).unwrap()
}

#[test]
fn sdma_chain_rule_matches_log_det_oracle() {
    let mut r = rng(11);
    for trial in 0..300u64 {
        let n = r.random_range(1..=6usize);
        let k = r.random_range(1..=n);
        let m = r.random_range(1..=6usize);
        let inst = sdma_instance(1000 + trial, n, k, m);
        let exc = ExcitationRealization::draw(&mut r, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let eta = random_eta(&mut r, m);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut r);

        let total = sum_capacity_sdma(&inst.wh, &exc, &eta).unwrap();
        let stages = sic_rates_approach1(&inst.wh, &exc, &eta, &order).unwrap();
        let cols = sdma_mac(&inst.wh, &exc).unwrap().columns().to_vec();
        for (pos, &dev) in order.iter().enumerate() {
            let with: Vec<usize> = order[pos..].to_vec();
            let without: Vec<usize> = order[pos + 1..].to_vec();
            let oracle = log2_det_subset(&cols, eta.as_slice(), &with)
                - log2_det_subset(&cols, eta.as_slice(), &without);
            assert!(
                (stages.per_device[dev] - oracle).abs() <= 1e-8 * total.max(1.0),
                "trial {trial} stage {pos}"
            );
        }
        let all: Vec<usize> = (0..m).collect();
        assert!(rel_close(total, log2_det_subset(&cols, eta.as_slice(), &all), 1e-9));
        assert!(rel_close(stages.sum, total, 1e-9), "trial {trial}");
    }
}

#[test]
fn ofdma_chain_rule_matches_log_det_oracle() {
    let mut r = rng(12);
    for trial in 0..200u64 {
        let k = r.random_range(1..=6usize);
        let m = r.random_range(1..=6usize);
        let inst = ofdma_instance(2000 + trial, k, m);
        let x = draw_symbols(&mut r, k);
        let model = build_stacked_mac(&inst.ch, &x, inst.cfg.p0_watts(), inst.cfg.alpha, inst.cfg.noise_watts()).unwrap();
        let eta = random_eta(&mut r, m);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut r);
        let total = sum_capacity_ofdma(&model, &eta).unwrap();
        let stages = sic_rates_ofdma(&model, &eta, &order).unwrap();
        let cols = linalg::columns(&model.h_bar);
        let all: Vec<usize> = (0..m).collect();
        assert!(rel_close(total, log2_det_subset(&cols, eta.as_slice(), &all), 1e-9));
        assert!(rel_close(stages.sum, total, 1e-9));
    }
}

#[test]
fn stacked_columns_have_direct_norms() {
    let inst = ofdma_instance(3, 4, 3);
    let mut r = rng(4);
    let x = draw_symbols(&mut r, 4);
    let p0 = inst.cfg.p0_watts();
    let model = build_stacked_mac(&inst.ch, &x, p0, inst.cfg.alpha, inst.cfg.noise_watts()).unwrap();
    for m in 0..3 {
        let direct: f64 = (0..4)
            .map(|k| p0 * x[k].norm_sqr() * model.h_breve[(m, k)].norm_sqr())
            .sum();
        let col = model.h_bar.column(m).norm_squared();
        assert!(rel_close(col, direct, 1e-12));
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(13);
    for seed in 0..10 {
        let inst = sdma_instance(seed, 4, 4, 3);
        let exc = ExcitationRealization::draw(&mut r, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let eta = ReflectionVector::new(vec![0.3, 0.5, 0.7]).unwrap();
        // scale η into a range where the log-det is not saturated in every direction
        let mac = sdma_mac(&inst.wh, &exc).unwrap();
        let scale = mac.columns().iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
        let eta = ReflectionVector::new(eta.as_slice().iter().map(|e| e / scale.max(1.0)).collect()).unwrap();
        let grad = grad_sum_capacity(&inst.wh, &exc, &eta).unwrap();
        for j in 0..3 {
            let h = 1e-6 * eta.as_slice()[j];
            let mut up = eta.as_slice().to_vec();
            let mut dn = up.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (mac.sum_capacity(&up).unwrap() - mac.sum_capacity(&dn).unwrap()) / (2.0 * h);
            assert!((grad[j] - fd).abs() <= 1e-5 * grad[j].abs(), "seed {seed} j {j}: {} vs {fd}", grad[j]);
        }

        let gains = QrGains::new(&inst.wh, &inst.ch, &inst.w, inst.cfg.p0_watts()).unwrap();
        let eta = ReflectionVector::new(gains.c.iter().map(|c| 2.0 / c).map(|v| v.min(1.0)).collect()).unwrap();
        let grad = grad_avg_qr_sum_rate(&gains, &eta).unwrap();
        for j in 0..3 {
            let h = 1e-6 * eta.as_slice()[j];
            let mut up = eta.as_slice().to_vec();
            let mut dn = up.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (gains.value(&up).unwrap() - gains.value(&dn).unwrap()) / (2.0 * h);
            assert!((grad[j] - fd).abs() <= 1e-5 * grad[j].abs(), "qr seed {seed} j {j}");
        }
    }
}

/// Central differences of the gradient, column by column.
fn fd_hessian(grad: impl Fn(&[f64]) -> Vec<f64>, eta: &[f64]) -> Vec<f64> {
    let m = eta.len();
    let mut h = vec![0.0; m * m];
    for j in 0..m {
        let step = 1e-6 * eta[j].max(1e-9);
        let mut up = eta.to_vec();
        let mut dn = eta.to_vec();
        up[j] += step;
        dn[j] -= step;
        let (gu, gd) = (grad(&up), grad(&dn));
        for i in 0..m {
            h[i * m + j] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    h
}

#[test]
fn hessians_match_finite_differences() {
    let mut r = rng(17);
    for seed in 0..10 {
        let inst = sdma_instance(seed, 4, 4, 3);
        let exc = ExcitationRealization::draw(&mut r, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let mac = sdma_mac(&inst.wh, &exc).unwrap();
        let scale = mac.columns().iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
        let eta: Vec<f64> = [0.3, 0.5, 0.7].iter().map(|e| e / scale.max(1.0)).collect();
        let hess = mac.hessian(&eta).unwrap();
        let fd = fd_hessian(|e| mac.gradient(e).unwrap(), &eta);
        let big = hess.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in hess.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * big, "seed {seed}: {a} vs {b}");
        }

        let gains = QrGains::new(&inst.wh, &inst.ch, &inst.w, inst.cfg.p0_watts()).unwrap();
        let eta: Vec<f64> = gains.c.iter().map(|c| (2.0 / c).min(1.0)).collect();
        let hess = gains.hessian(&eta).unwrap();
        let fd = fd_hessian(|e| gains.gradient(e).unwrap(), &eta);
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (hess[i * 3 + j], fd[i * 3 + j]);
                assert!((a - b).abs() <= 1e-5 * hess[i * 3 + i].abs().max(1e-12), "qr seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn closed_form_average_matches_monte_carlo() {
    const DRAWS: usize = 40_000;
    for seed in 0..3 {
        let inst = sdma_instance(50 + seed, 4, 4, 3);
        let p0 = inst.cfg.p0_watts();
        let gains = QrGains::new(&inst.wh, &inst.ch, &inst.w, p0).unwrap();
        let mut r = rng(70 + seed);
        let eta = random_feasible(&inst.region, &mut r);
        let closed = avg_qr_sum_rate(&gains, &eta).unwrap();
        let samples: Vec<f64> = (0..DRAWS)
            .map(|_| {
                let exc = ExcitationRealization::draw(&mut r, &inst.w, &inst.ch, p0);
                qr_rates_approach2(&inst.wh, &exc, &eta).unwrap().sum
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / DRAWS as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (DRAWS - 1) as f64;
        let se = (var / DRAWS as f64).sqrt();
        assert!((mean - closed).abs() <= 3.0 * se, "seed {seed}: {mean} ± {se} vs {closed}");
    }
}

#[test]
fn approach_two_never_beats_approach_one() {
    let mut r = rng(14);
    for seed in 0..100 {
        let inst = sdma_instance(300 + seed, 4, 4, r.random_range(1..=4usize));
        let exc = ExcitationRealization::draw(&mut r, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let eta = random_feasible(&inst.region, &mut r);
        let one = sum_capacity_sdma(&inst.wh, &exc, &eta).unwrap();
        let two = qr_rates_approach2(&inst.wh, &exc, &eta).unwrap().sum;
        assert!(two <= one + 1e-9 * one.max(1.0), "seed {seed}: {two} > {one}");
    }
}

#[test]
fn channel_variances_follow_path_loss() {
    const DRAWS: usize = 100_000;
    let cfg = SystemConfig {
        n_antennas: 2,
        n_downlink: 1,
        n_devices: 1,
        ..SystemConfig::default()
    };
    let mut r = rng(15);
    let pos = sample_geometry(&cfg, &mut r);
    let bs = pos.base_station;
    let want_g = cfg.path_gain(bacnoma_core::geometry::distance(bs, pos.users[0]));
    let want_h = cfg.path_gain(bacnoma_core::geometry::distance(bs, pos.devices[0]));
    let want_x = cfg.path_gain(bacnoma_core::geometry::distance(pos.devices[0], pos.users[0]));
    let (mut sg, mut sh, mut sx) = (0.0, 0.0, 0.0);
    for _ in 0..DRAWS {
        let ch = sample_sdma_channels(&cfg, &pos, &mut r);
        sg += ch.g[0][0].norm_sqr();
        sh += ch.h[0][1].norm_sqr();
        sx += ch.g_cross[(0, 0)].norm_sqr();
    }
    let n = DRAWS as f64;
    assert!(((sg / n) / want_g - 1.0).abs() < 0.03);
    assert!(((sh / n) / want_h - 1.0).abs() < 0.03);
    assert!(((sx / n) / want_x - 1.0).abs() < 0.03);
}

#[test]
fn whitening_is_exact() {
    let mut r = rng(16);
    let a = CMatrix::from_fn(4, 4, |_, _| linalg::complex_normal(&mut r, 1.0));
    let custom = &a * a.adjoint();
    for si in [SiCovariance::Identity, SiCovariance::Custom(custom)] {
        let cfg = SystemConfig {
            si_covariance: si,
            ..SystemConfig::default()
        };
        let pos = sample_geometry(&cfg, &mut r);
        let ch = sample_sdma_channels(&cfg, &pos, &mut r);
        let wh = prewhiten(&cfg, &ch).unwrap();
        let cov = interference_covariance(&cfg, &ch.c_si);
        let white = &wh.whitener * cov * wh.whitener.adjoint();
        let err = (white - CMatrix::identity(4, 4)).norm();
        assert!(err <= 1e-9, "{err}");
    }
}

#[test]
fn interference_power_matches_empirical_variance() {
    const DRAWS: usize = 100_000;
    let inst = sdma_instance(17, 4, 4, 3);
    let p0 = inst.cfg.p0_watts();
    let mut r = rng(18);
    let eta = ReflectionVector::new(vec![0.2, 0.9, 0.5]).unwrap();
    for k in 0..4 {
        let want = backcom_interference_power(&inst.ch, &inst.w, &eta, k, p0);
        let samples: Vec<f64> = (0..DRAWS)
            .map(|_| {
                let exc = ExcitationRealization::draw(&mut r, &inst.w, &inst.ch, p0);
                let io: Complex64 = (0..3)
                    .map(|m| {
                        let c = linalg::complex_normal(&mut r, 1.0);
                        inst.ch.g_cross[(k, m)] * exc.s0_gain[m] * c * eta.as_slice()[m].sqrt()
                    })
                    .sum();
                io.norm_sqr()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / DRAWS as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (DRAWS - 1) as f64;
        let se = (var / DRAWS as f64).sqrt();
        assert!((mean - want).abs() <= 3.0 * se, "k {k}: {mean} ± {se} vs {want}");
    }
}

#[test]
fn target_rate_budget_round_trip() {
    let mut inst = sdma_instance(19, 4, 4, 1);
    let p0 = inst.cfg.p0_watts();
    let sigma2 = inst.cfg.noise_watts();
    let zero = ReflectionVector::zeros(1);
    let targets: Vec<f64> = (0..4)
        .map(|k| 0.5 * downlink_rate_sdma(&inst.ch, &inst.w, &zero, k, p0, sigma2))
        .collect();
    inst.cfg.tau_policy = TauPolicy::TargetRate(targets.clone());
    let tau = interference_budgets(&inst.ch, &inst.w, &inst.cfg.tau_policy, p0, sigma2).unwrap();
    let row = bacnoma_core::legacy::interference_rows(&inst.ch, &inst.w);
    let mut checked = 0;
    for k in 0..4 {
        // η that spends user k's whole budget
        let eta = tau.as_slice()[k] / row[k][0];
        let rate = downlink_rate_sdma(&inst.ch, &inst.w, &ReflectionVector::clamped(vec![eta]), k, p0, sigma2);
        if eta <= 1.0 {
            assert!((rate - targets[k]).abs() <= 1e-9 * targets[k].max(1.0), "k {k}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn beamformer_nulls_cross_users() {
    let inst = sdma_instance(20, 5, 3, 2);
    let w = build_beamformers(&inst.ch).unwrap();
    for k in 0..3 {
        for j in 0..3 {
            let v = linalg::dot_t(&inst.ch.g[k], &w.column(j)).norm();
            if j != k {
                assert!(v <= 1e-9 * inst.ch.g[k].norm());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn order_invariance(seed in 0u64..10_000, m in 1usize..6, perm_seed in 0u64..1000) {
        let inst = sdma_instance(seed, 4, 3, m);
        let mut r = rng(perm_seed);
        let exc = ExcitationRealization::draw(&mut r, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let eta = random_eta(&mut r, m);
        let mut order: Vec<usize> = (0..m).collect();
        let base = sic_rates_approach1(&inst.wh, &exc, &eta, &order).unwrap().sum;
        for _ in 0..5 {
            order.shuffle(&mut r);
            let s = sic_rates_approach1(&inst.wh, &exc, &eta, &order).unwrap().sum;
            prop_assert!(rel_close(s, base, 1e-9));
        }
    }

    #[test]
    fn sum_capacity_concave_and_monotone(seed in 0u64..10_000, m in 1usize..6) {
        let inst = sdma_instance(seed, 4, 4, m);
        let mut r = rng(seed ^ 0xabc);
        let exc = ExcitationRealization::draw(&mut r, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let a = random_feasible(&inst.region, &mut r);
        let b = random_feasible(&inst.region, &mut r);
        let mid = ReflectionVector::new(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x + y) / 2.0).collect()).unwrap();
        let fa = sum_capacity_sdma(&inst.wh, &exc, &a).unwrap();
        let fb = sum_capacity_sdma(&inst.wh, &exc, &b).unwrap();
        let fm = sum_capacity_sdma(&inst.wh, &exc, &mid).unwrap();
        prop_assert!(fm >= (fa + fb) / 2.0 - 1e-9);
        let hi = ReflectionVector::new(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.max(*y)).collect()).unwrap();
        prop_assert!(sum_capacity_sdma(&inst.wh, &exc, &hi).unwrap() >= fa.max(fb) - 1e-9);
    }

    #[test]
    fn qr_average_concave(seed in 0u64..10_000, m in 1usize..5) {
        let inst = sdma_instance(seed, 4, 4, m);
        let gains = QrGains::new(&inst.wh, &inst.ch, &inst.w, inst.cfg.p0_watts()).unwrap();
        let mut r = rng(seed ^ 0xdef);
        let a = random_feasible(&inst.region, &mut r);
        let b = random_feasible(&inst.region, &mut r);
        let mid: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x + y) / 2.0).collect();
        let fm = gains.value(&mid).unwrap();
        prop_assert!(fm >= (gains.value(a.as_slice()).unwrap() + gains.value(b.as_slice()).unwrap()) / 2.0 - 1e-9);
    }
}
