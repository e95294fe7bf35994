//! Fast consistency battery behind `bacnoma selftest`.
//!
//! Each check rebuilds its quantity by a second route (determinant
//! identities, finite differences, Monte Carlo, grid search) and compares.

use bacnoma_core::geometry::{prewhiten, sample_geometry, sample_sdma_channels, SystemConfig};
use bacnoma_core::legacy::{build_beamformers, interference_budgets, interference_rows};
use bacnoma_core::ofdma::{build_stacked_mac, draw_symbols, ofdma_constraint_rows, sample_ofdma_channels};
use bacnoma_core::sdma::{qr_rates_approach2, sdma_mac, ExcitationRealization, QrGains, ReflectionVector};
use bacnoma_core::solver::{maximize, random_feasible, FeasibleRegion, Objective, SolverOptions};
use bacnoma_core::specfun::{f, f_prime, f_second, g_appendix, PosReal};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stats::mean_and_stderr;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

struct Instance {
    cfg: SystemConfig,
    ch: bacnoma_core::geometry::SdmaChannelSet,
    w: bacnoma_core::legacy::BeamformingMatrix,
    wh: bacnoma_core::geometry::WhitenedChannels,
    region: FeasibleRegion,
}

fn instance(rng: &mut ChaCha8Rng, n: usize, k: usize, m: usize) -> Instance {
    let cfg = SystemConfig {
        n_antennas: n,
        n_downlink: k,
        n_devices: m,
        ..SystemConfig::default()
    };
    loop {
        let pos = sample_geometry(&cfg, rng);
        let ch = sample_sdma_channels(&cfg, &pos, rng);
        let Ok(w) = build_beamformers(&ch) else { continue };
        let wh = prewhiten(&cfg, &ch).expect("identity self-interference is positive definite");
        let tau = interference_budgets(&ch, &w, &cfg.tau_policy, cfg.p0_watts(), cfg.noise_watts())
            .expect("fixed budgets are valid");
        let region = FeasibleRegion::new(m, interference_rows(&ch, &w), tau.as_slice().to_vec())
            .expect("rows are nonnegative");
        return Instance { cfg, ch, w, wh, region };
    }
}

fn random_order(rng: &mut impl Rng, m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    order
}

fn chain_rule(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=6usize);
        let k = rng.random_range(1..=n);
        let m = rng.random_range(1..=6usize);
        let inst = instance(rng, n, k, m);
        let exc = ExcitationRealization::draw(rng, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let mac = sdma_mac(&inst.wh, &exc).expect("shapes agree");
        let eta: Vec<f64> = (0..m).map(|_| rng.random()).collect();
        let total = mac.sum_capacity(&eta).expect("finite");
        let order = random_order(rng, m);
        let stages: f64 = mac.stage_rates(&eta, &order).expect("valid order").iter().sum();
        worst = worst.max((stages - total).abs() / total.max(1.0));

        let cfg = SystemConfig { n_downlink: k, n_devices: m, ..SystemConfig::default() };
        let pos = sample_geometry(&cfg, rng);
        let och = sample_ofdma_channels(&cfg, &pos, rng);
        let x = draw_symbols(rng, k);
        let omac = build_stacked_mac(&och, &x, cfg.p0_watts(), cfg.alpha, cfg.noise_watts())
            .and_then(|s| s.mac())
            .expect("finite symbols");
        let total = omac.sum_capacity(&eta).expect("finite");
        let stages: f64 = omac.stage_rates(&eta, &order).expect("valid order").iter().sum();
        worst = worst.max((stages - total).abs() / total.max(1.0));
    }
    check("chain rule (SDMA and OFDMA)", worst <= 1e-9, format!("max relative gap {worst:.2e}"))
}

fn order_invariance(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=6usize);
        let inst = instance(rng, 4, 4, m);
        let exc = ExcitationRealization::draw(rng, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let mac = sdma_mac(&inst.wh, &exc).expect("shapes agree");
        let eta: Vec<f64> = (0..m).map(|_| rng.random()).collect();
        let sums: Vec<f64> = (0..5)
            .map(|_| {
                let order = random_order(rng, m);
                mac.stage_rates(&eta, &order).expect("valid order").iter().sum()
            })
            .collect();
        for s in &sums {
            worst = worst.max((s - sums[0]).abs() / sums[0].max(1.0));
        }
    }
    check("decoding order invariance", worst <= 1e-9, format!("max relative spread {worst:.2e}"))
}

fn closed_form_average(rng: &mut ChaCha8Rng) -> Check {
    const DRAWS: usize = 20_000;
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let inst = instance(rng, 4, 4, 3);
        let p0 = inst.cfg.p0_watts();
        let gains = QrGains::new(&inst.wh, &inst.ch, &inst.w, p0).expect("full column rank");
        let eta = random_feasible(&inst.region, rng);
        let closed = gains.value(eta.as_slice()).expect("finite");
        let samples: Vec<f64> = (0..DRAWS)
            .map(|_| {
                let exc = ExcitationRealization::draw(rng, &inst.w, &inst.ch, p0);
                qr_rates_approach2(&inst.wh, &exc, &eta).expect("full column rank").sum
            })
            .collect();
        let (mean, se) = mean_and_stderr(&samples);
        worst = worst.max((mean - closed).abs() / se);
    }
    check("closed-form QR average vs Monte Carlo", worst <= 3.0, format!("max deviation {worst:.2} standard errors"))
}

fn special_functions() -> Check {
    let mut ok = true;
    let mut worst_fd = 0.0f64;
    for i in 0..200 {
        let x = 10f64.powf(-3.0 + 6.0 * i as f64 / 199.0);
        let p = PosReal::new(x).expect("positive");
        ok &= f_second(p).expect("positive") <= 1e-12;
        ok &= g_appendix(p).expect("positive") >= -1e-12;
        if (0.1..=100.0).contains(&x) {
            let h = 1e-6 * x.max(1.0);
            let fd = (f(PosReal::new(x + h).expect("positive")) - f(PosReal::new(x - h).expect("positive"))) / (2.0 * h);
            worst_fd = worst_fd.max((f_prime(p).expect("positive") - fd).abs());
        }
    }
    check(
        "special functions (sign laws, derivative)",
        ok && worst_fd <= 1e-5,
        format!("sign laws {}, max |f' - fd| {worst_fd:.2e}", if ok { "hold" } else { "violated" }),
    )
}

/// Best value of a two-device problem over a `1e-3` grid on `η_1`, with `η_2`
/// at its largest feasible value.
fn grid_best(region: &FeasibleRegion, obj: &dyn Objective) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..=1000 {
        let e1 = i as f64 * 1e-3;
        let mut e2 = 1.0f64;
        let mut feasible = true;
        for (row, &t) in region.rows().iter().zip(region.tau()) {
            let rest = t - row[0] * e1;
            if rest < 0.0 {
                feasible = false;
            } else if row[1] > 0.0 {
                e2 = e2.min(rest / row[1]);
            }
        }
        if !feasible {
            break;
        }
        best = best.max(obj.value(&[e1, e2]).expect("finite"));
    }
    best
}

fn solver_vs_grid(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = f64::INFINITY;
    let opts = SolverOptions::default();
    for _ in 0..10 {
        let inst = instance(rng, 4, 2, 2);
        let exc = ExcitationRealization::draw(rng, &inst.w, &inst.ch, inst.cfg.p0_watts());
        let mac = sdma_mac(&inst.wh, &exc).expect("shapes agree");
        let got = maximize(&mac, &inst.region, &opts).expect("finite objective").objective;
        worst = worst.min(got - grid_best(&inst.region, &mac));

        let gains = QrGains::new(&inst.wh, &inst.ch, &inst.w, inst.cfg.p0_watts()).expect("full column rank");
        let got = maximize(&gains, &inst.region, &opts).expect("finite objective").objective;
        worst = worst.min(got - grid_best(&inst.region, &gains));

        let cfg = SystemConfig { n_downlink: 2, n_devices: 2, ..SystemConfig::default() };
        let pos = sample_geometry(&cfg, rng);
        let och = sample_ofdma_channels(&cfg, &pos, rng);
        let region = FeasibleRegion::new(2, ofdma_constraint_rows(&och), vec![0.01; 2]).expect("valid rows");
        let x = draw_symbols(rng, 2);
        let omac = build_stacked_mac(&och, &x, cfg.p0_watts(), cfg.alpha, cfg.noise_watts())
            .and_then(|s| s.mac())
            .expect("finite symbols");
        let got = maximize(&omac, &region, &opts).expect("finite objective").objective;
        worst = worst.min(got - grid_best(&region, &omac));
    }
    check("solver vs grid search", worst >= -1e-4, format!("worst solver - grid {worst:.2e}"))
}

fn feasibility(rng: &mut ChaCha8Rng) -> Check {
    let inst = instance(rng, 4, 4, 5);
    let violations = (0..10_000)
        .filter(|_| !inst.region.contains(random_feasible(&inst.region, rng).as_slice(), 1e-12))
        .count();
    let zero = ReflectionVector::zeros(5);
    check(
        "random feasible draws",
        violations == 0 && inst.region.contains(zero.as_slice(), 0.0),
        format!("{violations} violations in 10000 draws"),
    )
}

pub fn run(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        chain_rule(&mut rng),
        order_invariance(&mut rng),
        closed_form_average(&mut rng),
        special_functions(),
        solver_vs_grid(&mut rng),
        feasibility(&mut rng),
    ]
}
