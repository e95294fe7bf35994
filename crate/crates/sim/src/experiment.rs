use std::fmt;
use std::str::FromStr;

use bacnoma_core::geometry::{
    prewhiten, sample_geometry, sample_sdma_channels, SdmaChannelSet, SystemConfig, TauPolicy,
};
use bacnoma_core::legacy::{
    backcom_interference_power, budget_from_target, build_beamformers, downlink_rate_sdma,
    interference_budgets, interference_rows, BeamformingMatrix,
};
use bacnoma_core::ofdma::{
    build_stacked_mac, downlink_rate_ofdma, draw_symbols, ofdma_constraint_rows, ofdma_interference_power,
    sample_ofdma_channels, OfdmaChannelSet,
};
use bacnoma_core::oma::oma_baseline;
use bacnoma_core::sdma::{qr_rates_approach2, sdma_mac, ExcitationRealization, QrGains, ReflectionVector};
use bacnoma_core::solver::{maximize, random_feasible, FeasibleRegion, SolverOptions};
use bacnoma_core::mac::MacChannel;
use bacnoma_core::Error as CoreError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::stats::mean_and_stderr;

/// Attempts per trial before a degenerate channel draw becomes fatal.
const MAX_REDRAWS: u32 = 1000;

const AUDIT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    ApproachI,
    ApproachIRandomEta,
    ApproachII,
    Oma,
    OfdmaNoma,
    OfdmaOma,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::ApproachI,
        SchemeKind::ApproachIRandomEta,
        SchemeKind::ApproachII,
        SchemeKind::Oma,
        SchemeKind::OfdmaNoma,
        SchemeKind::OfdmaOma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::ApproachI => "ApproachI",
            SchemeKind::ApproachIRandomEta => "ApproachI_RandomEta",
            SchemeKind::ApproachII => "ApproachII",
            SchemeKind::Oma => "OMA",
            SchemeKind::OfdmaNoma => "OFDMA_NOMA",
            SchemeKind::OfdmaOma => "OFDMA_OMA",
        }
    }

    fn is_ofdma(self) -> bool {
        matches!(self, SchemeKind::OfdmaNoma | SchemeKind::OfdmaOma)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Alpha(Vec<f64>),
    Devices(Vec<usize>),
    Fixed,
}

impl Sweep {
    pub fn param_name(&self) -> &'static str {
        match self {
            Sweep::Alpha(_) => "alpha",
            Sweep::Devices(_) => "n_devices",
            Sweep::Fixed => "fixed",
        }
    }

    /// `(value written to the CSV, scenario at that point)`.
    fn points(&self, base: &SystemConfig) -> Vec<(f64, SystemConfig)> {
        match self {
            Sweep::Alpha(values) => values
                .iter()
                .map(|&a| (a, SystemConfig { alpha: a, ..base.clone() }))
                .collect(),
            Sweep::Devices(values) => values
                .iter()
                .map(|&m| (m as f64, SystemConfig { n_devices: m, ..base.clone() }))
                .collect(),
            Sweep::Fixed => vec![(0.0, base.clone())],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    pub sweep: Sweep,
    pub n_trials: usize,
    /// Legacy-symbol draws per channel realization.
    pub n_excitations: usize,
    pub schemes: Vec<SchemeKind>,
    pub solver: SolverOptions,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            config: SystemConfig::default(),
            sweep: Sweep::Fixed,
            n_trials: 200,
            n_excitations: 10,
            schemes: vec![SchemeKind::ApproachI, SchemeKind::ApproachII, SchemeKind::Oma],
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("trial {trial} at {param} = {value}: {source}")]
    Trial {
        param: &'static str,
        value: f64,
        trial: usize,
        source: CoreError,
    },
    #[error("could not start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Invalid(m.to_string()));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1");
        }
        if self.n_excitations == 0 {
            return bad("n_excitations must be at least 1");
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required");
        }
        match &self.sweep {
            Sweep::Alpha(v) if v.is_empty() || v.iter().any(|a| !(0.0..=1.0).contains(a)) => {
                return bad("alpha sweep values must lie in [0, 1]");
            }
            Sweep::Devices(v) if v.is_empty() || v.contains(&0) => {
                return bad("n_devices sweep values must be at least 1");
            }
            _ => {}
        }
        for (_, cfg) in self.sweep.points(&self.config) {
            cfg.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            if cfg.n_downlink > cfg.n_antennas && self.schemes.iter().any(|s| !s.is_ofdma()) {
                return bad("zero-forcing needs n_downlink <= n_antennas");
            }
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep_param: String,
    pub sweep_value: f64,
    pub scheme: SchemeKind,
    pub mean_bpcu: f64,
    pub stderr_bpcu: f64,
    pub mean_downlink_bpcu: f64,
    pub feasible_frac: f64,
    pub n_trials: usize,
}

/// Post-hoc checks collected over every trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    pub trials: usize,
    pub redraws: usize,
    /// Largest `(interference/P0 − τ_k)/max(1, τ_k)` at any returned `η`.
    pub max_protection_violation: f64,
    /// Largest target-rate shortfall in bpcu (target-rate policy only).
    pub max_rate_shortfall: f64,
    /// Largest `(R_II − C(η_II))/max(1, C)` per excitation.
    pub max_dominance_violation: f64,
    /// Largest `(R_II − C*_I)/max(1, C*_I)` against the optimized Approach I value.
    pub max_dominance_vs_optimum: f64,
    /// Solver runs that ended above the stationarity tolerance, either on the
    /// iteration cap or stalled at the rounding floor of the objective.
    pub unconverged: usize,
}

impl Audit {
    fn merge(&mut self, other: &Audit) {
        self.trials += other.trials;
        self.redraws += other.redraws;
        self.unconverged += other.unconverged;
        self.max_protection_violation = self.max_protection_violation.max(other.max_protection_violation);
        self.max_rate_shortfall = self.max_rate_shortfall.max(other.max_rate_shortfall);
        self.max_dominance_violation = self.max_dominance_violation.max(other.max_dominance_violation);
        self.max_dominance_vs_optimum = self.max_dominance_vs_optimum.max(other.max_dominance_vs_optimum);
    }

    /// Protection and dominance audits hold to `1e-9`.
    pub fn passed(&self) -> bool {
        self.max_protection_violation <= AUDIT_SLACK
            && self.max_rate_shortfall <= AUDIT_SLACK
            && self.max_dominance_violation <= AUDIT_SLACK
            && self.max_dominance_vs_optimum <= AUDIT_SLACK
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<Row>,
    pub audit: Audit,
}

impl SweepResult {
    pub fn row(&self, param: &str, value: f64, scheme: SchemeKind) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| r.sweep_param == param && r.sweep_value == value && r.scheme == scheme)
    }

    pub fn extend(&mut self, other: SweepResult) {
        self.rows.extend(other.rows);
        self.audit.merge(&other.audit);
    }
}

#[derive(Debug, Clone, Copy)]
enum Sample {
    /// The scheme is undefined for this scenario (Approach II with `M > N`).
    Undefined,
    Infeasible,
    Value { sum: f64, downlink: f64 },
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Purpose {
    Geometry = 0,
    Channels = 1,
    Excitations = 2,
    RandomEta = 3,
    OfdmaGeometry = 4,
    OfdmaChannels = 5,
    OfdmaSymbols = 6,
}

/// Child stream for `(trial, attempt, purpose)`; independent of scheduling.
///
/// The sweep point is deliberately not part of the key, so every point of a
/// sweep sees the same draws (common random numbers).
fn stream(seed: u64, trial: usize, attempt: u32, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 24) | ((attempt as u64) << 8) | purpose as u64);
    rng
}

fn worker_threads() -> usize {
    std::env::var("BACNOMA_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Runs every sweep point with `BACNOMA_THREADS` workers (0 or unset = all cores).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    run_experiment_with_threads(spec, worker_threads())
}

pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let param = spec.sweep.param_name();
    let mut result = SweepResult::default();
    for (value, cfg) in spec.sweep.points(&spec.config) {
        let trials: Vec<(Vec<Sample>, Audit)> = pool.install(|| {
            (0..spec.n_trials)
                .into_par_iter()
                .map(|t| {
                    run_trial(spec, &cfg, t).map_err(|source| ExperimentError::Trial {
                        param,
                        value,
                        trial: t,
                        source,
                    })
                })
                .collect::<Result<_, _>>()
        })?;
        for (_, audit) in &trials {
            result.audit.merge(audit);
        }
        for (i, &scheme) in spec.schemes.iter().enumerate() {
            let samples: Vec<Sample> = trials.iter().map(|(s, _)| s[i]).collect();
            if let Some(row) = summarize(param, value, scheme, &samples, spec.n_trials) {
                result.rows.push(row);
            }
        }
    }
    Ok(result)
}

fn summarize(param: &str, value: f64, scheme: SchemeKind, samples: &[Sample], n: usize) -> Option<Row> {
    if samples.iter().all(|s| matches!(s, Sample::Undefined)) {
        return None;
    }
    let (sums, downs): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter_map(|s| match s {
            Sample::Value { sum, downlink } => Some((*sum, *downlink)),
            _ => None,
        })
        .unzip();
    let (mean, se) = mean_and_stderr(&sums);
    let (down, _) = mean_and_stderr(&downs);
    Some(Row {
        sweep_param: param.to_string(),
        sweep_value: value,
        scheme,
        mean_bpcu: mean,
        stderr_bpcu: se,
        mean_downlink_bpcu: down,
        feasible_frac: sums.len() as f64 / n as f64,
        n_trials: n,
    })
}

fn run_trial(spec: &ExperimentSpec, cfg: &SystemConfig, trial: usize) -> Result<(Vec<Sample>, Audit), CoreError> {
    let mut audit = Audit {
        trials: 1,
        ..Audit::default()
    };
    let mut samples = vec![Sample::Undefined; spec.schemes.len()];
    if spec.schemes.iter().any(|s| !s.is_ofdma()) {
        sdma_trial(spec, cfg, trial, &mut samples, &mut audit)?;
    }
    if spec.schemes.iter().any(|s| s.is_ofdma()) {
        ofdma_trial(spec, cfg, trial, &mut samples, &mut audit)?;
    }
    Ok((samples, audit))
}

struct SdmaDraw {
    ch: SdmaChannelSet,
    w: BeamformingMatrix,
    qr: Option<QrGains>,
}

/// Draws channels until zero-forcing (and QR when needed) succeed.
fn draw_sdma(cfg: &SystemConfig, trial: usize, need_qr: bool, audit: &mut Audit) -> Result<(SdmaDraw, u32), CoreError> {
    let seed = cfg.rng_seed;
    for attempt in 0..MAX_REDRAWS {
        let pos = sample_geometry(cfg, &mut stream(seed, trial, attempt, Purpose::Geometry));
        let ch = sample_sdma_channels(cfg, &pos, &mut stream(seed, trial, attempt, Purpose::Channels));
        let w = match build_beamformers(&ch) {
            Ok(w) => w,
            Err(CoreError::DegenerateChannel { .. }) => {
                audit.redraws += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let qr = if need_qr {
            let wh = prewhiten(cfg, &ch)?;
            match QrGains::new(&wh, &ch, &w, cfg.p0_watts()) {
                Ok(g) => Some(g),
                Err(CoreError::RankDeficient { .. }) => {
                    audit.redraws += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        return Ok((SdmaDraw { ch, w, qr }, attempt));
    }
    Err(CoreError::DegenerateChannel { condition: f64::INFINITY })
}

/// The SDMA channels trial `trial` of a run with `cfg` sees, after redraws.
pub fn trial_channels(cfg: &SystemConfig, trial: usize) -> Result<SdmaChannelSet, CoreError> {
    let mut audit = Audit::default();
    draw_sdma(cfg, trial, false, &mut audit).map(|(d, _)| d.ch)
}

fn protection_violation(region: &FeasibleRegion, interference_over_p0: impl Fn(usize) -> f64) -> f64 {
    region
        .tau()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            if t.is_finite() {
                (interference_over_p0(k) - t) / t.max(1.0)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn sdma_trial(
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    trial: usize,
    samples: &mut [Sample],
    audit: &mut Audit,
) -> Result<(), CoreError> {
    let m = cfg.n_devices;
    let qr_defined = m <= cfg.n_antennas;
    let want = |s: SchemeKind| spec.schemes.contains(&s);
    let need_qr = want(SchemeKind::ApproachII) && qr_defined;
    let (SdmaDraw { ch, w, qr }, attempt) = draw_sdma(cfg, trial, need_qr, audit)?;
    let p0 = cfg.p0_watts();
    let sigma2 = cfg.noise_watts();
    let k_users = cfg.n_downlink;

    let budgets = match interference_budgets(&ch, &w, &cfg.tau_policy, p0, sigma2) {
        Ok(b) => b,
        Err(CoreError::InfeasibleTarget { .. }) => {
            for (slot, s) in spec.schemes.iter().enumerate() {
                if !s.is_ofdma() && !(*s == SchemeKind::ApproachII && !qr_defined) {
                    samples[slot] = Sample::Infeasible;
                }
            }
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let region = FeasibleRegion::new(m, interference_rows(&ch, &w), budgets.as_slice().to_vec())?;
    let wh = prewhiten(cfg, &ch)?;

    let downlink_mean = |eta: &ReflectionVector| -> f64 {
        (0..k_users)
            .map(|k| downlink_rate_sdma(&ch, &w, eta, k, p0, sigma2))
            .sum::<f64>()
            / k_users as f64
    };
    let check_eta = |eta: &ReflectionVector, audit: &mut Audit| {
        let v = protection_violation(&region, |k| backcom_interference_power(&ch, &w, eta, k, p0) / p0);
        audit.max_protection_violation = audit.max_protection_violation.max(v);
        if let TauPolicy::TargetRate(targets) = &cfg.tau_policy {
            for (k, &r) in targets.iter().enumerate() {
                let short = r - downlink_rate_sdma(&ch, &w, eta, k, p0, sigma2);
                audit.max_rate_shortfall = audit.max_rate_shortfall.max(short);
            }
        }
    };

    let mut exc_rng = stream(cfg.rng_seed, trial, attempt, Purpose::Excitations);
    let excitations: Vec<ExcitationRealization> = (0..spec.n_excitations)
        .map(|_| ExcitationRealization::draw(&mut exc_rng, &w, &ch, p0))
        .collect();
    let macs: Vec<MacChannel> = excitations
        .iter()
        .map(|e| sdma_mac(&wh, e))
        .collect::<Result<_, _>>()?;

    let mut approach1: Option<Vec<f64>> = None;
    if want(SchemeKind::ApproachI) {
        let mut values = Vec::with_capacity(macs.len());
        let mut down = 0.0;
        for mac in &macs {
            let res = maximize(mac, &region, &spec.solver)?;
            if !res.converged {
                audit.unconverged += 1;
            }
            check_eta(&res.eta_star, audit);
            down += downlink_mean(&res.eta_star);
            values.push(res.objective);
        }
        let n = values.len() as f64;
        set(spec, samples, SchemeKind::ApproachI, Sample::Value {
            sum: values.iter().sum::<f64>() / n,
            downlink: down / n,
        });
        approach1 = Some(values);
    }

    if want(SchemeKind::ApproachIRandomEta) {
        let eta = random_feasible(&region, &mut stream(cfg.rng_seed, trial, attempt, Purpose::RandomEta));
        check_eta(&eta, audit);
        let sum = macs
            .iter()
            .map(|mac| mac.sum_capacity(eta.as_slice()))
            .sum::<Result<f64, _>>()?
            / macs.len() as f64;
        set(spec, samples, SchemeKind::ApproachIRandomEta, Sample::Value {
            sum,
            downlink: downlink_mean(&eta),
        });
    }

    if let Some(gains) = &qr {
        let res = maximize(gains, &region, &spec.solver)?;
        if !res.converged {
            audit.unconverged += 1;
        }
        check_eta(&res.eta_star, audit);
        for (i, (exc, mac)) in excitations.iter().zip(&macs).enumerate() {
            let r2 = qr_rates_approach2(&wh, exc, &res.eta_star)?.sum;
            let c = mac.sum_capacity(res.eta_star.as_slice())?;
            audit.max_dominance_violation = audit.max_dominance_violation.max((r2 - c) / c.max(1.0));
            if let Some(best) = &approach1 {
                let gap = (r2 - best[i]) / best[i].max(1.0);
                audit.max_dominance_vs_optimum = audit.max_dominance_vs_optimum.max(gap);
            }
        }
        set(spec, samples, SchemeKind::ApproachII, Sample::Value {
            sum: res.objective,
            downlink: downlink_mean(&res.eta_star),
        });
    }

    if want(SchemeKind::Oma) {
        let oma = oma_baseline(&macs, &region)?;
        // each slot carries one device at its solo coefficient
        let mut down = 0.0;
        for (j, &e) in oma.solo_eta.iter().enumerate() {
            let mut eta = vec![0.0; m];
            eta[j] = e;
            let eta = ReflectionVector::clamped(eta);
            check_eta(&eta, audit);
            down += downlink_mean(&eta);
        }
        set(spec, samples, SchemeKind::Oma, Sample::Value {
            sum: oma.rate,
            downlink: down / m as f64,
        });
    }
    Ok(())
}

fn set(spec: &ExperimentSpec, samples: &mut [Sample], scheme: SchemeKind, value: Sample) {
    if let Some(i) = spec.schemes.iter().position(|&s| s == scheme) {
        samples[i] = value;
    }
}

/// `τ_k` for the OFDMA legacy system; `None` when a target is out of reach.
pub fn ofdma_budgets(cfg: &SystemConfig, ch: &OfdmaChannelSet) -> Option<Vec<f64>> {
    let k = ch.n_subcarriers();
    let (p0, sigma2) = (cfg.p0_watts(), cfg.noise_watts());
    let tau: Vec<f64> = match &cfg.tau_policy {
        TauPolicy::FixedTau(t) => vec![*t; k],
        TauPolicy::TargetRate(rates) => rates
            .iter()
            .enumerate()
            .map(|(j, &r)| budget_from_target(ch.g_dl[j].norm_sqr(), 0.0, r, p0, sigma2))
            .collect(),
    };
    tau.iter().all(|t| *t >= 0.0).then_some(tau)
}

fn ofdma_trial(
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    trial: usize,
    samples: &mut [Sample],
    audit: &mut Audit,
) -> Result<(), CoreError> {
    let seed = cfg.rng_seed;
    let pos = sample_geometry(cfg, &mut stream(seed, trial, 0, Purpose::OfdmaGeometry));
    let ch = sample_ofdma_channels(cfg, &pos, &mut stream(seed, trial, 0, Purpose::OfdmaChannels));
    let k = ch.n_subcarriers();
    let m = ch.n_devices();
    let (p0, sigma2) = (cfg.p0_watts(), cfg.noise_watts());
    let want = |s: SchemeKind| spec.schemes.contains(&s);

    let Some(tau) = ofdma_budgets(cfg, &ch) else {
        for s in [SchemeKind::OfdmaNoma, SchemeKind::OfdmaOma] {
            set(spec, samples, s, Sample::Infeasible);
        }
        return Ok(());
    };
    let region = FeasibleRegion::new(m, ofdma_constraint_rows(&ch), tau)?;
    let downlink_mean =
        |eta: &ReflectionVector| (0..k).map(|j| downlink_rate_ofdma(&ch, eta, p0, sigma2, j)).sum::<f64>() / k as f64;
    let check_eta = |eta: &ReflectionVector, audit: &mut Audit| {
        let v = protection_violation(&region, |j| ofdma_interference_power(&ch, eta, p0, j) / p0);
        audit.max_protection_violation = audit.max_protection_violation.max(v);
        if let TauPolicy::TargetRate(targets) = &cfg.tau_policy {
            for (j, &r) in targets.iter().enumerate() {
                let short = r - downlink_rate_ofdma(&ch, eta, p0, sigma2, j);
                audit.max_rate_shortfall = audit.max_rate_shortfall.max(short);
            }
        }
    };

    let mut sym_rng = stream(seed, trial, 0, Purpose::OfdmaSymbols);
    let macs: Vec<MacChannel> = (0..spec.n_excitations)
        .map(|_| {
            let x = draw_symbols(&mut sym_rng, k);
            build_stacked_mac(&ch, &x, p0, cfg.alpha, sigma2)?.mac()
        })
        .collect::<Result<_, _>>()?;
    let norm = k as f64;

    if want(SchemeKind::OfdmaNoma) {
        let mut total = 0.0;
        let mut down = 0.0;
        for mac in &macs {
            let res = maximize(mac, &region, &spec.solver)?;
            if !res.converged {
                audit.unconverged += 1;
            }
            check_eta(&res.eta_star, audit);
            total += res.objective;
            down += downlink_mean(&res.eta_star);
        }
        let n = macs.len() as f64;
        set(spec, samples, SchemeKind::OfdmaNoma, Sample::Value {
            sum: total / n / norm,
            downlink: down / n,
        });
    }
    if want(SchemeKind::OfdmaOma) {
        let oma = oma_baseline(&macs, &region)?;
        let mut down = 0.0;
        for (j, &e) in oma.solo_eta.iter().enumerate() {
            let mut eta = vec![0.0; m];
            eta[j] = e;
            let eta = ReflectionVector::clamped(eta);
            check_eta(&eta, audit);
            down += downlink_mean(&eta);
        }
        set(spec, samples, SchemeKind::OfdmaOma, Sample::Value {
            sum: oma.rate / norm,
            downlink: down / m as f64,
        });
    }
    Ok(())
}
