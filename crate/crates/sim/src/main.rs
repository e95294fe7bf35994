use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bacnoma_core::geometry::prewhiten;
use bacnoma_core::legacy::{build_beamformers, interference_budgets, interference_rows};
use bacnoma_core::sdma::{sdma_mac, ExcitationRealization, QrGains};
use bacnoma_core::solver::{maximize, FeasibleRegion};
use bacnoma_core::specfun::{self, PosReal};
use bacnoma_core::LOG2_E;
use bacnoma_sim::config;
use bacnoma_sim::dump;
use bacnoma_sim::experiment::trial_channels;
use bacnoma_sim::output::{format_e10, write_csv};
use bacnoma_sim::presets::{figure_base, run_figure, Figure, Scale};
use bacnoma_sim::{run_experiment, selftest, ExperimentSpec, SweepResult};
use clap::{Parser, Subcommand};
use rand::SeedableRng;

/// Backscatter-assisted NOMA link-level simulator.
#[derive(Parser)]
#[command(name = "bacnoma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `rng_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per sweep point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `desk` (N = K = 4, 200 trials) or `paper` (figure dimensions).
    #[arg(long, global = true, default_value = "desk")]
    scale: Scale,
}

#[derive(Subcommand)]
enum Command {
    /// Self-interference sweep over alpha in {1e-4, 1e-3, 1e-2}.
    Fig1,
    /// Device-count sweep for both user placements.
    Fig2,
    /// OFDMA device-count sweep, rates normalized by the subcarrier count.
    Fig3,
    /// Run the experiment described by --config.
    Simulate,
    /// Run the built-in consistency checks.
    Selftest,
    /// Write the SDMA channels of one trial as a text dump.
    Dump {
        /// Trial index whose channels are written.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Optimized per-device rates for a channel dump.
    Rates {
        /// Channel dump produced by `dump`.
        #[arg(long)]
        channels: PathBuf,
    },
}

fn base_spec(cli: &Cli, mut spec: ExperimentSpec) -> Result<ExperimentSpec> {
    if let Some(path) = &cli.config {
        config::load_into(path, &mut spec)?;
    }
    if let Some(seed) = cli.seed {
        spec.config.rng_seed = seed;
    }
    if let Some(trials) = cli.trials {
        spec.n_trials = trials;
    }
    Ok(spec)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit_sweep(cli: &Cli, res: &SweepResult) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(&res.rows, &mut buf)?;
    emit(cli.out.as_deref(), &buf)?;
    let a = &res.audit;
    eprintln!(
        "trials {}, redraws {}, unconverged solves {}, audits {}",
        a.trials,
        a.redraws,
        a.unconverged,
        if a.passed() { "passed" } else { "FAILED" }
    );
    if !a.passed() {
        bail!("post-hoc audit failed: {a:?}");
    }
    Ok(())
}

fn figure(cli: &Cli, fig: Figure) -> Result<()> {
    let spec = base_spec(cli, figure_base(fig, cli.scale))?;
    let res = run_figure(fig, cli.scale, &spec)?;
    emit_sweep(cli, &res)
}

fn rates(cli: &Cli, channels: &Path) -> Result<()> {
    let text = std::fs::read_to_string(channels).with_context(|| format!("cannot read {}", channels.display()))?;
    let ch = dump::read_sdma(&text).with_context(|| format!("{}", channels.display()))?;
    let mut spec = base_spec(cli, ExperimentSpec::default())?;
    spec.config.n_antennas = ch.n_antennas();
    spec.config.n_downlink = ch.n_downlink();
    spec.config.n_devices = ch.n_devices();
    spec.config.si_covariance = bacnoma_core::geometry::SiCovariance::Custom(ch.c_si.clone());
    let cfg = &spec.config;
    cfg.validate()?;
    let (p0, sigma2) = (cfg.p0_watts(), cfg.noise_watts());
    let w = build_beamformers(&ch)?;
    let wh = prewhiten(cfg, &ch)?;
    let tau = interference_budgets(&ch, &w, &cfg.tau_policy, p0, sigma2)?;
    let region = FeasibleRegion::new(ch.n_devices(), interference_rows(&ch, &w), tau.as_slice().to_vec())?;

    let mut out = String::from("scheme,device,eta,rate_bpcu\n");
    let mut rows = |scheme: &str, eta: &[f64], rates: &[f64]| {
        for (m, (e, r)) in eta.iter().zip(rates).enumerate() {
            out.push_str(&format!("{scheme},{m},{},{}\n", format_e10(*e), format_e10(*r)));
        }
        let total: f64 = rates.iter().sum();
        out.push_str(&format!("{scheme},sum,,{}\n", format_e10(total)));
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let exc = ExcitationRealization::draw(&mut rng, &w, &ch, p0);
    let mac = sdma_mac(&wh, &exc)?;
    let best = maximize(&mac, &region, &spec.solver)?;
    let order: Vec<usize> = (0..ch.n_devices()).collect();
    let stage = mac.stage_rates(best.eta_star.as_slice(), &order)?;
    rows("ApproachI", best.eta_star.as_slice(), &stage);

    if ch.n_devices() <= ch.n_antennas() {
        let gains = QrGains::new(&wh, &ch, &w, p0)?;
        let best = maximize(&gains, &region, &spec.solver)?;
        let per: Vec<f64> = gains
            .c
            .iter()
            .zip(best.eta_star.as_slice())
            .map(|(c, e)| PosReal::new(c * e).map(|x| LOG2_E * specfun::f(x)))
            .collect::<Result<_, _>>()?;
        rows("ApproachII", best.eta_star.as_slice(), &per);
    }
    emit(cli.out.as_deref(), out.as_bytes())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Fig1 => figure(cli, Figure::Fig1)?,
        Command::Fig2 => figure(cli, Figure::Fig2)?,
        Command::Fig3 => figure(cli, Figure::Fig3)?,
        Command::Simulate => {
            if cli.config.is_none() {
                bail!("simulate needs --config <path>");
            }
            let spec = base_spec(cli, ExperimentSpec::default())?;
            emit_sweep(cli, &run_experiment(&spec)?)?;
        }
        Command::Selftest => {
            let checks = selftest::run(cli.seed.unwrap_or(0));
            let mut all = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                all &= c.passed;
            }
            return Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Dump { trial } => {
            let spec = base_spec(cli, ExperimentSpec::default())?;
            spec.config.validate()?;
            let ch = trial_channels(&spec.config, *trial)?;
            emit(cli.out.as_deref(), dump::write_sdma(&ch).as_bytes())?;
        }
        Command::Rates { channels } => rates(cli, channels)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
