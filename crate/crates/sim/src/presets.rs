//! Scenario presets behind the `fig1`, `fig2` and `fig3` subcommands.

use std::str::FromStr;

use bacnoma_core::geometry::{GeometryCase, SystemConfig};

use crate::experiment::{run_experiment, ExperimentError, ExperimentSpec, SchemeKind, Sweep, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// `N = K = 4`, 200 trials: minutes on a laptop.
    Desk,
    /// Antenna and user counts of the published figures.
    Paper,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(format!("unknown scale `{s}` (expected desk or paper)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Self-interference sweep, Case I.
    Fig1,
    /// Device-count sweep, Cases I and II.
    Fig2,
    /// OFDMA device-count sweep, normalized by the subcarrier count.
    Fig3,
}

pub const FIG1_ALPHAS: [f64; 3] = [1e-4, 1e-3, 1e-2];

struct Dims {
    n: usize,
    n_ofdma: usize,
    trials: usize,
    devices: Vec<usize>,
}

fn dims(scale: Scale) -> Dims {
    match scale {
        Scale::Desk => Dims {
            n: 4,
            n_ofdma: 4,
            trials: 200,
            devices: (1..=8).collect(),
        },
        Scale::Paper => Dims {
            n: 10,
            n_ofdma: 16,
            trials: 1000,
            devices: (1..=12).collect(),
        },
    }
}

fn base(n: usize, trials: usize) -> ExperimentSpec {
    ExperimentSpec {
        config: SystemConfig {
            n_antennas: n,
            n_downlink: n,
            n_devices: n,
            ..SystemConfig::default()
        },
        n_trials: trials,
        n_excitations: 10,
        ..ExperimentSpec::default()
    }
}

/// Scale defaults for `fig`, before the figure fixes its sweep.
///
/// Callers may adjust the scenario (config file, seed, trial count) before
/// passing it to [`figure_specs`].
pub fn figure_base(fig: Figure, scale: Scale) -> ExperimentSpec {
    let d = dims(scale);
    let n = if fig == Figure::Fig3 { d.n_ofdma } else { d.n };
    base(n, d.trials)
}

/// The runs making up `fig`, each with the `sweep_param` label its rows get.
///
/// The sweep, the schemes and, for Fig. 2, the geometry case and `alpha`
/// are set here and override whatever `base` carries.
pub fn figure_specs(fig: Figure, scale: Scale, base: &ExperimentSpec) -> Vec<(String, ExperimentSpec)> {
    let devices = dims(scale).devices;
    let sdma_schemes = vec![
        SchemeKind::ApproachI,
        SchemeKind::ApproachIRandomEta,
        SchemeKind::ApproachII,
        SchemeKind::Oma,
    ];
    match fig {
        Figure::Fig1 => {
            let mut spec = base.clone();
            spec.config.geometry_case = GeometryCase::CaseI;
            spec.sweep = Sweep::Alpha(FIG1_ALPHAS.to_vec());
            spec.schemes = sdma_schemes;
            vec![("alpha".into(), spec)]
        }
        Figure::Fig2 => [(GeometryCase::CaseI, "n_devices_case_i"), (GeometryCase::CaseII, "n_devices_case_ii")]
            .into_iter()
            .map(|(case, label)| {
                let mut spec = base.clone();
                spec.config.alpha = 1e-3;
                spec.config.geometry_case = case;
                spec.sweep = Sweep::Devices(devices.clone());
                spec.schemes = sdma_schemes.clone();
                (label.to_string(), spec)
            })
            .collect(),
        Figure::Fig3 => {
            let mut spec = base.clone();
            spec.config.geometry_case = GeometryCase::CaseI;
            spec.sweep = Sweep::Devices(devices);
            spec.schemes = vec![SchemeKind::OfdmaNoma, SchemeKind::OfdmaOma];
            vec![("n_devices".into(), spec)]
        }
    }
}

/// Runs every part of `fig` and relabels rows with the part's label.
pub fn run_figure(fig: Figure, scale: Scale, base: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    let mut out = SweepResult::default();
    for (label, spec) in figure_specs(fig, scale, base) {
        let mut res = run_experiment(&spec)?;
        for row in &mut res.rows {
            row.sweep_param = label.clone();
        }
        out.extend(res);
    }
    Ok(out)
}
