//! Flat `key = value` experiment files.
//!
//! ```text
//! # Fig. 2 style device sweep
//! n_antennas = 4
//! n_downlink = 4
//! alpha = 0.001
//! tau_policy = fixed_tau(0.01)
//! geometry_case = case_ii
//! sweep = n_devices(1, 2, 3, 4)
//! schemes = ApproachI, ApproachII, OMA
//! n_trials = 200
//! ```
//!
//! Keys are the field names of the scenario, the experiment and the solver
//! options. Unknown or repeated keys are errors.

use std::path::{Path, PathBuf};

use bacnoma_core::geometry::{GeometryCase, InterferenceNorm, SiCovariance, TauPolicy};

use crate::dump;
use crate::experiment::{ExperimentSpec, Sweep};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}:{line}: expected `key = value`")]
    Syntax { origin: String, line: usize },
    #[error("{origin}:{line}: unknown key `{key}`")]
    UnknownKey { origin: String, line: usize, key: String },
    #[error("{origin}:{line}: `{key}` given twice")]
    Duplicate { origin: String, line: usize, key: String },
    #[error("{origin}:{line}: invalid value for `{key}`: {reason}")]
    Value {
        origin: String,
        line: usize,
        key: String,
        reason: String,
    },
}

pub const KEYS: &[&str] = &[
    "n_antennas",
    "n_downlink",
    "n_devices",
    "p0_dbm",
    "alpha",
    "noise_dbm",
    "path_loss_exp",
    "tau_policy",
    "geometry_case",
    "side_m",
    "rng_seed",
    "si_covariance",
    "interference_norm",
    "sweep",
    "n_trials",
    "n_excitations",
    "schemes",
    "max_iters",
    "tolerance",
    "initial_step",
    "shrink",
    "armijo",
    "dykstra_tolerance",
    "dykstra_max_sweeps",
];

/// Reads `path` and applies its keys on top of `spec`.
pub fn load_into(path: &Path, spec: &mut ExperimentSpec) -> Result<(), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    apply(&text, &path.display().to_string(), base, spec)
}

/// Applies the keys in `text` to `spec`; `base` resolves relative file names.
pub fn apply(text: &str, origin: &str, base: &Path, spec: &mut ExperimentSpec) -> Result<(), ConfigError> {
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                origin: origin.into(),
                line,
            });
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::UnknownKey {
                origin: origin.into(),
                line,
                key: key.into(),
            });
        };
        if seen.contains(&known) {
            return Err(ConfigError::Duplicate {
                origin: origin.into(),
                line,
                key: key.into(),
            });
        }
        seen.push(known);
        set(spec, known, value, base).map_err(|reason| ConfigError::Value {
            origin: origin.into(),
            line,
            key: key.into(),
            reason,
        })?;
    }
    Ok(())
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a valid number"))
}

/// `name(a, b, c)` → `("name", ["a", "b", "c"])`; a bare word has no arguments.
fn call(v: &str) -> Result<(&str, Vec<&str>), String> {
    match v.split_once('(') {
        None => Ok((v, Vec::new())),
        Some((name, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| format!("missing `)` in `{v}`"))?;
            let args = inner.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            Ok((name.trim(), args))
        }
    }
}

fn list<T: std::str::FromStr>(args: &[&str]) -> Result<Vec<T>, String> {
    if args.is_empty() {
        return Err("expected at least one value".into());
    }
    args.iter().map(|a| num(a)).collect()
}

fn set(spec: &mut ExperimentSpec, key: &str, v: &str, base: &Path) -> Result<(), String> {
    let cfg = &mut spec.config;
    let opts = &mut spec.solver;
    match key {
        "n_antennas" => cfg.n_antennas = num(v)?,
        "n_downlink" => cfg.n_downlink = num(v)?,
        "n_devices" => cfg.n_devices = num(v)?,
        "p0_dbm" => cfg.p0_dbm = num(v)?,
        "alpha" => cfg.alpha = num(v)?,
        "noise_dbm" => cfg.noise_dbm = num(v)?,
        "path_loss_exp" => cfg.path_loss_exp = num(v)?,
        "side_m" => cfg.side_m = num(v)?,
        "rng_seed" => cfg.rng_seed = num(v)?,
        "tau_policy" => {
            cfg.tau_policy = match call(v)? {
                ("fixed_tau", args) if args.len() == 1 => TauPolicy::FixedTau(num(args[0])?),
                ("target_rate", args) => TauPolicy::TargetRate(list(&args)?),
                _ => return Err("expected `fixed_tau(<tau>)` or `target_rate(<r1>, ...)`".into()),
            }
        }
        "geometry_case" => {
            cfg.geometry_case = match v {
                "case_i" => GeometryCase::CaseI,
                "case_ii" => GeometryCase::CaseII,
                _ => return Err("expected `case_i` or `case_ii`".into()),
            }
        }
        "si_covariance" => {
            cfg.si_covariance = match call(v)? {
                ("identity", args) if args.is_empty() => SiCovariance::Identity,
                ("custom", args) if args.len() == 1 => {
                    let path = base.join(args[0]);
                    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    let blocks = dump::read_blocks(&text).map_err(|e| format!("{}: {e}", path.display()))?;
                    match <[_; 1]>::try_from(blocks) {
                        Ok([(_, m)]) => SiCovariance::Custom(m),
                        Err(_) => return Err(format!("{}: expected exactly one matrix block", path.display())),
                    }
                }
                _ => return Err("expected `identity` or `custom(<file>)`".into()),
            }
        }
        "interference_norm" => {
            cfg.interference_norm = match v {
                "vector_norm" => InterferenceNorm::VectorNorm,
                _ => return Err("only `vector_norm` is supported".into()),
            }
        }
        "sweep" => {
            spec.sweep = match call(v)? {
                ("fixed", args) if args.is_empty() => Sweep::Fixed,
                ("alpha", args) => Sweep::Alpha(list(&args)?),
                ("n_devices", args) => Sweep::Devices(list(&args)?),
                _ => return Err("expected `fixed`, `alpha(...)` or `n_devices(...)`".into()),
            }
        }
        "n_trials" => spec.n_trials = num(v)?,
        "n_excitations" => spec.n_excitations = num(v)?,
        "schemes" => {
            spec.schemes = v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, _>>()?;
        }
        "max_iters" => opts.max_iters = num(v)?,
        "tolerance" => opts.tolerance = num(v)?,
        "initial_step" => opts.initial_step = num(v)?,
        "shrink" => opts.shrink = num(v)?,
        "armijo" => opts.armijo = num(v)?,
        "dykstra_tolerance" => opts.dykstra_tolerance = num(v)?,
        "dykstra_max_sweeps" => opts.dykstra_max_sweeps = num(v)?,
        _ => unreachable!("key list and setter agree"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::SchemeKind;

    fn parse(text: &str) -> Result<ExperimentSpec, ConfigError> {
        let mut spec = ExperimentSpec::default();
        apply(text, "test.cfg", Path::new("."), &mut spec)?;
        Ok(spec)
    }

    #[test]
    fn full_file() {
        let spec = parse(
            "# comment\n\
             n_antennas = 6\n\
             alpha = 1e-2   # inline\n\
             tau_policy = target_rate(1, 2, 3, 4)\n\
             geometry_case = case_ii\n\
             sweep = n_devices(1, 2, 8)\n\
             schemes = ApproachI, OMA, OFDMA_NOMA\n\
             n_trials = 7\n\
             max_iters = 50\n",
        )
        .unwrap();
        assert_eq!(spec.config.n_antennas, 6);
        assert_eq!(spec.config.alpha, 1e-2);
        assert_eq!(spec.config.tau_policy, TauPolicy::TargetRate(vec![1.0, 2.0, 3.0, 4.0]));
        assert_eq!(spec.config.geometry_case, GeometryCase::CaseII);
        assert_eq!(spec.sweep, Sweep::Devices(vec![1, 2, 8]));
        assert_eq!(spec.schemes, vec![SchemeKind::ApproachI, SchemeKind::Oma, SchemeKind::OfdmaNoma]);
        assert_eq!(spec.n_trials, 7);
        assert_eq!(spec.solver.max_iters, 50);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = parse("alpha = 0.1\nalpah = 0.2\n").unwrap_err();
        assert_eq!(err.to_string(), "test.cfg:2: unknown key `alpah`");
    }

    #[test]
    fn bad_value_names_field() {
        let err = parse("\n\nn_trials = many\n").unwrap_err().to_string();
        assert!(err.starts_with("test.cfg:3: invalid value for `n_trials`"), "{err}");
        assert!(parse("sweep = alpha()\n").is_err());
        assert!(parse("tau_policy = fixed_tau(0.1, 0.2)\n").is_err());
        assert!(parse("schemes = ApproachIII\n").is_err());
    }

    #[test]
    fn syntax_and_duplicates() {
        assert!(matches!(parse("alpha 0.1\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse("alpha = 0.1\nalpha = 0.2\n"), Err(ConfigError::Duplicate { line: 2, .. })));
    }

    #[test]
    fn every_key_is_settable() {
        let sample = |k: &str| match k {
            "tau_policy" => "fixed_tau(0.5)",
            "geometry_case" => "case_i",
            "si_covariance" => "identity",
            "interference_norm" => "vector_norm",
            "sweep" => "alpha(0.1)",
            "schemes" => "OMA",
            "rng_seed" | "n_antennas" | "n_downlink" | "n_devices" | "n_trials" | "n_excitations"
            | "max_iters" | "dykstra_max_sweeps" => "3",
            _ => "0.5",
        };
        for k in KEYS {
            parse(&format!("{k} = {}\n", sample(k))).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn custom_si_from_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("si.txt"), "[c 2 2]\n2,0\n0,0\n0,0\n1,0\n").unwrap();
        let cfg_path = dir.path().join("run.cfg");
        std::fs::write(&cfg_path, "n_antennas = 2\nn_downlink = 2\nsi_covariance = custom(si.txt)\n").unwrap();
        let mut spec = ExperimentSpec::default();
        load_into(&cfg_path, &mut spec).unwrap();
        match spec.config.si_covariance {
            SiCovariance::Custom(m) => assert_eq!(m[(0, 0)].re, 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_names_path() {
        let mut spec = ExperimentSpec::default();
        let err = load_into(Path::new("missing.cfg"), &mut spec).unwrap_err();
        assert!(err.to_string().starts_with("missing.cfg"));
    }
}
