//! Run configuration: flat, sectioned `key = value` text (TOML) with
//! defaults reproducing the reference parameter set. Unknown keys are
//! rejected by name so a typo cannot silently fall back to a default.

use thiserror::Error;

use crate::dynamics::Branch;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("configuration is not valid TOML: {0}")]
    Parse(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("configuration key `{key}` expects {expected}")]
    BadValue { key: String, expected: &'static str },
}

/// Qubit and ETLS energy scales (linear GHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitSection {
    pub epsilon0_ghz: f64,
    pub t0_ghz: f64,
    pub omega_a_ghz: f64,
    pub t0a_ghz: f64,
    pub omega_delta_ghz: f64,
}

/// Entanglement pulse controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSection {
    /// Rabi amplitude in linear MHz (converted by 2 pi internally).
    pub rabi_mhz: f64,
    /// Carrier phase (rad).
    pub phase_rad: f64,
    /// Which conditional transition the carrier addresses.
    pub branch: Branch,
}

/// Dephasing noise controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSection {
    /// Noise amplitude in linear GHz.
    pub sigma_f_ghz: f64,
    /// Correlation time (ns).
    pub tau_c_ns: f64,
}

/// rf-SQUID circuit values and eigensolver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquidSection {
    pub l_ph: f64,
    pub ic_ua: f64,
    pub cj_ff: f64,
    pub f_rf: f64,
    pub grid_points: usize,
    pub n_levels: usize,
    /// Well displacement for the displaced-oscillator overlap figure.
    pub delta_phi0: f64,
    /// Ground-state phase variance for the same figure.
    pub var_phi: f64,
}

/// Switching-detector phenomenology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSection {
    pub y0: f64,
    pub y1: f64,
    /// Component variance (squared detector units).
    pub sigma: f64,
    /// Mixture weight of the `y0` component.
    pub weight: f64,
    /// Samples drawn by the histogram scenario.
    pub n_samples: usize,
    /// Target accuracy for the repetition counts.
    pub a_m: f64,
}

/// Execution controls shared across scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    /// Idle/noise window (ns) for scenarios that evolve past the pulse.
    pub t_total_ns: f64,
    /// Ensemble size for noise averaging.
    pub n_traj: usize,
    /// Integration step (ns); unset picks the finest scale automatically.
    pub dt_ns: Option<f64>,
}

/// End-to-end protocol controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolSection {
    /// True qubit ground population |c0|^2 prepared before the pulse.
    pub c0_sq: f64,
    /// Number of projective shots.
    pub shots: usize,
}

/// Full parsed configuration; every field has a default, so an empty file
/// (or no file) reproduces the reference runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub qubit: QubitSection,
    pub pulse: PulseSection,
    pub noise: NoiseSection,
    pub squid: SquidSection,
    pub histogram: HistogramSection,
    pub run: RunSection,
    pub protocol: ProtocolSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            qubit: QubitSection {
                epsilon0_ghz: 13.0,
                t0_ghz: 1.0,
                omega_a_ghz: 11.0,
                t0a_ghz: 0.0,
                omega_delta_ghz: 3.0,
            },
            pulse: PulseSection {
                rabi_mhz: 50.0,
                phase_rad: std::f64::consts::PI,
                branch: Branch::QubitOne,
            },
            noise: NoiseSection {
                sigma_f_ghz: 0.0005,
                tau_c_ns: 10.0,
            },
            squid: SquidSection {
                l_ph: 154.0,
                ic_ua: 4.0,
                cj_ff: 40.0,
                f_rf: 0.4365,
                grid_points: 4001,
                n_levels: 26,
                delta_phi0: 0.002,
                var_phi: 0.01,
            },
            histogram: HistogramSection {
                y0: 0.0,
                y1: 1.0,
                sigma: 625.0,
                weight: 0.5,
                n_samples: 250_000,
                a_m: 0.05,
            },
            run: RunSection {
                seed: 42,
                t_total_ns: 100.0,
                n_traj: 200,
                dt_ns: None,
            },
            protocol: ProtocolSection {
                c0_sq: 0.5,
                shots: 400,
            },
        }
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(x) => Ok(*x as f64),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            expected: "a number",
        }),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize, ConfigError> {
    match v {
        toml::Value::Integer(x) if *x >= 0 => Ok(*x as usize),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            expected: "a nonnegative integer",
        }),
    }
}

fn as_u64(key: &str, v: &toml::Value) -> Result<u64, ConfigError> {
    match v {
        toml::Value::Integer(x) if *x >= 0 => Ok(*x as u64),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            expected: "a nonnegative integer",
        }),
    }
}

fn as_branch(key: &str, v: &toml::Value) -> Result<Branch, ConfigError> {
    match v {
        toml::Value::String(s) if s == "qubit_one" => Ok(Branch::QubitOne),
        toml::Value::String(s) if s == "qubit_zero" => Ok(Branch::QubitZero),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            expected: "\"qubit_one\" or \"qubit_zero\"",
        }),
    }
}

impl RunConfig {
    /// Parses configuration text, starting from the defaults and rejecting
    /// any key that does not name a known field.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut cfg = Self::default();
        for (section, value) in &table {
            let entries = match value {
                toml::Value::Table(t) => t,
                _ => return Err(ConfigError::UnknownKey(section.clone())),
            };
            for (key, v) in entries {
                let dotted = format!("{section}.{key}");
                cfg.apply(section, key, &dotted, v)?;
            }
        }
        Ok(cfg)
    }

    fn apply(
        &mut self,
        section: &str,
        key: &str,
        dotted: &str,
        v: &toml::Value,
    ) -> Result<(), ConfigError> {
        match (section, key) {
            ("qubit", "epsilon0_ghz") => self.qubit.epsilon0_ghz = as_f64(dotted, v)?,
            ("qubit", "t0_ghz") => self.qubit.t0_ghz = as_f64(dotted, v)?,
            ("qubit", "omega_a_ghz") => self.qubit.omega_a_ghz = as_f64(dotted, v)?,
            ("qubit", "t0a_ghz") => self.qubit.t0a_ghz = as_f64(dotted, v)?,
            ("qubit", "omega_delta_ghz") => self.qubit.omega_delta_ghz = as_f64(dotted, v)?,
            ("pulse", "rabi_mhz") => self.pulse.rabi_mhz = as_f64(dotted, v)?,
            ("pulse", "phase_rad") => self.pulse.phase_rad = as_f64(dotted, v)?,
            ("pulse", "branch") => self.pulse.branch = as_branch(dotted, v)?,
            ("noise", "sigma_f_ghz") => self.noise.sigma_f_ghz = as_f64(dotted, v)?,
            ("noise", "tau_c_ns") => self.noise.tau_c_ns = as_f64(dotted, v)?,
            ("squid", "l_ph") => self.squid.l_ph = as_f64(dotted, v)?,
            ("squid", "ic_ua") => self.squid.ic_ua = as_f64(dotted, v)?,
            ("squid", "cj_ff") => self.squid.cj_ff = as_f64(dotted, v)?,
            ("squid", "f_rf") => self.squid.f_rf = as_f64(dotted, v)?,
            ("squid", "grid_points") => self.squid.grid_points = as_usize(dotted, v)?,
            ("squid", "n_levels") => self.squid.n_levels = as_usize(dotted, v)?,
            ("squid", "delta_phi0") => self.squid.delta_phi0 = as_f64(dotted, v)?,
            ("squid", "var_phi") => self.squid.var_phi = as_f64(dotted, v)?,
            ("histogram", "y0") => self.histogram.y0 = as_f64(dotted, v)?,
            ("histogram", "y1") => self.histogram.y1 = as_f64(dotted, v)?,
            ("histogram", "sigma") => self.histogram.sigma = as_f64(dotted, v)?,
            ("histogram", "weight") => self.histogram.weight = as_f64(dotted, v)?,
            ("histogram", "n_samples") => self.histogram.n_samples = as_usize(dotted, v)?,
            ("histogram", "a_m") => self.histogram.a_m = as_f64(dotted, v)?,
            ("run", "seed") => self.run.seed = as_u64(dotted, v)?,
            ("run", "t_total_ns") => self.run.t_total_ns = as_f64(dotted, v)?,
            ("run", "n_traj") => self.run.n_traj = as_usize(dotted, v)?,
            ("run", "dt_ns") => self.run.dt_ns = Some(as_f64(dotted, v)?),
            ("protocol", "c0_sq") => self.protocol.c0_sq = as_f64(dotted, v)?,
            ("protocol", "shots") => self.protocol.shots = as_usize(dotted, v)?,
            _ => return Err(ConfigError::UnknownKey(dotted.to_string())),
        }
        Ok(())
    }

    /// Reads and parses a configuration file.
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.qubit.epsilon0_ghz, 13.0);
        assert_eq!(cfg.pulse.rabi_mhz, 50.0);
        assert_eq!(cfg.noise.tau_c_ns, 10.0);
        assert_eq!(cfg.squid.f_rf, 0.4365);
        assert_eq!(cfg.run.seed, 42);
    }

    #[test]
    fn overrides_apply_and_integers_coerce() {
        let cfg = RunConfig::parse(
            "[qubit]\nepsilon0_ghz = 13\nomega_delta_ghz = 0.0\n\
             [pulse]\nrabi_mhz = 100\nbranch = \"qubit_zero\"\n\
             [run]\nseed = 7\ndt_ns = 0.001\n",
        )
        .unwrap();
        assert_eq!(cfg.qubit.epsilon0_ghz, 13.0);
        assert_eq!(cfg.qubit.omega_delta_ghz, 0.0);
        assert_eq!(cfg.pulse.rabi_mhz, 100.0);
        assert_eq!(cfg.pulse.branch, Branch::QubitZero);
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.run.dt_ns, Some(0.001));
        // Untouched sections keep their defaults.
        assert_eq!(cfg.squid.grid_points, 4001);
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let err = RunConfig::parse("[qubit]\nepsilon_ghz = 13\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey("qubit.epsilon_ghz".to_string())
        );
        let err = RunConfig::parse("[qubits]\nepsilon0_ghz = 13\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey("qubits.epsilon0_ghz".to_string())
        );
        let err = RunConfig::parse("loose = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("loose".to_string()));
    }

    #[test]
    fn type_errors_name_the_key() {
        let err = RunConfig::parse("[run]\nseed = -3\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { ref key, .. } if key == "run.seed"));
        let err = RunConfig::parse("[pulse]\nbranch = \"both\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { ref key, .. } if key == "pulse.branch"));
        let err = RunConfig::parse("[squid]\ngrid_points = 10.5\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::BadValue { ref key, .. } if key == "squid.grid_points")
        );
    }

    #[test]
    fn malformed_toml_is_a_parse_error() {
        assert!(matches!(
            RunConfig::parse("[qubit\nepsilon0_ghz = 13"),
            Err(ConfigError::Parse(_))
        ));
    }
}
