use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use hopf_cl::energy::EnergyConfig;
use hopf_cl::models::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_points: usize,
    pub length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_points: 256,
            length: 2.0 * PI / 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub t_end: f64,
    /// Size of each Fourier mode of the random initial state.
    pub amplitude: f64,
    pub modes: i64,
    pub stride: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            t_end: 20.0,
            amplitude: 0.02,
            modes: 5,
            stride: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub k_max: f64,
    pub samples: usize,
    /// Finite-difference step near `k = 0`.
    pub h: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            k_max: 2.0,
            samples: 400,
            h: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmplitudeRunConfig {
    /// TOML file with raw coefficients; the toy values are used otherwise.
    pub coefficients: Option<PathBuf>,
    pub n_points: usize,
    pub length: f64,
    pub t_end: f64,
    pub dt: f64,
    pub checkpoint: f64,
    /// `E₀` of the random initial state.
    pub energy: f64,
    pub modes: usize,
}

impl Default for AmplitudeRunConfig {
    fn default() -> Self {
        Self {
            coefficients: None,
            n_points: 64,
            length: 2.0 * PI,
            t_end: 10.0,
            dt: 0.01,
            checkpoint: 0.1,
            energy: 10.0,
            modes: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalConfig {
    pub delta: f64,
    pub cycles: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self { delta: 0.1, cycles: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub base: String,
    pub parameter: String,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: "approximation".into(),
            parameter: "delta".into(),
            values: vec![0.2, 0.1, 0.05],
        }
    }
}

pub const SWEEP_PARAMETERS: &[&str] = &["delta", "omega0", "theta", "seed", "eps_ratio", "r0"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: ModelSpec,
    pub deltas: Vec<f64>,
    /// Fixed `ε`; must not exceed the smallest δ.
    pub eps: Option<f64>,
    /// `ε/δ` when `eps` is absent.
    pub eps_ratio: f64,
    pub theta: u32,
    pub t0: f64,
    pub t1: f64,
    /// Fast step; each experiment picks its own default when absent.
    pub dt: Option<f64>,
    pub seed: u64,
    pub r0: f64,
    pub delta_tilde: f64,
    pub grid: GridConfig,
    pub simulate: SimulateConfig,
    pub spectrum: SpectrumConfig,
    pub amplitude: AmplitudeRunConfig,
    pub energy: EnergyConfig,
    pub global: GlobalConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: ModelSpec::Toy { omega0: 1.0, eps: 0.0 },
            deltas: vec![0.2, 0.1, 0.05],
            eps: None,
            eps_ratio: 1.0,
            theta: 2,
            t0: 1.0,
            t1: 0.5,
            dt: None,
            seed: 1,
            r0: 2.0,
            delta_tilde: 0.5,
            grid: GridConfig::default(),
            simulate: SimulateConfig::default(),
            spectrum: SpectrumConfig::default(),
            amplitude: AmplitudeRunConfig::default(),
            energy: EnergyConfig::default(),
            global: GlobalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    /// Relative paths inside the file are resolved against its directory.
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(c), Some(dir)) = (&cfg.amplitude.coefficients, path.parent()) {
            if c.is_relative() {
                cfg.amplitude.coefficients = Some(dir.join(c));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.deltas.is_empty() {
            return Err(bad("deltas must not be empty"));
        }
        if self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(bad(format!("deltas must lie in (0, 1): {:?}", self.deltas)));
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(bad(format!("deltas must be strictly decreasing: {:?}", self.deltas)));
        }
        let min_delta = self.deltas.iter().cloned().fold(f64::INFINITY, f64::min);
        match self.eps {
            Some(e) if !(e > 0.0 && e <= min_delta) => {
                return Err(bad(format!("eps = {e} must satisfy 0 < eps <= min delta = {min_delta}")));
            }
            None if !(self.eps_ratio > 0.0 && self.eps_ratio <= 1.0) => {
                return Err(bad(format!("eps_ratio = {} must lie in (0, 1]", self.eps_ratio)));
            }
            _ => {}
        }
        if !(1..=3).contains(&self.theta) {
            return Err(bad(format!("theta = {} outside 1..=3", self.theta)));
        }
        for (name, v) in [("t0", self.t0), ("t1", self.t1), ("r0", self.r0), ("delta_tilde", self.delta_tilde)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(bad(format!("dt must be positive, got {dt}")));
            }
        }
        if let Some(p) = &self.amplitude.coefficients {
            if !p.is_file() {
                return Err(bad(format!("coefficient file {} does not exist", p.display())));
            }
        }
        if !(self.global.delta > 0.0 && self.global.delta < 1.0) {
            return Err(bad(format!("global.delta must lie in (0, 1), got {}", self.global.delta)));
        }
        if !SWEEP_PARAMETERS.contains(&self.sweep.parameter.as_str()) {
            return Err(bad(format!(
                "sweep.parameter '{}' is not one of {SWEEP_PARAMETERS:?}",
                self.sweep.parameter
            )));
        }
        Ok(())
    }

    /// `ω₀` of the toy system; the hierarchy is implemented for it only.
    pub fn toy_omega0(&self) -> Result<f64, CliError> {
        match self.system {
            ModelSpec::Toy { omega0, .. } => Ok(omega0),
            _ => Err(bad("this experiment is implemented for the toy system only")),
        }
    }

    /// Returns a copy with one sweep parameter replaced.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self, CliError> {
        let mut c = self.clone();
        match name {
            "delta" => {
                c.deltas = vec![value];
                c.global.delta = value;
            }
            "omega0" => match &mut c.system {
                ModelSpec::Toy { omega0, .. } => *omega0 = value,
                _ => return Err(bad("omega0 sweeps need the toy system")),
            },
            "theta" => c.theta = value as u32,
            "seed" => c.seed = value as u64,
            "eps_ratio" => c.eps_ratio = value,
            "r0" => c.r0 = value,
            other => return Err(bad(format!("unknown sweep parameter '{other}'"))),
        }
        Ok(c)
    }
}
