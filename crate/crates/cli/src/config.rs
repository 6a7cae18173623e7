//! Run configuration files.
//!
//! A configuration is a TOML document. Top-level keys come first, then the
//! `[model]`, `[grid]`, `[initial]` and optional `[step]` tables:
//!
//! ```toml
//! seed = 7
//! t_end = 2.0
//! snapshot_times = [0.5, 2.0]
//! p_list = [3.0]
//! formula_variant = "plus-md"
//!
//! [model]
//! d = 1
//! s = 0.5
//! m = 0.5
//! regime = "fast-diffusion"
//! epsilon = 1e-3
//!
//! [grid]
//! n = 256
//!
//! [initial]
//! shape = "cosine-bump"
//! amplitude = 0.5
//! wavevector = [1, 0]
//! target_mass = 1.0
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;

use nlpm::barriers::FormulaVariant;
use nlpm::dynamics::{prepare_initial_data, InitialDataSpec, InitialKind, RunOptions, StepControl};
use nlpm::operators::{ModelParams, Regime};
use nlpm::theorems::random_band_limited_field;
use nlpm::torus::{make_grid, Field, TorusGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Why a configuration was rejected. The message names the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds random initial data; recorded with every run.
    #[serde(default)]
    pub seed: u64,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Extra `L^p` exponents recorded on top of `1, 2, 3, 1 ∓ m, ∞`.
    #[serde(default)]
    pub p_list: Vec<f64>,
    #[serde(default)]
    pub formula_variant: FormulaVariant,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub step: StepControl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub s: f64,
    pub m: f64,
    pub regime: Regime,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis.
    pub n: usize,
}

fn unit_mass() -> f64 {
    1.0
}

fn first_mode() -> [i64; 2] {
    [1, 0]
}

fn half() -> f64 {
    0.5
}

/// Initial data before the `ε` floor, selected by `shape`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant {
        #[serde(default = "unit_mass")]
        target_mass: f64,
    },
    CosineBump {
        amplitude: f64,
        #[serde(default = "first_mode")]
        wavevector: [i64; 2],
        #[serde(default = "unit_mass")]
        target_mass: f64,
    },
    ApproxDirac {
        spectral_width: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "unit_mass")]
        target_mass: f64,
    },
    /// Random trigonometric polynomial with modes `|k|_∞ ≤ max_mode` drawn
    /// from `seed`, spanning `[floor, floor + 1]` before it is scaled to
    /// mean `target_mass`.
    Random {
        max_mode: i64,
        #[serde(default = "half")]
        floor: f64,
        #[serde(default = "unit_mass")]
        target_mass: f64,
    },
}

impl InitialConfig {
    pub fn target_mass(&self) -> f64 {
        match self {
            InitialConfig::Constant { target_mass }
            | InitialConfig::CosineBump { target_mass, .. }
            | InitialConfig::ApproxDirac { target_mass, .. }
            | InitialConfig::Random { target_mass, .. } => *target_mass,
        }
    }
}

impl RunConfig {
    /// Reads and validates a configuration file.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// Parses and validates a configuration document.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string().trim_end().to_owned()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configurations always serialize")
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        let m = &self.model;
        ModelParams::new(m.d, m.s, m.m, m.regime, m.epsilon).map_err(|e| keyed("model", e))
    }

    pub fn torus(&self) -> Result<TorusGrid, ConfigError> {
        make_grid(self.model.d, self.grid.n).map_err(|e| keyed("grid", e))
    }

    /// Recorded norms and ledger exponents.
    pub fn run_options(&self, params: &ModelParams) -> RunOptions {
        let mut options = RunOptions::for_params(params);
        for &p in &self.p_list {
            if !options.p_list.contains(&p) {
                options.p_list.push(p);
            }
        }
        // Keep ∞ last so the CSV columns read from small to large p.
        options.p_list.sort_by(|a, b| a.total_cmp(b));
        options
    }

    /// The initial field, `ε` floor included.
    pub fn initial_field(&self) -> Result<Field, ConfigError> {
        let params = self.params()?;
        let grid = self.torus()?;
        let target_mass = self.initial.target_mass();
        let kind = match self.initial {
            InitialConfig::Constant { target_mass } => InitialKind::Constant { value: target_mass },
            InitialConfig::CosineBump { amplitude, wavevector, .. } => {
                InitialKind::CosineBump { amplitude, wavevector }
            }
            InitialConfig::ApproxDirac { spectral_width, center, .. } => {
                InitialKind::ApproxDirac { center, spectral_width }
            }
            InitialConfig::Random { max_mode, floor, target_mass } => {
                if !(1..=grid.points_per_axis() as i64 / 4).contains(&max_mode) {
                    return Err(ConfigError(format!(
                        "invalid initial.max_mode: need 1 <= max_mode <= n/4 = {}, got {max_mode}",
                        grid.points_per_axis() / 4
                    )));
                }
                if !(0.0..1.0).contains(&floor) {
                    return Err(ConfigError(format!("invalid initial.floor: need 0 <= floor < 1, got {floor}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let raw = random_band_limited_field(grid, max_mode, floor, &mut rng);
                let scale = target_mass / raw.mean();
                InitialKind::Custom { samples: raw.values().iter().map(|v| v * scale).collect() }
            }
        };
        prepare_initial_data(&InitialDataSpec { kind, target_mass }, &params, grid).map_err(|e| keyed("initial", e))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.params()?;
        self.torus()?;
        self.step.validate().map_err(|e| keyed("step", e))?;
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(ConfigError(format!("invalid t_end: need t_end > 0, got {}", self.t_end)));
        }
        let times = &self.snapshot_times;
        if times.windows(2).any(|w| w[0] >= w[1]) || times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_end)) {
            return Err(ConfigError(format!(
                "invalid snapshot_times: need strictly increasing times in [0, t_end = {}]",
                self.t_end
            )));
        }
        if let Some(p) = self.p_list.iter().find(|p| !(**p > 0.0)) {
            return Err(ConfigError(format!("invalid p_list: exponents must be positive, got {p}")));
        }
        self.initial_field()?;
        Ok(())
    }
}

/// Prefixes the failing parameter with its table, e.g. `model.s`.
fn keyed(table: &str, err: nlpm::Error) -> ConfigError {
    match err {
        nlpm::Error::Validation { what, reason } => {
            let key = match what {
                "dimension" => "d",
                "grid size" => "n",
                "initial data" => "samples",
                other => other,
            };
            ConfigError(format!("invalid {table}.{key}: {reason}"))
        }
        other => ConfigError(format!("invalid {table}: {other}")),
    }
}
