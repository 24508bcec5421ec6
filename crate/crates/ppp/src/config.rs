//! Run configuration, read from TOML.
//!
//! ```toml
//! model = "lgcp"
//! window = [0.0, 1.0, 0.0, 1.0]
//! n_train = 10000
//! n_test = 5000
//! seed = 1
//!
//! [ranges]
//! mu = [4.0, 6.0]
//! sigma2 = [0.0, 4.0]
//! s = [0.001, 0.1]
//!
//! [grid]          # optional
//! len = 513
//! r_max = 0.25    # default: a quarter of the shorter window side
//!
//! [simulation]    # optional
//! resolution = 32
//! strauss_iterations = 100000
//! lgcp_strauss_iterations = 200000
//!
//! [training]      # optional
//! epochs = 20
//! batch_size = 100
//! learning_rate = 0.001
//! seed = 0
//!
//! [output]        # optional
//! train = "train.bin"
//! test = "test.bin"
//! model = "model.ppnn"
//! history = "history.csv"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ppp_core::nn::TrainOptions;
use ppp_core::simulate::{
    ModelKind, SimulationSettings, DEFAULT_FIELD_RESOLUTION, DEFAULT_LGCP_STRAUSS_ITERATIONS,
    DEFAULT_STRAUSS_ITERATIONS,
};
use ppp_core::sumstats::{r_grid, DEFAULT_GRID_LEN};
use ppp_core::Window;
use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid_len")]
    pub len: usize,
    #[serde(default)]
    pub r_max: Option<f64>,
}

fn default_grid_len() -> usize {
    DEFAULT_GRID_LEN
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            len: DEFAULT_GRID_LEN,
            r_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub resolution: usize,
    pub strauss_iterations: usize,
    pub lgcp_strauss_iterations: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_FIELD_RESOLUTION,
            strauss_iterations: DEFAULT_STRAUSS_ITERATIONS,
            lgcp_strauss_iterations: DEFAULT_LGCP_STRAUSS_ITERATIONS,
        }
    }
}

impl From<SimulationConfig> for SimulationSettings {
    fn from(c: SimulationConfig) -> Self {
        Self {
            resolution: c.resolution,
            strauss_iterations: c.strauss_iterations,
            lgcp_strauss_iterations: c.lgcp_strauss_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds weight initialisation and batch shuffling.
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let d = TrainOptions::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub model: PathBuf,
    pub history: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            train: "train.bin".into(),
            test: "test.bin".into(),
            model: "model.ppnn".into(),
            history: "history.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    /// `[x_min, x_max, y_min, y_max]`.
    pub window: [f64; 4],
    pub ranges: BTreeMap<String, [f64; 2]>,
    pub n_train: usize,
    #[serde(default)]
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).at(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Paper study setups: `lgcp`, `strauss`, `lgcp-strauss` on the unit
    /// square and `oak` (LGCP-Strauss on a 125 × 188 m plot).
    pub fn preset(name: &str) -> Result<Self> {
        let unit = [0.0, 1.0, 0.0, 1.0];
        let (model, window, ranges, n_train): (&str, [f64; 4], &[(&str, [f64; 2])], usize) =
            match name {
                "lgcp" => (
                    "lgcp",
                    unit,
                    &[("mu", [4.0, 6.0]), ("sigma2", [0.0, 4.0]), ("s", [0.001, 0.1])],
                    10_000,
                ),
                "strauss" => (
                    "strauss",
                    unit,
                    &[("beta", [200.0, 900.0]), ("gamma", [0.0, 1.0]), ("R", [0.0, 0.05])],
                    5_000,
                ),
                "lgcp-strauss" => (
                    "lgcp-strauss",
                    unit,
                    &[
                        ("mu", [4.5, 6.0]),
                        ("sigma2", [0.0, 4.0]),
                        ("s", [0.001, 0.1]),
                        ("gamma", [0.0, 1.0]),
                        ("R", [0.0, 0.05]),
                    ],
                    40_000,
                ),
                "oak" => (
                    "lgcp-strauss",
                    [0.0, 125.0, 0.0, 188.0],
                    &[
                        ("mu", [-5.6, -3.0]),
                        ("sigma2", [0.0, 2.0]),
                        ("s", [0.001, 15.0]),
                        ("gamma", [0.0, 0.7]),
                        ("R", [1.0, 5.0]),
                    ],
                    40_000,
                ),
                other => return Err(Error::Invalid(format!("unknown preset {other:?}"))),
            };
        let cfg = Self {
            model: model.into(),
            window,
            ranges: ranges.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            n_train,
            n_test: 5_000,
            seed: 1,
            grid: GridConfig::default(),
            simulation: SimulationConfig::default(),
            training: TrainingConfig::default(),
            output: OutputConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.model)
            .ok_or_else(|| Error::Invalid(format!("unknown model {:?}", self.model)))
    }

    pub fn window(&self) -> Result<Window> {
        let [a, b, c, d] = self.window;
        Ok(Window::new(a, b, c, d)?)
    }

    pub fn r_max(&self) -> Result<f64> {
        Ok(self
            .grid
            .r_max
            .unwrap_or_else(|| self.window().map(|w| w.shorter_side() / 4.0).unwrap_or(0.0)))
    }

    pub fn r_grid(&self) -> Result<Vec<f64>> {
        Ok(r_grid(self.r_max()?, self.grid.len))
    }

    pub fn settings(&self) -> SimulationSettings {
        self.simulation.into()
    }

    /// Ranges in the model's parameter order.
    pub fn ordered_ranges(&self) -> Result<Vec<[f64; 2]>> {
        let kind = self.kind()?;
        kind.parameter_names()
            .iter()
            .map(|n| {
                self.ranges
                    .get(*n)
                    .copied()
                    .ok_or_else(|| Error::Invalid(format!("no range for parameter {n}")))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        self.window()?;
        for name in self.ranges.keys() {
            if !kind.parameter_names().contains(&name.as_str()) {
                return Err(Error::Invalid(format!(
                    "{name} is not a parameter of {kind} (expected {})",
                    kind.parameter_names().join(", ")
                )));
            }
        }
        for (name, [lo, hi]) in kind.parameter_names().iter().zip(self.ordered_ranges()?) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Invalid(format!("range for {name} is [{lo}, {hi}]")));
            }
        }
        if self.n_train == 0 {
            return Err(Error::Invalid("n_train must be at least 1".into()));
        }
        let r_max = self.r_max()?;
        if !(r_max > 0.0 && r_max.is_finite()) || self.grid.len < 2 {
            return Err(Error::Invalid(format!(
                "grid of {} values up to {r_max}",
                self.grid.len
            )));
        }
        if self.training.batch_size == 0 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        Ok(())
    }
}
