use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use infobridge::compensator::WeightFactor;
use infobridge::localtime::{EstimatorKind, DEFAULT_BANDWIDTH_C};
use infobridge::suite::exponential_single_pin;
use infobridge::{ModelSpec, QuadratureConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Occupation bandwidth is `bandwidth_c * sqrt(dt)`.
    pub bandwidth_c: f64,
    pub local_time: EstimatorKind,
    pub weight: WeightFactor,
    pub quadrature: QuadratureConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: exponential_single_pin(),
            dt: 1e-3,
            horizon: 2.0,
            n_paths: 1000,
            seed: 0x1b_2024,
            bandwidth_c: DEFAULT_BANDWIDTH_C,
            local_time: EstimatorKind::Bridge,
            weight: WeightFactor::PathValue,
            quadrature: QuadratureConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

/// Values given on the command line; each one replaces the config file entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

impl RunConfig {
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = overrides.seed {
            cfg.seed = v;
        }
        if let Some(v) = &overrides.out {
            cfg.out = v.clone();
        }
        if let Some(v) = overrides.paths {
            cfg.n_paths = v;
        }
        if let Some(v) = overrides.dt {
            cfg.dt = v;
        }
        if let Some(v) = overrides.horizon {
            cfg.horizon = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.quadrature.validate()?;
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.bandwidth_c > 0.0) {
            bail!("dt, horizon and bandwidth_c must be positive");
        }
        if self.dt >= self.horizon {
            bail!("dt = {} must be smaller than the horizon {}", self.dt, self.horizon);
        }
        if self.n_paths == 0 {
            bail!("n_paths must be positive");
        }
        Ok(())
    }

    /// Creates the output directory and returns the path of `name` inside it.
    pub fn output(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}
