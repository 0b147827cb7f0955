//! Run configuration: environment, training and analysis blocks plus the
//! master seed, loadable from TOML with unknown keys rejected. Every run
//! directory receives a fully resolved echo so results are reproducible
//! from that file alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::config::EnvConfig;
use crate::error::{Error, Result};
use crate::ppo::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Ridge cross-validation grid.
    pub alpha_grid: Vec<f64>,
    /// Decoding offsets.
    pub dts: Vec<i64>,
    /// Occupancy-entropy bin side, in cells.
    pub bin_size: usize,
    /// Patch clustering radius, in cells.
    pub patch_radius: f64,
    /// Minimum steps away before a return counts as a revisit.
    pub revisit_gap: usize,
    /// Steps before an eat event at which the choice is evaluated.
    pub decision_offset: usize,
    /// Drinks within this distance of a patch center credit that patch.
    pub drink_radius: f64,
    pub segment_window: usize,
    pub segment_k: usize,
    /// EMA half-life for curve smoothing, in iterations.
    pub ema_halflife: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha_grid: crate::decoding::default_alpha_grid(),
            dts: (-10..=10).map(|k| k * 10).collect(),
            bin_size: 4,
            patch_radius: 6.0,
            revisit_gap: 100,
            decision_offset: 50,
            drink_radius: 8.0,
            segment_window: 7,
            segment_k: 3,
            ema_halflife: 100.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, message: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    key: format!("analysis.{key}"),
                    message: message.to_owned(),
                })
            }
        };
        check(!self.alpha_grid.is_empty(), "alpha_grid", "must be non-empty")?;
        check(
            self.alpha_grid.iter().all(|&a| a > 0.0),
            "alpha_grid",
            "entries must be > 0",
        )?;
        check(!self.dts.is_empty(), "dts", "must be non-empty")?;
        check(self.bin_size >= 1, "bin_size", "must be >= 1")?;
        check(self.patch_radius > 0.0, "patch_radius", "must be > 0")?;
        check(self.segment_window >= 1, "segment_window", "must be >= 1")?;
        check(self.segment_k >= 1, "segment_k", "must be >= 1")?;
        check(self.ema_halflife > 0.0, "ema_halflife", "must be > 0")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stream in the run derives from it. Overrides
    /// `train.seed` when the run is dispatched.
    pub seed: u64,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: RunConfig = toml::from_str(text)?;
        config.train.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        self.analysis.validate()?;
        Ok(())
    }

    /// Write the fully resolved config echo.
    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config {
                key: "echo".into(),
                message: e.to_string(),
            })?;
        std::fs::write(dir.join("config.echo.toml"), text)?;
        Ok(())
    }
}
