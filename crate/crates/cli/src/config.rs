use std::path::Path;

use hood::detector::DEFAULT_QUANTILE;
use hood::dsp::DspConfig;
use hood::model::{ModelConfig, TrainConfig};
use hood::pipeline::BenchmarkConfig;
use hood::radar::RadarConfig;
use hood::{HoodError, Result};
use serde::Deserialize;

/// Settings shared by every subcommand, read from a TOML file. Command-line
/// flags override individual fields.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub radar: RadarConfig,
    pub dsp: DspConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub quantile: f64,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            radar: RadarConfig::default(),
            dsp: DspConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            quantile: DEFAULT_QUANTILE,
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)?;
        let config: Self = toml::from_str(&text).map_err(|e| HoodError::Parse(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.dsp.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(HoodError::InvalidConfig(format!("quantile must be in (0, 1), got {}", self.quantile)));
        }
        self.benchmark.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("quantile = 0.8\n[train]\nepochs = 3\n[model]\nlatent_dim = 8\n").unwrap();
        assert_eq!(c.quantile, 0.8);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.model.input_hw, 64);
        assert_eq!(c.radar, RadarConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3\n").is_err());
    }
}
