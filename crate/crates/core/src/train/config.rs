use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::Strategy;

/// Training-time subsampling of every cloud, redrawn each epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleConfig {
    pub strategy: Strategy,
    pub fraction: f64,
}

/// Optimiser, schedule and regularisation settings.
///
/// In a config file every key except `train_subsample` is required and
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub train_subsample: Option<SubsampleConfig>,
}

impl TrainConfig {
    /// Defaults for frame-wise tasks (batches of 64 frames).
    pub fn frames() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 500,
            l2_lambda: 1e-3,
            batch_size: 64,
            seed: 0,
            train_subsample: None,
        }
    }

    /// Defaults for spectrogram tasks (batches of 32 spectrograms).
    pub fn spectrograms() -> Self {
        TrainConfig {
            batch_size: 32,
            ..Self::frames()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config(format!("l2_lambda must be non-negative, got {}", self.l2_lambda)));
        }
        if let Some(s) = &self.train_subsample {
            if !(s.fraction > 0.0 && s.fraction <= 1.0) {
                return Err(Error::Config(format!("train_subsample.fraction {} outside (0, 1]", s.fraction)));
            }
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::frames()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reported_setup() {
        let c = TrainConfig::default();
        assert_eq!((c.learning_rate, c.epochs, c.l2_lambda, c.batch_size), (1e-3, 500, 1e-3, 64));
        assert_eq!(TrainConfig::spectrograms().batch_size, 32);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = TrainConfig::frames();
        c.train_subsample = Some(SubsampleConfig {
            strategy: Strategy::Random,
            fraction: 0.0625,
        });
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn missing_key_is_named() {
        let text = "learning_rate = 0.001\nepochs = 5\nbatch_size = 8\nseed = 1\n";
        let err = TrainConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("l2_lambda"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = "learning_rate = 0.001\nepochs = 5\nl2_lambda = 0.0\nbatch_size = 8\nseed = 1\nmomentum = 0.9\n";
        let err = TrainConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("momentum"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = TrainConfig::frames();
        assert!(TrainConfig { learning_rate: 0.0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..base.clone() }.validate().is_err());
        let sub = Some(SubsampleConfig {
            strategy: Strategy::Random,
            fraction: 1.5,
        });
        assert!(TrainConfig { train_subsample: sub, ..base }.validate().is_err());
    }
}
