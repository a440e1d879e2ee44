use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::pointcloud::{MagnitudeScale, Strategy};
use crate::train::{Featurization, TrainConfig};

/// Model presets the CLI knows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    FstToy,
    Fst,
    Tst3,
    FbToy,
    Fb,
    Cnn,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::FstToy => "fst-toy",
            Preset::Fst => "fst",
            Preset::Tst3 => "tst3",
            Preset::FbToy => "fb-toy",
            Preset::Fb => "fb",
            Preset::Cnn => "cnn",
        }
    }

    pub fn spec(self, classes: usize) -> ModelSpec {
        match self {
            Preset::FstToy => ModelSpec::fst_toy(classes),
            Preset::Fst => ModelSpec::fst(classes),
            Preset::Tst3 => ModelSpec::tst3(classes),
            Preset::FbToy => ModelSpec::fb_toy(classes),
            Preset::Fb => ModelSpec::fb(classes),
            Preset::Cnn => ModelSpec::cnn(classes),
        }
    }

    /// Frame-wise presets use `N = 2048`, spectrogram presets 10-frame blocks at
    /// `N = 1024`, toy presets `N = 126` (64 bins) with linear magnitudes.
    pub fn featurization(self, sample_rate: u32) -> Featurization {
        let mut f = Featurization::for_model(self.spec(2).kind, sample_rate);
        if matches!(self, Preset::FstToy | Preset::FbToy) {
            f.n_fft = 126;
            f.scale.magnitude = MagnitudeScale::Linear;
        }
        f
    }

    pub fn train_config(self) -> TrainConfig {
        match self.spec(2).kind {
            ModelKind::Tst3 | ModelKind::Cnn => TrainConfig::spectrograms(),
            _ => TrainConfig::frames(),
        }
    }
}

/// Optional model overrides in a run config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub hidden: Option<usize>,
    pub heads: Option<usize>,
    pub inducing: Option<usize>,
    pub layer_norm: Option<bool>,
    pub lean: Option<bool>,
    pub fb_hidden: Option<Vec<usize>>,
    pub input_dropout: Option<f64>,
    pub cnn_channels: Option<usize>,
}

/// Optional featurisation overrides in a run config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureOverrides {
    pub n_fft: Option<usize>,
    pub frames: Option<usize>,
    pub max_per_clip: Option<usize>,
    pub magnitude: Option<MagnitudeScale>,
}

/// Sweep grid; unset lists fall back to defaults around the training settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub window_sizes: Option<Vec<usize>>,
    pub sample_rates: Option<Vec<u32>>,
    pub fractions: Option<Vec<f64>>,
    pub strategies: Option<Vec<Strategy>>,
    pub repeats: Option<usize>,
}

/// Contents of a `--config` file. `[train]`, when present, must list every key.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub features: FeatureOverrides,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        if let Some(t) = &cfg.train {
            t.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Model spec, featurisation and training settings for `preset`.
    pub fn resolve(&self, preset: Preset, classes: usize, sample_rate: u32) -> Result<(ModelSpec, Featurization, TrainConfig)> {
        let mut feat = preset.featurization(sample_rate);
        let f = &self.features;
        if let Some(n) = f.n_fft {
            feat.n_fft = n;
        }
        if let Some(n) = f.frames {
            feat.frames = n;
        }
        if let Some(n) = f.max_per_clip {
            feat.max_per_clip = Some(n);
        }
        if let Some(m) = f.magnitude {
            feat.scale.magnitude = m;
        }
        let mut spec = preset.spec(classes);
        let m = &self.model;
        if m.lean == Some(true) {
            spec = spec.lean();
        }
        if let Some(h) = m.hidden {
            spec.hidden = h;
        }
        if let Some(h) = m.heads {
            spec.heads = h;
        }
        if let Some(k) = m.inducing {
            spec.inducing = k;
        }
        if let Some(l) = m.layer_norm {
            spec.layer_norm = l;
        }
        if let Some(h) = &m.fb_hidden {
            spec.fb_hidden = h.clone();
        }
        if let Some(p) = m.input_dropout {
            spec.input_dropout = p;
        }
        if let Some(c) = m.cnn_channels {
            spec.cnn_channels = c;
        }
        if !spec.kind.takes_clouds() {
            spec.input_dim = feat.n_fft / 2 + 1;
        }
        if spec.kind == ModelKind::Cnn {
            spec.cnn_frames = feat.frames;
        }
        spec.validate()?;
        feat.check_model(spec.kind, spec.input_dim)?;
        let train = self.train.clone().unwrap_or_else(|| preset.train_config());
        Ok((spec, feat, train))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_train_key_is_named() {
        let err = RunConfig::from_toml("[train]\nlearning_rate = 0.001\nepochs = 5\nbatch_size = 4\nseed = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("l2_lambda"), "{err}");
        assert!(RunConfig::from_toml("[model]\nwidth = 3\n").is_err());
    }

    #[test]
    fn presets_resolve() {
        let cfg = RunConfig::default();
        let (spec, feat, train) = cfg.resolve(Preset::Fb, 10, 44_100).unwrap();
        assert_eq!((spec.input_dim, feat.n_fft), (1025, 2048));
        assert_eq!(train.batch_size, 64);
        let (spec, feat, train) = cfg.resolve(Preset::Cnn, 10, 44_100).unwrap();
        assert_eq!((spec.input_dim, feat.n_fft, feat.frames), (513, 1024, 10));
        assert_eq!(train.batch_size, 32);
        let (spec, feat, _) = cfg.resolve(Preset::FbToy, 2, 8000).unwrap();
        assert_eq!((spec.input_dim, feat.n_fft), (64, 126));
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::from_toml(
            "[model]\nhidden = 16\nheads = 2\nlayer_norm = true\n[features]\nn_fft = 1024\nmax_per_clip = 3\n",
        )
        .unwrap();
        let (spec, feat, _) = cfg.resolve(Preset::Fst, 4, 16_000).unwrap();
        assert_eq!((spec.hidden, spec.heads, spec.layer_norm), (16, 2, true));
        assert_eq!((feat.n_fft, feat.max_per_clip), (1024, Some(3)));
        let (fb, _, _) = cfg.resolve(Preset::Fb, 4, 16_000).unwrap();
        assert_eq!(fb.input_dim, 513);
    }
}
