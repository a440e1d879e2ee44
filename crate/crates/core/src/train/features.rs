use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelInput, ModelKind};
use crate::pointcloud::{frame_to_cloud, spectrogram_to_cloud, ScaleConfig};
use crate::signal::{resample, stft_padded, AudioClip, MagnitudeSpectrogram, Window};

/// What each example looks like to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// One 2-D cloud per non-overlapping frame.
    FrameCloud,
    /// One 3-D cloud per block of consecutive half-overlapping frames.
    SpectroCloud,
    /// One magnitude vector per non-overlapping frame.
    FrameVector,
    /// One `frames × bins` grid per block of half-overlapping frames.
    SpectroGrid,
}

impl FeatureKind {
    pub fn for_model(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Fst => FeatureKind::FrameCloud,
            ModelKind::Tst3 => FeatureKind::SpectroCloud,
            ModelKind::Fb => FeatureKind::FrameVector,
            ModelKind::Cnn => FeatureKind::SpectroGrid,
        }
    }

    fn spectral_blocks(self) -> bool {
        matches!(self, FeatureKind::SpectroCloud | FeatureKind::SpectroGrid)
    }

    /// Fixed-size inputs are tied to the training DFT size.
    pub fn fixed_size(self) -> bool {
        matches!(self, FeatureKind::FrameVector | FeatureKind::SpectroGrid)
    }
}

/// How clips become model inputs at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Featurization {
    pub kind: FeatureKind,
    pub n_fft: usize,
    /// Frames per example for block kinds.
    pub frames: usize,
    pub sample_rate: u32,
    pub window: Window,
    pub scale: ScaleConfig,
    /// Cap on examples drawn from one clip, spread evenly over it.
    pub max_per_clip: Option<usize>,
}

/// One labelled model input and the clip it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub label: usize,
    pub clip: usize,
}

impl Featurization {
    pub fn new(kind: FeatureKind, n_fft: usize, sample_rate: u32) -> Self {
        Featurization {
            kind,
            n_fft,
            frames: if kind.spectral_blocks() { 10 } else { 1 },
            sample_rate,
            window: Window::Hann,
            scale: ScaleConfig::default(),
            max_per_clip: None,
        }
    }

    /// Frame-wise analysis at `N = 2048` or 10-frame blocks at `N = 1024`.
    pub fn for_model(kind: ModelKind, sample_rate: u32) -> Self {
        let fk = FeatureKind::for_model(kind);
        Self::new(fk, if fk.spectral_blocks() { 1024 } else { 2048 }, sample_rate)
    }

    pub fn with_max_per_clip(mut self, max: usize) -> Self {
        self.max_per_clip = Some(max);
        self
    }

    /// Hop for a window of `n_fft`: the full window for frame kinds, half for block kinds.
    pub fn hop(&self, n_fft: usize) -> usize {
        if self.kind.spectral_blocks() {
            (n_fft / 2).max(1)
        } else {
            n_fft
        }
    }

    /// Checks that a model of `kind` taking `input_dim` inputs fits this featurisation.
    pub fn check_model(&self, kind: ModelKind, input_dim: usize) -> Result<()> {
        if FeatureKind::for_model(kind) != self.kind {
            return Err(Error::Config(format!("{kind:?} models cannot use {:?} features", self.kind)));
        }
        let bins = self.n_fft / 2 + 1;
        if self.kind.fixed_size() && input_dim != bins {
            return Err(Error::Config(format!(
                "model takes {input_dim} bins but N = {} yields {bins}",
                self.n_fft
            )));
        }
        Ok(())
    }

    /// Inputs of `clip` at the training analysis settings.
    pub fn featurize_clip(&self, clip: &AudioClip) -> Result<Vec<ModelInput>> {
        self.featurize_clip_at(clip, self.n_fft, self.sample_rate)
    }

    /// Inputs of `clip` resampled to `sample_rate` and analysed with `n_fft`-sample
    /// windows. Fixed-size kinds zero-pad shorter windows to the training DFT size
    /// and reject longer ones with [`Error::Unsupported`].
    pub fn featurize_clip_at(&self, clip: &AudioClip, n_fft: usize, sample_rate: u32) -> Result<Vec<ModelInput>> {
        let owned;
        let clip = if clip.sample_rate == sample_rate {
            clip
        } else {
            owned = resample(clip, sample_rate)?;
            &owned
        };
        let dft_len = if self.kind.fixed_size() { self.n_fft } else { n_fft };
        let spec = stft_padded(clip, n_fft, self.hop(n_fft), self.window, dft_len)?;
        let scale = &self.scale;
        let starts = self.block_starts(spec.n_frames)?;
        starts
            .into_iter()
            .map(|t| match self.kind {
                FeatureKind::FrameCloud => Ok(ModelInput::Cloud(frame_to_cloud(
                    spec.frame(t),
                    spec.sample_rate,
                    spec.n_fft,
                    scale,
                )?)),
                FeatureKind::FrameVector => Ok(ModelInput::Vector(
                    spec.frame(t).iter().map(|&m| scale.vector_value(m)).collect(),
                )),
                FeatureKind::SpectroCloud => {
                    let block = rebased(spec.slice_frames(t, self.frames)?);
                    Ok(ModelInput::Cloud(spectrogram_to_cloud(&block, scale)?))
                }
                FeatureKind::SpectroGrid => {
                    let block = spec.slice_frames(t, self.frames)?;
                    Ok(ModelInput::Grid {
                        frames: block.n_frames,
                        bins: block.n_bins,
                        data: block.frames.iter().map(|&m| scale.vector_value(m)).collect(),
                    })
                }
            })
            .collect()
    }

    /// First frame of every example, thinned evenly to `max_per_clip`.
    fn block_starts(&self, n_frames: usize) -> Result<Vec<usize>> {
        let span = self.frames.max(1);
        if n_frames < span {
            return Err(Error::InputTooShort {
                needed: span,
                got: n_frames,
            });
        }
        let all: Vec<usize> = (0..n_frames / span).map(|b| b * span).collect();
        Ok(match self.max_per_clip {
            Some(k) if k < all.len() => (0..k).map(|i| all[i * all.len() / k]).collect(),
            _ => all,
        })
    }
}

/// Shifts frame times so a block starts where a fresh analysis would.
fn rebased(mut block: MagnitudeSpectrogram) -> MagnitudeSpectrogram {
    let sr = block.sample_rate as f64;
    for (k, t) in block.frame_times.iter_mut().enumerate() {
        *t = (block.win_len as f64 / 2.0 + (k * block.hop) as f64) / sr;
    }
    block
}

/// Featurises every labelled clip. Clips too short for one example are skipped.
pub fn featurize(clips: &[AudioClip], feat: &Featurization) -> Result<Vec<Example>> {
    featurize_at(clips, feat, feat.n_fft, feat.sample_rate)
}

/// [`featurize`] under different analysis settings.
pub fn featurize_at(clips: &[AudioClip], feat: &Featurization, n_fft: usize, sample_rate: u32) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (i, clip) in clips.iter().enumerate() {
        let label = clip
            .label
            .ok_or_else(|| Error::Param(format!("clip {i} has no label")))?;
        match feat.featurize_clip_at(clip, n_fft, sample_rate) {
            Ok(inputs) => out.extend(inputs.into_iter().map(|input| Example { input, label, clip: i })),
            Err(Error::InputTooShort { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::Param("no clip is long enough to yield an example".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::make_bandpass_noise;

    fn clip(seconds: f64) -> AudioClip {
        make_bandpass_noise([500.0, 1500.0], 16_000, seconds, 1).unwrap().with_label(1)
    }

    #[test]
    fn frame_clouds_have_one_point_per_bin() {
        let feat = Featurization::new(FeatureKind::FrameCloud, 1024, 16_000);
        let xs = feat.featurize_clip(&clip(0.5)).unwrap();
        assert_eq!(xs.len(), 8000 / 1024);
        assert_eq!(xs[0].as_cloud().unwrap().len(), 513);
    }

    #[test]
    fn spectro_blocks_have_ten_frames() {
        let feat = Featurization::for_model(ModelKind::Tst3, 16_000);
        let xs = feat.featurize_clip(&clip(1.0)).unwrap();
        // (16000 − 1024)/512 + 1 = 30 frames → 3 blocks
        assert_eq!(xs.len(), 3);
        let c = xs[2].as_cloud().unwrap();
        assert_eq!(c.len(), 5130);
        assert_eq!(c.t(0), 512.0 / 16_000.0);
        let grids = Featurization::for_model(ModelKind::Cnn, 16_000).featurize_clip(&clip(1.0)).unwrap();
        assert!(matches!(grids[0], ModelInput::Grid { frames: 10, bins: 513, .. }));
    }

    #[test]
    fn vectors_pad_shorter_windows_and_refuse_longer() {
        let feat = Featurization::new(FeatureKind::FrameVector, 1024, 16_000);
        let short = feat.featurize_clip_at(&clip(0.5), 512, 16_000).unwrap();
        assert!(matches!(&short[0], ModelInput::Vector(v) if v.len() == 513));
        assert!(matches!(
            feat.featurize_clip_at(&clip(0.5), 2048, 16_000),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn clouds_follow_the_window() {
        let feat = Featurization::new(FeatureKind::FrameCloud, 1024, 16_000);
        let xs = feat.featurize_clip_at(&clip(0.5), 256, 8_000).unwrap();
        assert_eq!(xs[0].as_cloud().unwrap().len(), 129);
        assert_eq!(xs.len(), 4000 / 256);
    }

    #[test]
    fn cap_spreads_examples() {
        let feat = Featurization::new(FeatureKind::FrameCloud, 512, 16_000).with_max_per_clip(3);
        assert_eq!(feat.block_starts(31).unwrap(), [0, 10, 20]);
        assert_eq!(feat.featurize_clip(&clip(1.0)).unwrap().len(), 3);
    }

    #[test]
    fn model_compatibility() {
        let feat = Featurization::for_model(ModelKind::Fb, 16_000);
        assert!(feat.check_model(ModelKind::Fb, 1025).is_ok());
        assert!(feat.check_model(ModelKind::Fb, 513).is_err());
        assert!(feat.check_model(ModelKind::Fst, 2).is_err());
    }

    #[test]
    fn short_clips_are_skipped() {
        let feat = Featurization::new(FeatureKind::FrameCloud, 1024, 16_000);
        let clips = [clip(0.01), clip(0.2)];
        let ex = featurize(&clips, &feat).unwrap();
        assert!(ex.iter().all(|e| e.clip == 1 && e.label == 1));
    }
}
