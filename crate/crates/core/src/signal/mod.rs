//! Audio synthesis, ingestion and spectral analysis.

mod resample;
mod stft;
mod synth;
mod trim;
mod wav;

pub use resample::{resample, KAISER_BETA, SINC_HALF_WIDTH};
pub use stft::{stft, stft_padded, MagnitudeSpectrogram, Window};
pub use synth::{make_bandpass_noise, sine};
pub use trim::{trim_bounds, trim_silence, DEFAULT_THRESHOLD_DB, RMS_FRAME_SECONDS};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Mono audio at a fixed sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub label: Option<usize>,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Param("sample rate must be positive".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Param("audio samples must be finite".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
            label: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(mut self, gain: f64) -> Self {
        self.samples.iter_mut().for_each(|x| *x *= gain);
        self
    }
}
