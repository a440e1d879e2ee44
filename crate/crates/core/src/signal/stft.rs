use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// One-sided magnitude spectra of successive frames.
///
/// Column `j` of every frame is the bin at `j · sample_rate / n_fft` Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeSpectrogram {
    /// `[n_frames × n_bins]`, row-major.
    pub frames: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
    /// DFT size.
    pub n_fft: usize,
    /// Analysis window length in samples (≤ `n_fft`; smaller when zero-padded).
    pub win_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    /// Centre of each analysis window, in seconds.
    pub frame_times: Vec<f64>,
}

impl MagnitudeSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn bin_hz(&self, j: usize) -> f64 {
        j as f64 * self.sample_rate as f64 / self.n_fft as f64
    }

    /// Frames `start..start+len` as a new spectrogram.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.n_frames {
            return Err(Error::Param(format!(
                "frame range {start}..{} outside 0..{}",
                start + len,
                self.n_frames
            )));
        }
        Ok(MagnitudeSpectrogram {
            frames: self.frames[start * self.n_bins..(start + len) * self.n_bins].to_vec(),
            n_frames: len,
            frame_times: self.frame_times[start..start + len].to_vec(),
            ..self.clone()
        })
    }
}

/// Short-time magnitude spectra with `T = ⌊(len − n_fft)/hop⌋ + 1` frames.
pub fn stft(clip: &AudioClip, n_fft: usize, hop: usize, window: Window) -> Result<MagnitudeSpectrogram> {
    stft_padded(clip, n_fft, hop, window, n_fft)
}

/// STFT whose `win_len`-sample windows are zero-padded (centred) to `dft_len`
/// before the transform.
pub fn stft_padded(
    clip: &AudioClip,
    win_len: usize,
    hop: usize,
    window: Window,
    dft_len: usize,
) -> Result<MagnitudeSpectrogram> {
    if win_len == 0 || hop == 0 {
        return Err(Error::Param("window length and hop must be positive".into()));
    }
    if win_len > dft_len {
        return Err(Error::Unsupported(format!(
            "window of {win_len} samples exceeds DFT size {dft_len}"
        )));
    }
    if clip.len() < win_len {
        return Err(Error::InputTooShort {
            needed: win_len,
            got: clip.len(),
        });
    }
    let n_frames = (clip.len() - win_len) / hop + 1;
    let n_bins = dft_len / 2 + 1;
    let coeffs = window.coefficients(win_len);
    let fft = FftPlanner::new().plan_fft_forward(dft_len);
    let offset = (dft_len - win_len) / 2;
    let mut buf = vec![Complex::new(0.0, 0.0); dft_len];
    let mut frames = Vec::with_capacity(n_frames * n_bins);
    let mut frame_times = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let start = t * hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, (&x, &w)) in clip.samples[start..start + win_len].iter().zip(&coeffs).enumerate() {
            buf[offset + i] = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        frames.extend(buf[..n_bins].iter().map(|c| c.norm()));
        frame_times.push((start as f64 + win_len as f64 / 2.0) / clip.sample_rate as f64);
    }
    Ok(MagnitudeSpectrogram {
        frames,
        n_frames,
        n_bins,
        n_fft: dft_len,
        win_len,
        hop,
        sample_rate: clip.sample_rate,
        frame_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::sine;

    #[test]
    fn frame_count_formula() {
        let clip = AudioClip::new(vec![0.0; 3072], 16_000).unwrap();
        let spec = stft(&clip, 2048, 512, Window::Hann).unwrap();
        assert_eq!(spec.n_frames, 3);
        assert_eq!(spec.n_bins, 1025);
        assert!(spec.frames.iter().all(|&m| m == 0.0));
        assert!(spec.frame_times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(spec.frame_times[0], 1024.0 / 16_000.0);
    }

    #[test]
    fn integer_bin_sine_has_a_single_line() {
        let (n, k) = (256, 9);
        let sr = 8000;
        let clip = sine(k as f64 * sr as f64 / n as f64, sr, n, 0.8);
        let spec = stft(&clip, n, n, Window::Rect).unwrap();
        for (j, &m) in spec.frame(0).iter().enumerate() {
            if j == k {
                // |X_k| = A·N/2 for a real sinusoid on an exact bin
                assert!((m - 0.8 * n as f64 / 2.0).abs() < 1e-9, "{m}");
            } else {
                assert!(m < 1e-9, "bin {j}: {m}");
            }
        }
    }

    #[test]
    fn parseval_for_rect_frames() {
        let clip = crate::signal::make_bandpass_noise([300.0, 2500.0], 8000, 0.25, 3).unwrap();
        let n = 400;
        let spec = stft(&clip, n, n, Window::Rect).unwrap();
        for t in 0..spec.n_frames {
            let energy: f64 = clip.samples[t * n..(t + 1) * n].iter().map(|x| x * x).sum();
            let mags = spec.frame(t);
            let one_sided: f64 = mags
                .iter()
                .enumerate()
                .map(|(j, m)| if j == 0 || j == n / 2 { m * m } else { 2.0 * m * m })
                .sum();
            assert!((one_sided - n as f64 * energy).abs() <= 1e-9 * n as f64 * energy);
        }
    }

    #[test]
    fn too_short_clip_is_an_error() {
        let clip = AudioClip::new(vec![0.0; 100], 8000).unwrap();
        assert!(stft(&clip, 128, 64, Window::Hann).is_err());
    }

    #[test]
    fn padded_analysis_keeps_bin_grid_of_dft_size() {
        let clip = sine(1000.0, 16_000, 4096, 1.0);
        let spec = stft_padded(&clip, 1024, 1024, Window::Hann, 2048).unwrap();
        assert_eq!(spec.n_bins, 1025);
        let peak = spec
            .frame(0)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 128);
        assert!(stft_padded(&clip, 4096, 1024, Window::Hann, 2048).is_err());
    }
}
