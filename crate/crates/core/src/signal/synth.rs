use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::error::{Error, Result};

/// White noise confined to `[f_lo, f_hi]` Hz.
///
/// Built in the frequency domain: every DFT bin of the full clip inside the
/// band gets unit magnitude and a random phase, every other bin is zero. The
/// result is peak-normalised to 1.
pub fn make_bandpass_noise(band: [f64; 2], sample_rate: u32, duration: f64, seed: u64) -> Result<AudioClip> {
    let [lo, hi] = band;
    let nyquist = sample_rate as f64 / 2.0;
    if !(lo >= 0.0 && lo < hi && hi <= nyquist) {
        return Err(Error::Param(format!(
            "band [{lo}, {hi}] Hz is empty or outside [0, {nyquist}]"
        )));
    }
    if !(duration > 0.0) || sample_rate == 0 {
        return Err(Error::Param(format!("duration {duration} s must be positive")));
    }
    let len = (duration * sample_rate as f64).round() as usize;
    if len < 2 {
        return Err(Error::Param(format!("duration {duration} s is under two samples")));
    }
    let bin_hz = sample_rate as f64 / len as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = vec![Complex::new(0.0, 0.0); len];
    let mut populated = 0;
    for k in 0..=len / 2 {
        let f = k as f64 * bin_hz;
        if f < lo || f > hi {
            continue;
        }
        let self_conjugate = k == 0 || 2 * k == len;
        let value = if self_conjugate {
            Complex::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0)
        } else {
            Complex::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))
        };
        spectrum[k] = value;
        if !self_conjugate {
            spectrum[len - k] = value.conj();
        }
        populated += 1;
    }
    if populated == 0 {
        return Err(Error::Param(format!(
            "band [{lo}, {hi}] Hz contains no DFT bin at {bin_hz} Hz resolution"
        )));
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut spectrum);
    let mut samples: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    samples.iter_mut().for_each(|x| *x /= peak);
    AudioClip::new(samples, sample_rate)
}

/// `amplitude · sin(2π f t)` for `len` samples.
pub fn sine(freq: f64, sample_rate: u32, len: usize, amplitude: f64) -> AudioClip {
    let samples = (0..len)
        .map(|i| amplitude * (2.0 * PI * freq * i as f64 / sample_rate as f64).sin())
        .collect();
    AudioClip {
        samples,
        sample_rate,
        label: None,
    }
}
