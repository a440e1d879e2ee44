use std::f64::consts::PI;

use super::AudioClip;
use crate::error::{Error, Result};

/// Zero crossings of the interpolation kernel on each side of its centre.
pub const SINC_HALF_WIDTH: usize = 32;
pub const KAISER_BETA: f64 = 8.6;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited rate conversion with a Kaiser-windowed sinc kernel.
///
/// The low-pass cutoff sits at the lower of the two Nyquist frequencies.
/// Kernel weights are renormalised per output sample so DC passes with
/// unit gain.
pub fn resample(clip: &AudioClip, target_sr: u32) -> Result<AudioClip> {
    if target_sr == 0 {
        return Err(Error::Param("target sample rate must be positive".into()));
    }
    if target_sr == clip.sample_rate {
        return Ok(clip.clone());
    }
    let (sr_in, sr_out) = (clip.sample_rate as f64, target_sr as f64);
    let out_len = ((clip.len() as f64) * sr_out / sr_in).round() as usize;
    // cutoff in cycles per input sample
    let cutoff = sr_in.min(sr_out) / (2.0 * sr_in);
    let reach = SINC_HALF_WIDTH as f64 / (2.0 * cutoff);
    let i0_beta = bessel_i0(KAISER_BETA);
    let x = &clip.samples;
    let last = x.len() as i64 - 1;
    let samples = (0..out_len)
        .map(|j| {
            let centre = j as f64 * sr_in / sr_out;
            let lo = ((centre - reach).ceil() as i64).max(0);
            let hi = ((centre + reach).floor() as i64).min(last);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for i in lo..=hi {
                let offset = i as f64 - centre;
                let r = offset / reach;
                let taper = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                let w = 2.0 * cutoff * sinc(2.0 * cutoff * offset) * taper;
                acc += w * x[i as usize];
                norm += w;
            }
            if norm.abs() > 1e-12 {
                acc / norm
            } else {
                0.0
            }
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: target_sr,
        label: clip.label,
    })
}
