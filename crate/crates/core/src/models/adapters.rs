//! Input adapters that let the fixed-size baselines see other analysis settings.

use crate::error::{Error, Result};

/// Centres `samples` in a zero buffer of length `target`.
pub fn pad_window_input(samples: &[f64], target: usize) -> Result<Vec<f64>> {
    if samples.len() > target {
        return Err(Error::Unsupported(format!(
            "window of {} samples exceeds the model's {target}-sample input",
            samples.len()
        )));
    }
    let mut out = vec![0.0; target];
    let start = (target - samples.len()) / 2;
    out[start..start + samples.len()].copy_from_slice(samples);
    Ok(out)
}

/// Copy of `vec` with every entry outside `keep` set to zero.
pub fn zero_out(vec: &[f64], keep: &[usize]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; vec.len()];
    for &i in keep {
        let v = vec
            .get(i)
            .ok_or_else(|| Error::Param(format!("index {i} out of range for length {}", vec.len())))?;
        out[i] = *v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{sine, stft, Window};

    #[test]
    fn pad_full_length_is_identity() {
        let x: Vec<f64> = (0..2048).map(|i| i as f64).collect();
        assert_eq!(pad_window_input(&x, 2048).unwrap(), x);
    }

    #[test]
    fn pad_half_length_adds_zeros() {
        let x = vec![1.0; 1024];
        let y = pad_window_input(&x, 2048).unwrap();
        assert_eq!(y.len(), 2048);
        assert_eq!(y.iter().filter(|&&v| v == 0.0).count(), 1024);
        assert_eq!(&y[512..1536], &x[..]);
    }

    #[test]
    fn pad_rejects_longer_window() {
        assert!(matches!(pad_window_input(&[0.0; 4096], 2048), Err(Error::Unsupported(_))));
    }

    #[test]
    fn padded_sine_peaks_at_expected_bin() {
        let (sr, f) = (16_000, 1234.0);
        let clip = sine(f, sr, 1024, 1.0);
        let padded = pad_window_input(&clip.samples, 2048).unwrap();
        let clip = crate::signal::AudioClip::new(padded, sr).unwrap();
        let spec = stft(&clip, 2048, 2048, Window::Rect).unwrap();
        let frame = spec.frame(0);
        let peak = (0..frame.len()).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
        let expected = (f / (sr as f64 / 2048.0)).round() as usize;
        assert!(peak.abs_diff(expected) <= 1, "peak {peak} vs {expected}");
    }

    #[test]
    fn zero_out_examples() {
        let x = [5.0, 6.0, 7.0];
        assert_eq!(zero_out(&x, &[0, 1, 2]).unwrap(), x);
        assert_eq!(zero_out(&x, &[]).unwrap(), [0.0; 3]);
        assert_eq!(zero_out(&x, &[0, 2]).unwrap(), [5.0, 0.0, 7.0]);
        assert!(zero_out(&x, &[3]).is_err());
    }
}
