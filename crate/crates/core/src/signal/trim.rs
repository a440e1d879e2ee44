use super::AudioClip;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD_DB: f64 = -60.0;
pub const RMS_FRAME_SECONDS: f64 = 0.02;

/// Sample range `[start, end)` left after dropping quiet boundary frames.
///
/// Frames are consecutive 20 ms blocks; a frame is quiet when its RMS is
/// below `peak · 10^(threshold_db/20)`.
pub fn trim_bounds(clip: &AudioClip, threshold_db: f64) -> Result<(usize, usize)> {
    if !(threshold_db < 0.0) {
        return Err(Error::Param(format!(
            "silence threshold {threshold_db} dB must be negative (relative to peak)"
        )));
    }
    let peak = clip.peak();
    if peak == 0.0 {
        return Err(Error::EmptyClip);
    }
    let threshold = peak * 10f64.powf(threshold_db / 20.0);
    let frame = ((RMS_FRAME_SECONDS * clip.sample_rate as f64).round() as usize).max(1);
    let loud: Vec<bool> = clip
        .samples
        .chunks(frame)
        .map(|c| (c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64).sqrt() >= threshold)
        .collect();
    let first = loud.iter().position(|&l| l).ok_or(Error::EmptyClip)?;
    let last = loud.iter().rposition(|&l| l).ok_or(Error::EmptyClip)?;
    Ok((first * frame, ((last + 1) * frame).min(clip.len())))
}

/// Removes quiet leading and trailing regions; the interior is untouched.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64) -> Result<AudioClip> {
    let (start, end) = trim_bounds(clip, threshold_db)?;
    Ok(AudioClip {
        samples: clip.samples[start..end].to_vec(),
        sample_rate: clip.sample_rate,
        label: clip.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::sine;

    #[test]
    fn leading_zeros_are_removed() {
        let sr = 8000;
        let tone = sine(440.0, sr, 4000, 0.5);
        let mut samples = vec![0.0; sr as usize];
        samples.extend(&tone.samples);
        let clip = AudioClip::new(samples, sr).unwrap();
        let out = trim_silence(&clip, DEFAULT_THRESHOLD_DB).unwrap();
        assert_eq!(out.samples, tone.samples);
    }

    #[test]
    fn loud_boundaries_are_kept() {
        let clip = sine(440.0, 8000, 4000, 0.5);
        assert_eq!(trim_silence(&clip, -60.0).unwrap(), clip);
    }

    #[test]
    fn quiet_pads_around_a_body() {
        let sr = 16_000;
        let pad = |amp: f64, n: usize| sine(97.0, sr, n, amp).samples;
        // peak 1 burst keeps the reference level at 0 dBFS
        let mut body = sine(1000.0, sr, 8000, 0.1).samples;
        body[4000] = 1.0;
        let mut samples = pad(1e-4, 5000);
        samples.extend(&body);
        samples.extend(pad(1e-4, 7000));
        let clip = AudioClip::new(samples, sr).unwrap();
        let (start, end) = trim_bounds(&clip, -60.0).unwrap();
        let hop = (RMS_FRAME_SECONDS * sr as f64) as i64;
        assert!((start as i64 - 5000).abs() <= hop);
        assert!(((end - start) as i64 - 8000).abs() <= hop);
    }

    #[test]
    fn silent_clip_is_empty() {
        let clip = AudioClip::new(vec![0.0; 1000], 8000).unwrap();
        assert!(matches!(trim_silence(&clip, -60.0), Err(Error::EmptyClip)));
        assert!(trim_silence(&sine(1.0, 8000, 100, 1.0), 3.0).is_err());
    }
}
