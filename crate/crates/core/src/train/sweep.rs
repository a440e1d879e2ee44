use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::evaluate;
use super::features::{featurize_at, Example, Featurization};
use super::fit::derive_seed;
use crate::error::{Error, Result};
use crate::models::{zero_out, Classifier, ModelInput};
use crate::pointcloud::{frame_to_cloud, spectrogram_to_cloud, subsample, MagnitudeScale, ScaleConfig, Strategy};
use crate::scalar::Scalar;
use crate::signal::{AudioClip, MagnitudeSpectrogram};

/// One `(N, sample rate)` cell; `accuracy` is `None` when the model cannot take the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprCell {
    pub n_fft: usize,
    pub sample_rate: u32,
    pub accuracy: Option<f64>,
    pub examples: usize,
}

/// Accuracy over `repeats` subsampling runs at one fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampleRow {
    pub strategy: Strategy,
    pub fraction: f64,
    pub repeats: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub runs: Vec<f64>,
}

/// Runs `f` over `items` on a pool of `jobs` threads, keeping input order.
pub fn run_jobs<I, O, F>(jobs: usize, items: Vec<I>, f: F) -> Result<Vec<O>>
where
    I: Send,
    O: Send,
    F: Fn(I) -> Result<O> + Sync + Send,
{
    if jobs <= 1 {
        return items.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

/// Re-analyses `clips` at every window size and sample rate and evaluates
/// `model` on the result. Fixed-size models see shorter windows zero-padded
/// and mark longer ones unsupported.
pub fn sweep_repr<T: Scalar>(
    model: &Classifier<T>,
    clips: &[AudioClip],
    feat: &Featurization,
    window_sizes: &[usize],
    sample_rates: &[u32],
    jobs: usize,
) -> Result<Vec<ReprCell>> {
    feat.check_model(model.spec().kind, model.spec().input_dim)?;
    let cells: Vec<(usize, u32)> = sample_rates
        .iter()
        .flat_map(|&sr| window_sizes.iter().map(move |&n| (n, sr)))
        .collect();
    run_jobs(jobs, cells, |(n_fft, sample_rate)| {
        let (accuracy, examples) = match featurize_at(clips, feat, n_fft, sample_rate) {
            Ok(ex) => (Some(evaluate(model, &ex)?.accuracy), ex.len()),
            Err(Error::Unsupported(_)) => (None, 0),
            Err(e) => return Err(e),
        };
        Ok(ReprCell {
            n_fft,
            sample_rate,
            accuracy,
            examples,
        })
    })
}

/// Evaluates `model` on `examples` with every input reduced to `fraction` of
/// its points. Random subsampling is repeated with derived seeds; the
/// deterministic strategies run once. Vector and grid inputs keep the chosen
/// entries and zero the rest.
pub fn sweep_subsample<T: Scalar>(
    model: &Classifier<T>,
    examples: &[Example],
    fractions: &[f64],
    strategy: Strategy,
    repeats: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<SubsampleRow>> {
    if repeats == 0 {
        return Err(Error::Param("repeats must be at least 1".into()));
    }
    let runs_per = if strategy == Strategy::Random { repeats } else { 1 };
    let jobs_list: Vec<(usize, usize)> = (0..fractions.len())
        .flat_map(|f| (0..runs_per).map(move |r| (f, r)))
        .collect();
    let accs = run_jobs(jobs, jobs_list, |(f, r)| {
        let fraction = fractions[f];
        let reduced = examples
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let s = derive_seed(seed, &[r as u64, i as u64]);
                Ok(Example {
                    input: reduce_input(&e.input, strategy, fraction, s)?,
                    ..e.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(evaluate(model, &reduced)?.accuracy)
    })?;
    Ok(fractions
        .iter()
        .zip(accs.chunks(runs_per))
        .map(|(&fraction, runs)| {
            let (mean, std) = mean_std(runs);
            SubsampleRow {
                strategy,
                fraction,
                repeats: runs.len(),
                mean,
                std,
                runs: runs.to_vec(),
            }
        })
        .collect())
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `input` reduced to `fraction` of its points or entries.
pub fn reduce_input(input: &ModelInput, strategy: Strategy, fraction: f64, seed: u64) -> Result<ModelInput> {
    if fraction == 1.0 {
        return Ok(input.clone());
    }
    match input {
        ModelInput::Cloud(c) => Ok(ModelInput::Cloud(subsample(c, strategy, fraction, seed)?)),
        ModelInput::Vector(v) => {
            if strategy == Strategy::Gradient {
                return Err(Error::NoGrid);
            }
            let linear = ScaleConfig {
                magnitude: MagnitudeScale::Linear,
                ..ScaleConfig::default()
            };
            // sample rate is irrelevant to which bins are kept
            let cloud = frame_to_cloud(v, 1, 2 * (v.len().max(1) - 1), &linear)?;
            Ok(ModelInput::Vector(zero_out(v, &kept_cells(&subsample(&cloud, strategy, fraction, seed)?, v.len()))?))
        }
        ModelInput::Grid { frames, bins, data } => {
            let spec = MagnitudeSpectrogram {
                frames: data.clone(),
                n_frames: *frames,
                n_bins: *bins,
                n_fft: 2 * (bins - 1),
                win_len: 2 * (bins - 1),
                hop: 1,
                sample_rate: 1,
                frame_times: (0..*frames).map(|t| t as f64).collect(),
            };
            let linear = ScaleConfig {
                magnitude: MagnitudeScale::Linear,
                ..ScaleConfig::default()
            };
            let cloud = spectrogram_to_cloud(&spec, &linear)?;
            let keep = kept_cells(&subsample(&cloud, strategy, fraction, seed)?, *bins);
            Ok(ModelInput::Grid {
                frames: *frames,
                bins: *bins,
                data: zero_out(data, &keep)?,
            })
        }
    }
}

fn kept_cells(cloud: &crate::pointcloud::PointCloud, bins: usize) -> Vec<usize> {
    cloud
        .cells()
        .expect("equivalent clouds carry provenance")
        .iter()
        .map(|c| c.frame as usize * bins + c.bin as usize)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, ModelSpec};
    use crate::pointcloud::{CloudMeta, PointCloud};
    use crate::signal::make_bandpass_noise;

    fn toy_clips() -> Vec<AudioClip> {
        (0..4)
            .map(|i| {
                let band = if i % 2 == 0 { [300.0, 900.0] } else { [2000.0, 3000.0] };
                make_bandpass_noise(band, 16_000, 0.3, i).unwrap().with_label((i % 2) as usize)
            })
            .collect()
    }

    #[test]
    fn identity_cell_is_plain_evaluation() {
        let model = Classifier::<f64>::new(ModelSpec::fst(2).with_hidden(4, 1).with_inducing(2), 1).unwrap();
        let feat = Featurization::for_model(ModelKind::Fst, 16_000);
        let feat = Featurization { n_fft: 1024, ..feat };
        let clips = toy_clips();
        let grid = sweep_repr(&model, &clips, &feat, &[512, 1024], &[8_000, 16_000], 2).unwrap();
        assert_eq!(grid.len(), 4);
        let plain = evaluate(&model, &super::super::features::featurize(&clips, &feat).unwrap()).unwrap();
        let id = grid.iter().find(|c| c.n_fft == 1024 && c.sample_rate == 16_000).unwrap();
        assert_eq!(id.accuracy, Some(plain.accuracy));
    }

    #[test]
    fn fb_marks_longer_windows_unsupported() {
        let feat = Featurization {
            n_fft: 126,
            ..Featurization::for_model(ModelKind::Fb, 16_000)
        };
        let model = Classifier::<f64>::new(ModelSpec::fb_toy(2), 1).unwrap();
        let grid = sweep_repr(&model, &toy_clips(), &feat, &[64, 126, 256], &[16_000], 1).unwrap();
        assert!(grid[0].accuracy.is_some() && grid[1].accuracy.is_some());
        assert_eq!(grid[2].accuracy, None);
    }

    fn clouds() -> Vec<Example> {
        let meta = CloudMeta {
            n_fft: 64,
            sample_rate: 16_000,
            hop: None,
        };
        (0..6)
            .map(|i| Example {
                input: ModelInput::Cloud(
                    PointCloud::from_coords(2, (0..40).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0).collect(), meta)
                        .unwrap(),
                ),
                label: i % 2,
                clip: i,
            })
            .collect()
    }

    #[test]
    fn full_fraction_and_topk_have_no_spread() {
        let model = Classifier::<f64>::new(ModelSpec::fst(2).with_hidden(4, 1).with_inducing(2), 1).unwrap();
        let ex = clouds();
        let full = evaluate(&model, &ex).unwrap().accuracy;
        for s in [Strategy::Random, Strategy::Topk] {
            let rows = sweep_subsample(&model, &ex, &[1.0, 0.5], s, 4, 1, 1).unwrap();
            assert_eq!(rows[0].mean, full);
            assert_eq!(rows[0].std, 0.0);
            if s == Strategy::Topk {
                assert_eq!(rows[1].repeats, 1);
                assert_eq!(rows[1].std, 0.0);
            } else {
                assert_eq!(rows[1].repeats, 4);
            }
        }
        assert!(sweep_subsample(&model, &ex, &[0.5], Strategy::Gradient, 1, 1, 1).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let model = Classifier::<f64>::new(ModelSpec::fst(2).with_hidden(4, 1).with_inducing(2), 1).unwrap();
        let ex = clouds();
        let a = sweep_subsample(&model, &ex, &[0.2, 0.6], Strategy::Random, 3, 9, 1).unwrap();
        let b = sweep_subsample(&model, &ex, &[0.2, 0.6], Strategy::Random, 3, 9, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vectors_keep_the_largest_entries() {
        let v = ModelInput::Vector(vec![0.1, 0.9, 0.3, 0.8, 0.2]);
        let out = reduce_input(&v, Strategy::Topk, 0.4, 0).unwrap();
        assert_eq!(out, ModelInput::Vector(vec![0.0, 0.9, 0.0, 0.8, 0.0]));
        assert!(reduce_input(&v, Strategy::Gradient, 0.4, 0).is_err());
        let ModelInput::Vector(r) = reduce_input(&v, Strategy::Random, 0.6, 3).unwrap() else {
            panic!()
        };
        assert_eq!(r.iter().filter(|&&x| x != 0.0).count(), 3);
    }

    #[test]
    fn grids_zero_unkept_cells() {
        let g = ModelInput::Grid {
            frames: 2,
            bins: 3,
            data: vec![0.1, 0.2, 0.3, 0.9, 0.5, 0.4],
        };
        let ModelInput::Grid { data, .. } = reduce_input(&g, Strategy::Topk, 0.5, 0).unwrap() else {
            panic!()
        };
        assert_eq!(data, [0.0, 0.0, 0.0, 0.9, 0.5, 0.4]);
        assert!(reduce_input(&g, Strategy::Gradient, 0.5, 0).is_ok());
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    }
}
