use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{SubsampleConfig, TrainConfig};
use super::eval::evaluate;
use super::features::Example;
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::models::{argmax, Classifier, Mode, ModelInput};
use crate::pointcloud::{subsample, Strategy};
use crate::scalar::Scalar;
use crate::tensor::Tape;

/// Mixes `parts` into `base` (splitmix64), giving independent stream seeds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

const SHUFFLE: u64 = 1;
const DROPOUT: u64 = 2;
const SUBSAMPLE: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training-mode cross-entropy over the epoch.
    pub loss: f64,
    pub train_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len() as f64
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Minimises cross-entropy plus the ℓ2 penalty with Adam.
pub fn train<T: Scalar>(model: &mut Classifier<T>, data: &[Example], cfg: &TrainConfig) -> Result<History> {
    train_with(model, data, cfg, |_| {})
}

/// [`train`] calling `on_epoch` after every epoch.
pub fn train_with<T: Scalar>(
    model: &mut Classifier<T>,
    data: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Param("cannot train on an empty dataset".into()));
    }
    for e in data {
        model.check_input(&e.input)?;
        if e.label >= model.spec().classes {
            return Err(Error::Param(format!(
                "label {} outside the model's {} classes",
                e.label,
                model.spec().classes
            )));
        }
    }
    if cfg.train_subsample.is_some() && !model.spec().kind.takes_clouds() {
        return Err(Error::Config("training-time subsampling needs a cloud model".into()));
    }

    let mut adam = Adam::new(model.params(), cfg.learning_rate, cfg.l2_lambda);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[SHUFFLE, epoch as u64])));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Vec<T>> = model
                .params()
                .entries()
                .iter()
                .map(|e| vec![T::zero(); e.data.len()])
                .collect();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let ex = &data[i];
                let sub;
                let input = match (&cfg.train_subsample, &ex.input) {
                    (Some(s), ModelInput::Cloud(c)) => {
                        let seed = derive_seed(cfg.seed, &[SUBSAMPLE, epoch as u64, i as u64]);
                        sub = ModelInput::Cloud(subsample(c, s.strategy, s.fraction, seed)?);
                        &sub
                    }
                    _ => &ex.input,
                };
                let mut tape = Tape::new();
                let p = model.params().bind(&mut tape, true);
                let mode = Mode::train(derive_seed(cfg.seed, &[DROPOUT, epoch as u64, i as u64]));
                let f = model.forward(&mut tape, &p, input, mode)?;
                let logits = tape.value(f.logits).to_f64();
                if argmax(&logits) == ex.label {
                    correct += 1;
                }
                let loss = tape.cross_entropy(f.logits, ex.label)?;
                batch_loss += tape.value(loss).data[0].to_f64_lossy();
                tape.backward(loss)?;
                for (acc, g) in grads.iter_mut().zip(model.params().grads(&tape, &p)) {
                    acc.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    loss: batch_loss / chunk.len() as f64,
                });
            }
            loss_sum += batch_loss;
            let inv = T::of(1.0 / chunk.len() as f64);
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            adam.step(model.params_mut(), &grads);
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(history)
}

/// Accuracy and timing of full-cloud training against subsampled training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampledComparison {
    pub fraction: f64,
    pub full_accuracy: f64,
    pub subsampled_accuracy: f64,
    pub full_epoch_seconds: f64,
    pub subsampled_epoch_seconds: f64,
}

/// Trains two copies of `model` from identical initial weights, one on full
/// clouds and one on a fresh random `fraction` of every cloud each epoch, and
/// evaluates both on full test clouds.
pub fn train_subsampled<T: Scalar>(
    model: &Classifier<T>,
    train_set: &[Example],
    test_set: &[Example],
    cfg: &TrainConfig,
    fraction: f64,
) -> Result<(Classifier<T>, Classifier<T>, SubsampledComparison)> {
    let mut full = model.clone();
    let full_history = train(&mut full, train_set, &TrainConfig {
        train_subsample: None,
        ..cfg.clone()
    })?;
    let mut sub = model.clone();
    let sub_cfg = TrainConfig {
        train_subsample: Some(SubsampleConfig {
            strategy: Strategy::Random,
            fraction,
        }),
        ..cfg.clone()
    };
    let sub_history = train(&mut sub, train_set, &sub_cfg)?;
    let row = SubsampledComparison {
        fraction,
        full_accuracy: evaluate(&full, test_set)?.accuracy,
        subsampled_accuracy: evaluate(&sub, test_set)?.accuracy,
        full_epoch_seconds: full_history.mean_epoch_seconds(),
        subsampled_epoch_seconds: sub_history.mean_epoch_seconds(),
    };
    Ok((full, sub, row))
}
