use serde::{Deserialize, Serialize};

use super::features::Example;
use crate::error::{Error, Result};
use crate::models::{argmax, Classifier};
use crate::scalar::Scalar;

/// Accuracy and confusion counts of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub count: usize,
    /// Mean cross-entropy, when logits were available.
    pub mean_loss: Option<f64>,
}

impl EvalReport {
    /// Report for `predictions` against `labels` over `classes` classes.
    pub fn from_predictions(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if predictions.len() != labels.len() || labels.is_empty() {
            return Err(Error::Param(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut confusion = vec![vec![0; classes]; classes];
        for (&p, &y) in predictions.iter().zip(labels) {
            if p >= classes || y >= classes {
                return Err(Error::Param(format!("class index outside 0..{classes}")));
            }
            confusion[y][p] += 1;
        }
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        Ok(EvalReport {
            accuracy: correct as f64 / labels.len() as f64,
            confusion,
            count: labels.len(),
            mean_loss: None,
        })
    }
}

/// Cross-entropy of one logit row.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Evaluation-mode predictions of `model` on `examples`.
pub fn evaluate<T: Scalar>(model: &Classifier<T>, examples: &[Example]) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::Param("cannot evaluate on an empty dataset".into()));
    }
    let logits = model.logits_many(examples.iter().map(|e| &e.input))?;
    let predictions: Vec<usize> = logits.iter().map(|z| argmax(z)).collect();
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let mut report = EvalReport::from_predictions(&predictions, &labels, model.spec().classes)?;
    let loss: f64 = logits.iter().zip(&labels).map(|(z, &y)| cross_entropy(z, y)).sum();
    report.mean_loss = Some(loss / labels.len() as f64);
    Ok(report)
}
