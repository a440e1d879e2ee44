use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classifier::Classifier;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serialised model: spec, the featurisation it was trained with and its weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: ModelSpec,
    /// Opaque description of how inputs were produced.
    pub featurization: serde_json::Value,
    pub weights: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Classifier<T>, featurization: serde_json::Value) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            spec: model.spec().clone(),
            featurization,
            weights: model
                .params()
                .entries()
                .iter()
                .map(|e| NamedArray {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: e.data.iter().map(|&x| x.to_f64_lossy()).collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking every weight's name and shape.
    pub fn to_model<T: Scalar>(&self) -> Result<Classifier<T>> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint format {} is not the supported format {CHECKPOINT_VERSION}",
                self.format_version
            )));
        }
        let mut model = Classifier::<T>::new(self.spec.clone(), 0)?;
        let entries = model.params_mut().entries_mut();
        if entries.len() != self.weights.len() {
            return Err(Error::Schema(format!(
                "checkpoint has {} arrays, model expects {}",
                self.weights.len(),
                entries.len()
            )));
        }
        for (e, w) in entries.iter_mut().zip(&self.weights) {
            if e.name != w.name || e.shape != w.shape || w.data.len() != e.data.len() {
                return Err(Error::Schema(format!(
                    "array {} {:?} does not match expected {} {:?}",
                    w.name, w.shape, e.name, e.shape
                )));
            }
            e.data = w.data.iter().map(|&x| T::of(x)).collect();
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
