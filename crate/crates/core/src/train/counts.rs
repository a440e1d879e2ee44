use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{Classifier, Mode, ModelInput};
use crate::scalar::Scalar;
use crate::tensor::Tape;

/// Multiply-accumulates of one example, inference and one training step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCount {
    pub inference: u64,
    pub training: u64,
}

/// Trainable scalars, including inducing points and pooling seeds.
pub fn count_params<T: Scalar>(model: &Classifier<T>) -> usize {
    model.param_count()
}

/// Analytic count for an input of `size` points (ignored by fixed-size models).
pub fn count_macs<T: Scalar>(model: &Classifier<T>, size: usize) -> MacCount {
    MacCount {
        inference: model.macs(size),
        training: model.training_macs(size),
    }
}

/// MACs recorded by the tape during one evaluation-mode forward pass.
pub fn measure_macs<T: Scalar>(model: &Classifier<T>, input: &ModelInput) -> Result<u64> {
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape, false);
    model.forward(&mut tape, &p, input, Mode::EVAL)?;
    Ok(tape.macs())
}

/// One line of the parameter / MAC table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub model: String,
    pub params: usize,
    /// Cardinality or input length the MACs were counted at.
    pub input_size: usize,
    pub inference_macs: u64,
    pub training_macs: u64,
}

impl CountRow {
    pub fn new<T: Scalar>(name: &str, model: &Classifier<T>, size: usize) -> Self {
        let macs = count_macs(model, size);
        CountRow {
            model: name.to_string(),
            params: count_params(model),
            input_size: size,
            inference_macs: macs.inference,
            training_macs: macs.training,
        }
    }
}
