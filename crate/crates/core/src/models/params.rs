use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::{Tape, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    /// Whether the ℓ2 penalty applies (weights only).
    pub decay: bool,
}

/// Flat list of named trainable arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>, decay: bool) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.entries.push(ParamEntry {
            name: name.into(),
            shape,
            data,
            decay,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn get(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Places every parameter on `tape`, trainable or constant.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        Bound(
            self.entries
                .iter()
                .map(|e| {
                    if trainable {
                        tape.param(e.shape.clone(), e.data.clone())
                    } else {
                        tape.constant(e.shape.clone(), e.data.clone())
                    }
                })
                .collect(),
        )
    }

    /// Gradient of every parameter after `tape.backward`, zeros where none flowed.
    pub fn grads(&self, tape: &Tape<T>, bound: &Bound) -> Vec<Vec<T>> {
        self.entries
            .iter()
            .zip(&bound.0)
            .map(|(e, &v)| {
                tape.grad(v)
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); e.data.len()])
            })
            .collect()
    }
}

/// Tape handles of a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound(pub(crate) Vec<Var>);

impl Bound {
    /// Handles in [`ParamStore`] order, e.g. leaves made by a gradient checker.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Seeded parameter initialiser.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Glorot-uniform values for a `fan_in → fan_out` map, multiplied by `gain`.
    pub fn glorot<T: Scalar>(&mut self, fan_in: usize, fan_out: usize, len: usize, gain: f64) -> Vec<T> {
        let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..len).map(|_| T::of(self.rng.gen_range(-limit..=limit))).collect()
    }
}
