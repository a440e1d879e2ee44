use super::params::{Bound, Init, ParamId, ParamStore};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Var};

/// `y = x·W (+ b)` on row vectors.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Init,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        gain: f64,
    ) -> Self {
        let w = store.push(
            format!("{name}.weight"),
            vec![d_in, d_out],
            init.glorot(d_in, d_out, d_in * d_out, gain),
            true,
        );
        let b = bias.then(|| store.push(format!("{name}.bias"), vec![d_out], vec![T::zero(); d_out], false));
        Linear { w, b, d_in, d_out }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p.var(self.w))?;
        match self.b {
            Some(b) => tape.add(y, p.var(b)),
            None => Ok(y),
        }
    }

    /// Multiply-accumulates for `rows` input rows.
    pub fn macs(&self, rows: usize) -> u64 {
        let bias = if self.b.is_some() { rows * self.d_out } else { 0 };
        (rows * self.d_in * self.d_out + bias) as u64
    }
}

/// Row-wise normalisation with a learned gain and offset.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub offset: ParamId,
    pub width: usize,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, width: usize) -> Self {
        LayerNorm {
            gain: store.push(format!("{name}.gain"), vec![width], vec![T::one(); width], false),
            offset: store.push(format!("{name}.offset"), vec![width], vec![T::zero(); width], false),
            width,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let n = tape.layer_norm(x, T::of(Self::EPS));
        let g = tape.mul(n, p.var(self.gain))?;
        tape.add(g, p.var(self.offset))
    }

    pub fn macs(&self, rows: usize) -> u64 {
        (4 * rows * self.width) as u64
    }
}
