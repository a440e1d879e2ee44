//! Set Transformer blocks.

use super::layers::{LayerNorm, Linear};
use super::params::{Bound, Init, ParamId, ParamStore};
use super::spec::{AttnScale, MabStyle};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Var, LEAKY_SLOPE};

/// Output of a block together with the attention node that produced it.
#[derive(Clone, Copy, Debug)]
pub struct BlockOut {
    pub out: Var,
    pub attention: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct MabConfig {
    pub query_dim: usize,
    pub key_dim: usize,
    pub width: usize,
    pub heads: usize,
    pub style: MabStyle,
    pub scale: AttnScale,
    pub layer_norm: bool,
}

/// Multihead attention block: queries `X` attend over keys `Y`.
#[derive(Clone, Debug)]
pub struct Mab {
    cfg: MabConfig,
    q: Linear,
    k: Linear,
    v: Linear,
    /// Output projection (standard style only).
    o: Option<Linear>,
    ff: Linear,
    norms: Option<(LayerNorm, LayerNorm)>,
}

impl Mab {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &mut Init, name: &str, cfg: MabConfig) -> Self {
        let d = cfg.width;
        let lean = cfg.style == MabStyle::Lean;
        let q = Linear::new(store, init, &format!("{name}.q"), cfg.query_dim, d, true, 1.0);
        let k = Linear::new(store, init, &format!("{name}.k"), cfg.key_dim, d, lean, 1.0);
        let v = Linear::new(store, init, &format!("{name}.v"), cfg.key_dim, d, true, 1.0);
        let o = (!lean).then(|| Linear::new(store, init, &format!("{name}.o"), d, d, true, 1.0));
        let ff = Linear::new(store, init, &format!("{name}.ff"), d, d, true, 1.0);
        let norms = cfg.layer_norm.then(|| {
            (
                LayerNorm::new(store, &format!("{name}.ln0"), d),
                LayerNorm::new(store, &format!("{name}.ln1"), d),
            )
        });
        Mab {
            cfg,
            q,
            k,
            v,
            o,
            ff,
            norms,
        }
    }

    pub fn config(&self) -> &MabConfig {
        &self.cfg
    }

    fn scale(&self) -> f64 {
        match self.cfg.scale {
            AttnScale::PerHead => 1.0 / ((self.cfg.width / self.cfg.heads) as f64).sqrt(),
            AttnScale::Width => 1.0 / (self.cfg.width as f64).sqrt(),
            AttnScale::Off => 1.0,
        }
    }

    /// `x: [n×query_dim]`, `y: [m×key_dim]`, `key_mask` over the `m` rows of `y`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        y: Var,
        key_mask: Option<&[bool]>,
    ) -> Result<BlockOut> {
        let q = self.q.forward(tape, p, x)?;
        let k = self.k.forward(tape, p, y)?;
        let v = self.v.forward(tape, p, y)?;
        let attention = tape.attention(q, k, v, self.cfg.heads, T::of(self.scale()), key_mask)?;
        let mut h = match &self.o {
            Some(o) => {
                let proj = o.forward(tape, p, attention)?;
                let residual = if self.cfg.query_dim == self.cfg.width { x } else { q };
                tape.add(residual, proj)?
            }
            None => tape.add(q, attention)?,
        };
        if let Some((ln0, _)) = &self.norms {
            h = ln0.forward(tape, p, h)?;
        }
        let f = self.ff.forward(tape, p, h)?;
        let f = match self.cfg.style {
            MabStyle::Standard => tape.leaky_relu(f, T::of(LEAKY_SLOPE)),
            MabStyle::Lean => tape.relu(f),
        };
        let mut out = tape.add(h, f)?;
        if let Some((_, ln1)) = &self.norms {
            out = ln1.forward(tape, p, out)?;
        }
        Ok(BlockOut { out, attention })
    }

    /// Multiply-accumulates for `n` queries over `m` keys, matching what the
    /// tape records.
    pub fn macs(&self, n: usize, m: usize) -> u64 {
        let d = self.cfg.width;
        let mut total = self.q.macs(n) + self.k.macs(m) + self.v.macs(m);
        total += (2 * n * m * d + self.cfg.heads * n * m) as u64;
        if let Some(o) = &self.o {
            total += o.macs(n);
        }
        // residual add, row-wise layer, activation, second residual add
        total += (n * d) as u64 + self.ff.macs(n) + 2 * (n * d) as u64;
        if let Some((a, b)) = &self.norms {
            total += a.macs(n) + b.macs(n);
        }
        total
    }
}

/// Self-attention: `SAB(X) = MAB(X, X)`.
#[derive(Clone, Debug)]
pub struct Sab {
    pub mab: Mab,
}

impl Sab {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &mut Init, name: &str, cfg: MabConfig) -> Self {
        Sab {
            mab: Mab::new(store, init, name, MabConfig { key_dim: cfg.query_dim, ..cfg }),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, mask: Option<&[bool]>) -> Result<BlockOut> {
        self.mab.forward(tape, p, x, x, mask)
    }

    pub fn macs(&self, n: usize) -> u64 {
        self.mab.macs(n, n)
    }
}

/// Induced set attention: `ISAB(X) = MAB(X, MAB(I, X))` through `k` learned points.
#[derive(Clone, Debug)]
pub struct Isab {
    pub inducing: ParamId,
    pub k: usize,
    pub inner: Mab,
    pub outer: Mab,
}

impl Isab {
    /// `cfg.query_dim` is the dimensionality of incoming points.
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &mut Init, name: &str, cfg: MabConfig, k: usize) -> Self {
        let d = cfg.width;
        let inducing = store.push(format!("{name}.inducing"), vec![k, d], init.glorot(k, d, k * d, 1.0), false);
        let inner = Mab::new(
            store,
            init,
            &format!("{name}.inner"),
            MabConfig {
                query_dim: d,
                key_dim: cfg.query_dim,
                ..cfg
            },
        );
        let outer = Mab::new(
            store,
            init,
            &format!("{name}.outer"),
            MabConfig {
                query_dim: cfg.query_dim,
                key_dim: d,
                ..cfg
            },
        );
        Isab { inducing, k, inner, outer }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, mask: Option<&[bool]>) -> Result<BlockOut> {
        let summary = self.inner.forward(tape, p, p.var(self.inducing), x, mask)?;
        self.outer.forward(tape, p, x, summary.out, None)
    }

    pub fn macs(&self, n: usize) -> u64 {
        self.inner.macs(self.k, n) + self.outer.macs(n, self.k)
    }
}

/// Pooling by attention from one learned seed vector.
#[derive(Clone, Debug)]
pub struct Pma {
    pub seed: ParamId,
    pub mab: Mab,
}

impl Pma {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &mut Init, name: &str, cfg: MabConfig) -> Self {
        let d = cfg.width;
        let seed = store.push(format!("{name}.seed"), vec![1, d], init.glorot(1, d, d, 1.0), false);
        let mab = Mab::new(
            store,
            init,
            &format!("{name}.mab"),
            MabConfig {
                query_dim: d,
                key_dim: cfg.query_dim,
                ..cfg
            },
        );
        Pma { seed, mab }
    }

    /// `[1×D]` summary of the (unmasked) rows of `x`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, mask: Option<&[bool]>) -> Result<BlockOut> {
        self.mab.forward(tape, p, p.var(self.seed), x, mask)
    }

    pub fn macs(&self, n: usize) -> u64 {
        self.mab.macs(1, n)
    }
}
