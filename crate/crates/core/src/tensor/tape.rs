//! Reverse-mode differentiation by operation recording.
//!
//! Every primitive appends one node holding its output value. `backward`
//! walks the nodes from the loss back to the leaves, so node order on the
//! tape is already a valid topological order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::Tensor;
use super::kernels::{dot, matmul_acc, matmul_nt_acc, matmul_tn_acc, softmax_row, softmax_row_adjoint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        a: Var,
        factor: T,
    },
    LeakyRelu {
        a: Var,
        slope: T,
    },
    Relu {
        a: Var,
    },
    Dropout {
        a: Var,
        mask: Vec<T>,
    },
    MaskedSoftmax {
        a: Var,
    },
    LayerNorm {
        a: Var,
        /// Reciprocal standard deviation of every row.
        inv_std: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        scale: T,
        /// `[heads × n × m]` attention weights.
        probs: Vec<T>,
    },
    ConvTime {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Sum {
        a: Var,
    },
    Reshape {
        a: Var,
    },
    CrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Attention weights recorded by [`Tape::attention`].
#[derive(Clone, Copy, Debug)]
pub struct AttentionProbs<'a, T> {
    pub heads: usize,
    pub queries: usize,
    pub keys: usize,
    /// `[heads × queries × keys]`, row-major.
    pub probs: &'a [T],
}

impl<T: Scalar> AttentionProbs<'_, T> {
    /// Weights of one query row averaged over heads.
    pub fn head_mean(&self, query: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.keys];
        let inv = T::one() / T::of(self.heads as f64);
        for h in 0..self.heads {
            let base = (h * self.queries + query) * self.keys;
            for (o, &p) in out.iter_mut().zip(&self.probs[base..base + self.keys]) {
                *o += p * inv;
            }
        }
        out
    }
}

/// Recording of one forward computation.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
    macs: u64,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
            macs: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`, so a tape holding
    /// bound parameters can be reused across evaluation passes.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Multiply-accumulates performed by the primitives recorded so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            value: Tensor {
                shape,
                data,
                requires_grad,
                grad: None,
            },
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Places a tensor on the tape; its `requires_grad` flag is kept.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad;
        self.push(t.shape, t.data, Op::Leaf, rg)
    }

    /// Places a trainable leaf on the tape.
    pub fn param(&mut self, shape: Vec<usize>, data: Vec<T>) -> Var {
        self.push(shape, data, Op::Leaf, true)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<T>) -> Var {
        self.push(shape, data, Op::Leaf, false)
    }

    /// Matrix product of a `[m×k]` and a `[k×n]` operand.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        matmul_acc(&self.value(a).data, &self.value(b).data, &mut out, m, k, n);
        self.macs += (m * k * n) as u64;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// `b` either matches `a` exactly or matches `a` without its leading axis.
    fn broadcast_period(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let trailing_ok = sa.len() >= 2
            && (sb == &sa[1..] || (sb.len() == sa.len() && sb[0] == 1 && sb[1..] == sa[1..]));
        if sa == sb || trailing_ok {
            Ok(self.value(b).numel())
        } else {
            Err(Error::Shape {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let period = self.broadcast_period("add", a, b)?;
        let bd = &self.value(b).data;
        let data: Vec<T> = self
            .value(a)
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bd[i % period])
            .collect();
        self.macs += data.len() as u64;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, data, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let period = self.broadcast_period("mul", a, b)?;
        let bd = &self.value(b).data;
        let data: Vec<T> = self
            .value(a)
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x * bd[i % period])
            .collect();
        self.macs += data.len() as u64;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, data, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let data: Vec<T> = self.value(a).data.iter().map(|&x| x * factor).collect();
        self.macs += data.len() as u64;
        let rg = self.requires_grad(a);
        let shape = self.shape(a).to_vec();
        self.push(shape, data, Op::Scale { a, factor }, rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let data: Vec<T> = self
            .value(a)
            .data
            .iter()
            .map(|&x| if x > T::zero() { x } else { x * slope })
            .collect();
        self.macs += data.len() as u64;
        let rg = self.requires_grad(a);
        let shape = self.shape(a).to_vec();
        self.push(shape, data, Op::LeakyRelu { a, slope }, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data: Vec<T> = self.value(a).data.iter().map(|&x| x.max(T::zero())).collect();
        self.macs += data.len() as u64;
        let rg = self.requires_grad(a);
        let shape = self.shape(a).to_vec();
        self.push(shape, data, Op::Relu { a }, rg)
    }

    /// Inverted dropout. Identity when `train` is false or `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, seed: u64, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Param(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep_scale = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(a).numel())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep_scale })
            .collect();
        let data: Vec<T> = self.value(a).data.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        self.macs += data.len() as u64;
        let rg = self.requires_grad(a);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, data, Op::Dropout { a, mask }, rg))
    }

    /// Row-wise softmax of a `[r×c]` tensor; masked (`false`) entries come out as exactly 0.
    pub fn masked_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (r, c) = self.value(a).dims2();
        if let Some(m) = mask {
            if m.len() != r * c {
                return Err(Error::Dimension(format!(
                    "softmax mask has {} entries for a {r}×{c} input",
                    m.len()
                )));
            }
        }
        let mut data = self.value(a).data.clone();
        for row in 0..r {
            let keep = mask.map(|m| &m[row * c..(row + 1) * c]);
            if !softmax_row(&mut data[row * c..(row + 1) * c], keep) {
                return Err(Error::FullyMasked { row });
            }
        }
        self.macs += data.len() as u64;
        let rg = self.requires_grad(a);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, data, Op::MaskedSoftmax { a }, rg))
    }

    /// Normalises every row of `a` to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var, eps: T) -> Var {
        let (r, c) = self.value(a).dims2();
        let mut data = self.value(a).data.clone();
        let mut inv_std = Vec::with_capacity(r);
        let cf = T::of(c as f64);
        for row in data.chunks_mut(c) {
            let mean = row.iter().copied().sum::<T>() / cf;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / cf;
            let inv = T::one() / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
            inv_std.push(inv);
        }
        self.macs += 2 * data.len() as u64;
        let rg = self.requires_grad(a);
        let shape = self.shape(a).to_vec();
        self.push(shape, data, Op::LayerNorm { a, inv_std }, rg)
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q: [n×d]`, `k, v: [m×d]`, `d % heads == 0`. `key_mask` marks usable
    /// keys. Head `h` uses columns `h·d/heads .. (h+1)·d/heads` and the
    /// head outputs are written back into the same columns.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        scale: T,
        key_mask: Option<&[bool]>,
    ) -> Result<Var> {
        let (sq, sk, sv) = (self.shape(q), self.shape(k), self.shape(v));
        if sq.len() != 2 || sk.len() != 2 || sq[1] != sk[1] {
            return Err(Error::Shape {
                op: "attention(q,k)",
                lhs: sq.to_vec(),
                rhs: sk.to_vec(),
            });
        }
        if sk != sv {
            return Err(Error::Shape {
                op: "attention(k,v)",
                lhs: sk.to_vec(),
                rhs: sv.to_vec(),
            });
        }
        let (n, d, m) = (sq[0], sq[1], sk[0]);
        if heads == 0 || d % heads != 0 {
            return Err(Error::Param(format!("{heads} heads do not divide width {d}")));
        }
        if let Some(mask) = key_mask {
            if mask.len() != m {
                return Err(Error::Dimension(format!(
                    "key mask has {} entries for {m} keys",
                    mask.len()
                )));
            }
        }
        let dk = d / heads;
        let (qd, kd, vd) = (&self.value(q).data, &self.value(k).data, &self.value(v).data);
        let mut probs = vec![T::zero(); heads * n * m];
        let mut out = vec![T::zero(); n * d];
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            for i in 0..n {
                let qi = &qd[i * d + cols.start..i * d + cols.end];
                let row = &mut probs[(h * n + i) * m..(h * n + i + 1) * m];
                for (j, s) in row.iter_mut().enumerate() {
                    *s = scale * dot(qi, &kd[j * d + cols.start..j * d + cols.end]);
                }
                if !softmax_row(row, key_mask) {
                    return Err(Error::FullyMasked { row: i });
                }
                let oi = &mut out[i * d + cols.start..i * d + cols.end];
                for (j, &p) in row.iter().enumerate() {
                    if p == T::zero() {
                        continue;
                    }
                    let vj = &vd[j * d + cols.start..j * d + cols.end];
                    for (o, &x) in oi.iter_mut().zip(vj) {
                        *o += p * x;
                    }
                }
            }
        }
        self.macs += (2 * n * m * d + heads * n * m) as u64;
        let rg = self.requires_grad(q) || self.requires_grad(k) || self.requires_grad(v);
        Ok(self.push(
            vec![n, d],
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                scale,
                probs,
            },
            rg,
        ))
    }

    /// Attention weights recorded by an [`attention`](Self::attention) node.
    pub fn attention_probs(&self, v: Var) -> Option<AttentionProbs<'_, T>> {
        match &self.nodes[v.0].op {
            Op::Attention { q, k, heads, probs, .. } => Some(AttentionProbs {
                heads: *heads,
                queries: self.shape(*q)[0],
                keys: self.shape(*k)[0],
                probs,
            }),
            _ => None,
        }
    }

    /// Valid correlation along the time axis.
    ///
    /// `x: [C_in×T×F]`, `w: [C_out×C_in×K×1]`, optional `b: [C_out]`;
    /// output `[C_out×(T−K+1)×F]`.
    pub fn conv_time(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 4 || sw[3] != 1 || sw[1] != sx[0] {
            return Err(Error::Shape {
                op: "conv_time",
                lhs: sx,
                rhs: sw,
            });
        }
        let (c_in, t, f) = (sx[0], sx[1], sx[2]);
        let (c_out, kt) = (sw[0], sw[2]);
        if t < kt {
            return Err(Error::InputTooShort { needed: kt, got: t });
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(Error::Shape {
                    op: "conv_time bias",
                    lhs: vec![c_out],
                    rhs: self.shape(b).to_vec(),
                });
            }
        }
        let t_out = t - kt + 1;
        let (xd, wd) = (&self.value(x).data, &self.value(w).data);
        let mut out = vec![T::zero(); c_out * t_out * f];
        for o in 0..c_out {
            for c in 0..c_in {
                for kk in 0..kt {
                    let wv = wd[(o * c_in + c) * kt + kk];
                    for ti in 0..t_out {
                        let src = &xd[(c * t + ti + kk) * f..(c * t + ti + kk + 1) * f];
                        let dst = &mut out[(o * t_out + ti) * f..(o * t_out + ti + 1) * f];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
            if let Some(b) = b {
                let bv = self.value(b).data[o];
                for d in &mut out[o * t_out * f..(o + 1) * t_out * f] {
                    *d += bv;
                }
            }
        }
        self.macs += (c_out * c_in * kt * t_out * f) as u64;
        if b.is_some() {
            self.macs += (c_out * t_out * f) as u64;
        }
        let rg = self.requires_grad(x)
            || self.requires_grad(w)
            || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(vec![c_out, t_out, f], out, Op::ConvTime { x, w, b }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().copied().sum();
        self.macs += self.value(a).numel() as u64;
        let rg = self.requires_grad(a);
        self.push(vec![1], vec![s], Op::Sum { a }, rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).numel() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape,
            });
        }
        let data = self.value(a).data.clone();
        let rg = self.requires_grad(a);
        Ok(self.push(shape, data, Op::Reshape { a }, rg))
    }

    /// Softmax cross-entropy of a single logit row against `label`.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = &self.value(logits).data;
        let c = z.len();
        if self.value(logits).dims2().0 != 1 {
            return Err(Error::Dimension(format!(
                "cross_entropy expects one logit row, got {:?}",
                self.shape(logits)
            )));
        }
        if label >= c {
            return Err(Error::Param(format!("label {label} out of range for {c} classes")));
        }
        let mut probs = z.clone();
        softmax_row(&mut probs, None);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        let loss = lse - z[label];
        self.macs += c as u64;
        let rg = self.requires_grad(logits);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                label,
                probs,
            },
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss`, filling `grad` on every
    /// `requires_grad` node that feeds it. A tape can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::NotScalar(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if self.nodes[id].value.requires_grad {
                self.adjoint(id, &g, &mut grads);
                self.nodes[id].value.grad = Some(g);
            }
        }
        Ok(())
    }

    fn adjoint(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].value.requires_grad;
        macro_rules! acc {
            ($v:expr) => {
                slot(grads, $v.0, nodes[$v.0].value.numel())
            };
        }
        match &nodes[id].op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                if needs(*a) {
                    matmul_nt_acc(g, &nodes[b.0].value.data, acc!(*a), *m, *k, *n);
                }
                if needs(*b) {
                    matmul_tn_acc(&nodes[a.0].value.data, g, acc!(*b), *m, *k, *n);
                }
            }
            Op::Add { a, b } => {
                if needs(*a) {
                    for (d, &x) in acc!(*a).iter_mut().zip(g) {
                        *d += x;
                    }
                }
                if needs(*b) {
                    let db = acc!(*b);
                    let period = db.len();
                    for (i, &x) in g.iter().enumerate() {
                        db[i % period] += x;
                    }
                }
            }
            Op::Mul { a, b } => {
                let (ad, bd) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                let period = bd.len();
                if needs(*a) {
                    for (i, (d, &x)) in acc!(*a).iter_mut().zip(g).enumerate() {
                        *d += x * bd[i % period];
                    }
                }
                if needs(*b) {
                    let db = acc!(*b);
                    for (i, &x) in g.iter().enumerate() {
                        db[i % period] += x * ad[i];
                    }
                }
            }
            Op::Scale { a, factor } => {
                if needs(*a) {
                    for (d, &x) in acc!(*a).iter_mut().zip(g) {
                        *d += x * *factor;
                    }
                }
            }
            Op::LeakyRelu { a, slope } => {
                if needs(*a) {
                    let ad = &nodes[a.0].value.data;
                    for ((d, &x), &inp) in acc!(*a).iter_mut().zip(g).zip(ad) {
                        *d += if inp > T::zero() { x } else { x * *slope };
                    }
                }
            }
            Op::Relu { a } => {
                if needs(*a) {
                    let ad = &nodes[a.0].value.data;
                    for ((d, &x), &inp) in acc!(*a).iter_mut().zip(g).zip(ad) {
                        if inp > T::zero() {
                            *d += x;
                        }
                    }
                }
            }
            Op::Dropout { a, mask } => {
                if needs(*a) {
                    for ((d, &x), &mk) in acc!(*a).iter_mut().zip(g).zip(mask) {
                        *d += x * mk;
                    }
                }
            }
            Op::MaskedSoftmax { a } => {
                if needs(*a) {
                    let y = &nodes[id].value;
                    let (r, c) = y.dims2();
                    let da = acc!(*a);
                    for row in 0..r {
                        let span = row * c..(row + 1) * c;
                        softmax_row_adjoint(&y.data[span.clone()], &g[span.clone()], &mut da[span]);
                    }
                }
            }
            Op::LayerNorm { a, inv_std } => {
                if needs(*a) {
                    let y = &nodes[id].value;
                    let (r, c) = y.dims2();
                    let cf = T::of(c as f64);
                    let da = acc!(*a);
                    for row in 0..r {
                        let span = row * c..(row + 1) * c;
                        let (yr, gr) = (&y.data[span.clone()], &g[span.clone()]);
                        let mean_g = gr.iter().copied().sum::<T>() / cf;
                        let mean_gy = dot(gr, yr) / cf;
                        for ((d, &gv), &yv) in da[span].iter_mut().zip(gr).zip(yr) {
                            *d += inv_std[row] * (gv - mean_g - yv * mean_gy);
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                scale,
                probs,
            } => {
                let (qd, kd, vd) = (&nodes[q.0].value.data, &nodes[k.0].value.data, &nodes[v.0].value.data);
                let (n, d) = (nodes[q.0].value.shape[0], nodes[q.0].value.shape[1]);
                let m = nodes[k.0].value.shape[0];
                let dk = d / heads;
                let mut dq = vec![T::zero(); n * d];
                let mut dkv = vec![T::zero(); m * d];
                let mut dv = vec![T::zero(); m * d];
                let mut dp = vec![T::zero(); m];
                let mut ds = vec![T::zero(); m];
                for h in 0..*heads {
                    let cols = h * dk..(h + 1) * dk;
                    for i in 0..n {
                        let p = &probs[(h * n + i) * m..(h * n + i + 1) * m];
                        let gi = &g[i * d + cols.start..i * d + cols.end];
                        for j in 0..m {
                            dp[j] = if p[j] == T::zero() {
                                T::zero()
                            } else {
                                dot(gi, &vd[j * d + cols.start..j * d + cols.end])
                            };
                            if p[j] != T::zero() {
                                let dvj = &mut dv[j * d + cols.start..j * d + cols.end];
                                for (o, &x) in dvj.iter_mut().zip(gi) {
                                    *o += p[j] * x;
                                }
                            }
                        }
                        ds.iter_mut().for_each(|x| *x = T::zero());
                        softmax_row_adjoint(p, &dp, &mut ds);
                        let qi = &qd[i * d + cols.start..i * d + cols.end];
                        let dqi = &mut dq[i * d + cols.start..i * d + cols.end];
                        for j in 0..m {
                            let s = ds[j] * *scale;
                            if s == T::zero() {
                                continue;
                            }
                            let kj = &kd[j * d + cols.start..j * d + cols.end];
                            for (o, &x) in dqi.iter_mut().zip(kj) {
                                *o += s * x;
                            }
                            let dkj = &mut dkv[j * d + cols.start..j * d + cols.end];
                            for (o, &x) in dkj.iter_mut().zip(qi) {
                                *o += s * x;
                            }
                        }
                    }
                }
                for (var, local) in [(*q, dq), (*k, dkv), (*v, dv)] {
                    if needs(var) {
                        for (d, x) in acc!(var).iter_mut().zip(local) {
                            *d += x;
                        }
                    }
                }
            }
            Op::ConvTime { x, w, b } => {
                let (sx, sw) = (&nodes[x.0].value.shape, &nodes[w.0].value.shape);
                let (c_in, t, f) = (sx[0], sx[1], sx[2]);
                let (c_out, kt) = (sw[0], sw[2]);
                let t_out = t - kt + 1;
                let (xd, wd) = (&nodes[x.0].value.data, &nodes[w.0].value.data);
                if needs(*x) {
                    let dx = acc!(*x);
                    for o in 0..c_out {
                        for c in 0..c_in {
                            for kk in 0..kt {
                                let wv = wd[(o * c_in + c) * kt + kk];
                                for ti in 0..t_out {
                                    let go = &g[(o * t_out + ti) * f..(o * t_out + ti + 1) * f];
                                    let dst = &mut dx[(c * t + ti + kk) * f..(c * t + ti + kk + 1) * f];
                                    for (dd, &gv) in dst.iter_mut().zip(go) {
                                        *dd += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                if needs(*w) {
                    let dw = acc!(*w);
                    for o in 0..c_out {
                        for c in 0..c_in {
                            for kk in 0..kt {
                                let mut total = T::zero();
                                for ti in 0..t_out {
                                    let go = &g[(o * t_out + ti) * f..(o * t_out + ti + 1) * f];
                                    let src = &xd[(c * t + ti + kk) * f..(c * t + ti + kk + 1) * f];
                                    total += dot(go, src);
                                }
                                dw[(o * c_in + c) * kt + kk] += total;
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    if needs(*b) {
                        let db = acc!(*b);
                        for (o, dbo) in db.iter_mut().enumerate() {
                            *dbo += g[o * t_out * f..(o + 1) * t_out * f].iter().copied().sum();
                        }
                    }
                }
            }
            Op::Sum { a } => {
                if needs(*a) {
                    for d in acc!(*a).iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::Reshape { a } => {
                if needs(*a) {
                    for (d, &x) in acc!(*a).iter_mut().zip(g) {
                        *d += x;
                    }
                }
            }
            Op::CrossEntropy { logits, label, probs } => {
                if needs(*logits) {
                    for (j, (d, &p)) in acc!(*logits).iter_mut().zip(probs).enumerate() {
                        let target = if j == *label { T::one() } else { T::zero() };
                        *d += g[0] * (p - target);
                    }
                }
            }
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], idx: usize, len: usize) -> &mut Vec<T> {
    grads[idx].get_or_insert_with(|| vec![T::zero(); len])
}
