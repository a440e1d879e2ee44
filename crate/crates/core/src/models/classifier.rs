use super::attention::{Isab, MabConfig, Pma};
use super::layers::Linear;
use super::params::{Bound, Init, ParamId, ParamStore};
use super::spec::{ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::pointcloud::{CloudBatch, PointCloud};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Var, LEAKY_SLOPE};

/// Time extent of the CNN kernels.
pub const CNN_KERNEL: usize = 10;

/// Gain of the final classification layer, small so initial logits are near uniform.
const HEAD_GAIN: f64 = 0.01;

/// Featurised input for one example.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelInput {
    Cloud(PointCloud),
    Vector(Vec<f64>),
    /// `frames × bins` magnitudes, row-major.
    Grid { frames: usize, bins: usize, data: Vec<f64> },
}

impl ModelInput {
    pub fn as_cloud(&self) -> Option<&PointCloud> {
        match self {
            ModelInput::Cloud(c) => Some(c),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelInput::Cloud(_) => "cloud",
            ModelInput::Vector(_) => "vector",
            ModelInput::Grid { .. } => "grid",
        }
    }
}

/// Per-pass switches: dropout is active only when `train` is set.
#[derive(Clone, Copy, Debug, Default)]
pub struct Mode {
    pub train: bool,
    pub seed: u64,
}

impl Mode {
    pub const EVAL: Mode = Mode { train: false, seed: 0 };

    pub fn train(seed: u64) -> Self {
        Mode { train: true, seed }
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    /// `[1×C]` raw logits.
    pub logits: Var,
    /// Pooling attention node (set models only).
    pub pooling: Option<Var>,
}

#[derive(Clone, Debug)]
enum Net {
    Set {
        embed: Option<Linear>,
        isabs: Vec<Isab>,
        pma: Pma,
        head: Linear,
    },
    Ffn {
        layers: Vec<Linear>,
    },
    Cnn {
        kernels: ParamId,
        bias: ParamId,
        head: Linear,
    },
}

/// One of the four classifier families with its parameters.
#[derive(Clone, Debug)]
pub struct Classifier<T> {
    spec: ModelSpec,
    params: ParamStore<T>,
    net: Net,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init::new(seed);
        let net = match spec.kind {
            ModelKind::Fst | ModelKind::Tst3 => build_set(&spec, &mut params, &mut init),
            ModelKind::Fb => {
                let mut widths = vec![spec.input_dim];
                widths.extend(&spec.fb_hidden);
                widths.push(spec.classes);
                let last = widths.len() - 2;
                let layers = widths
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| {
                        let gain = if i == last { HEAD_GAIN } else { 1.0 };
                        Linear::new(&mut params, &mut init, &format!("fc{i}"), w[0], w[1], true, gain)
                    })
                    .collect();
                Net::Ffn { layers }
            }
            ModelKind::Cnn => {
                let ch = spec.cnn_channels;
                let kernels = params.push(
                    "conv.weight",
                    vec![ch, 1, CNN_KERNEL, 1],
                    init.glorot(CNN_KERNEL, ch * CNN_KERNEL, ch * CNN_KERNEL, 1.0),
                    true,
                );
                let bias = params.push("conv.bias", vec![ch], vec![T::zero(); ch], false);
                let flat = ch * (spec.cnn_frames - CNN_KERNEL + 1) * spec.input_dim;
                let head = Linear::new(&mut params, &mut init, "head", flat, spec.classes, true, HEAD_GAIN);
                Net::Cnn { kernels, bias, head }
            }
        };
        Ok(Classifier { spec, params, net })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Checks that `input` has the shape this model was built for.
    pub fn check_input(&self, input: &ModelInput) -> Result<()> {
        let spec = &self.spec;
        match (spec.kind, input) {
            (ModelKind::Fst | ModelKind::Tst3, ModelInput::Cloud(c)) => {
                if c.is_empty() {
                    return Err(Error::EmptyCloud);
                }
                if c.dim() != spec.input_dim {
                    return Err(Error::Dimension(format!(
                        "model takes {}-D points, cloud has {}-D points",
                        spec.input_dim,
                        c.dim()
                    )));
                }
                Ok(())
            }
            (ModelKind::Fb, ModelInput::Vector(v)) => {
                if v.len() != spec.input_dim {
                    return Err(Error::Dimension(format!(
                        "model takes vectors of length {}, got {}",
                        spec.input_dim,
                        v.len()
                    )));
                }
                Ok(())
            }
            (ModelKind::Cnn, ModelInput::Grid { frames, bins, data }) => {
                if *frames < CNN_KERNEL {
                    return Err(Error::InputTooShort {
                        needed: CNN_KERNEL,
                        got: *frames,
                    });
                }
                if *frames != spec.cnn_frames || *bins != spec.input_dim || data.len() != frames * bins {
                    return Err(Error::Dimension(format!(
                        "model takes {}×{} grids, got {frames}×{bins}",
                        spec.cnn_frames, spec.input_dim
                    )));
                }
                Ok(())
            }
            (kind, other) => Err(Error::Dimension(format!(
                "{kind:?} model cannot take {} input",
                other.kind_name()
            ))),
        }
    }

    /// Records the forward pass of one example on `tape`.
    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound, input: &ModelInput, mode: Mode) -> Result<Forward> {
        self.check_input(input)?;
        match input {
            ModelInput::Cloud(c) => {
                let x = tape.constant(vec![c.len(), c.dim()], to_scalar(c.coords()));
                self.set_forward(tape, p, x, None)
            }
            ModelInput::Vector(v) => {
                let x = tape.constant(vec![1, v.len()], to_scalar(v));
                self.ffn_forward(tape, p, x, mode)
            }
            ModelInput::Grid { frames, bins, data } => {
                let x = tape.constant(vec![1, *frames, *bins], to_scalar(data));
                self.cnn_forward(tape, p, x)
            }
        }
    }

    /// Forward pass of a zero-padded cloud `[n×dim]` whose real rows are marked in `mask`.
    pub fn forward_padded(&self, tape: &mut Tape<T>, p: &Bound, coords: &[f64], mask: &[bool]) -> Result<Forward> {
        if !self.spec.kind.takes_clouds() {
            return Err(Error::Dimension(format!("{:?} model cannot take cloud input", self.spec.kind)));
        }
        let dim = self.spec.input_dim;
        if coords.len() != mask.len() * dim {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} rows of {dim}-D points",
                coords.len(),
                mask.len()
            )));
        }
        let x = tape.constant(vec![mask.len(), dim], to_scalar(coords));
        self.set_forward(tape, p, x, Some(mask))
    }

    fn set_forward(&self, tape: &mut Tape<T>, p: &Bound, x: Var, mask: Option<&[bool]>) -> Result<Forward> {
        let Net::Set { embed, isabs, pma, head } = &self.net else {
            unreachable!("cloud input is checked against the model kind")
        };
        let mut h = match embed {
            Some(e) => e.forward(tape, p, x)?,
            None => x,
        };
        for isab in isabs {
            h = isab.forward(tape, p, h, mask)?.out;
        }
        let pooled = pma.forward(tape, p, h, mask)?;
        let logits = head.forward(tape, p, pooled.out)?;
        Ok(Forward {
            logits,
            pooling: Some(pooled.attention),
        })
    }

    fn ffn_forward(&self, tape: &mut Tape<T>, p: &Bound, x: Var, mode: Mode) -> Result<Forward> {
        let Net::Ffn { layers } = &self.net else {
            unreachable!("vector input is checked against the model kind")
        };
        let mut h = tape.dropout(x, self.spec.input_dropout, mode.seed, mode.train)?;
        for (i, layer) in layers.iter().enumerate() {
            h = layer.forward(tape, p, h)?;
            if i + 1 < layers.len() {
                h = tape.leaky_relu(h, T::of(LEAKY_SLOPE));
            }
        }
        Ok(Forward { logits: h, pooling: None })
    }

    fn cnn_forward(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Forward> {
        let Net::Cnn { kernels, bias, head } = &self.net else {
            unreachable!("grid input is checked against the model kind")
        };
        let conv = tape.conv_time(x, p.var(*kernels), Some(p.var(*bias)))?;
        let act = tape.leaky_relu(conv, T::of(LEAKY_SLOPE));
        let flat = tape.reshape(act, vec![1, head.d_in])?;
        let logits = head.forward(tape, p, flat)?;
        Ok(Forward { logits, pooling: None })
    }

    /// Evaluation-mode logits of one example.
    pub fn logits(&self, input: &ModelInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let f = self.forward(&mut tape, &p, input, Mode::EVAL)?;
        Ok(tape.value(f.logits).to_f64())
    }

    /// Evaluation-mode logits of many examples, binding the parameters once.
    pub fn logits_many<'a>(&self, inputs: impl IntoIterator<Item = &'a ModelInput>) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let mark = tape.len();
        inputs
            .into_iter()
            .map(|input| {
                let f = self.forward(&mut tape, &p, input, Mode::EVAL)?;
                let out = tape.value(f.logits).to_f64();
                tape.truncate(mark);
                Ok(out)
            })
            .collect()
    }

    /// Evaluation-mode logits of every row of a padded batch.
    pub fn logits_batch(&self, batch: &CloudBatch) -> Result<Vec<Vec<f64>>> {
        if batch.dim != self.spec.input_dim {
            return Err(Error::Dimension(format!(
                "model takes {}-D points, batch has {}-D points",
                self.spec.input_dim, batch.dim
            )));
        }
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        (0..batch.len())
            .map(|b| {
                let (coords, mask) = batch.row(b);
                let f = self.forward_padded(&mut tape, &p, coords, mask)?;
                Ok(tape.value(f.logits).to_f64())
            })
            .collect()
    }

    /// Argmax of the evaluation-mode logits; ties go to the lower class.
    pub fn predict(&self, input: &ModelInput) -> Result<usize> {
        Ok(argmax(&self.logits(input)?))
    }

    /// Pooling attention over the points of `cloud`, averaged over heads.
    pub fn attention_weights(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        let input = ModelInput::Cloud(cloud.clone());
        self.check_input(&input)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let f = self.forward(&mut tape, &p, &input, Mode::EVAL)?;
        let var = f.pooling.expect("set models record pooling attention");
        let probs = tape.attention_probs(var).expect("pooling node is an attention node");
        Ok(probs.head_mean(0).into_iter().map(Scalar::to_f64_lossy).collect())
    }

    /// Analytic multiply-accumulate count of one evaluation-mode forward pass.
    /// `size` is the cloud cardinality for set models and ignored otherwise.
    pub fn macs(&self, size: usize) -> u64 {
        match &self.net {
            Net::Set { embed, isabs, pma, head } => {
                embed.as_ref().map_or(0, |e| e.macs(size))
                    + isabs.iter().map(|i| i.macs(size)).sum::<u64>()
                    + pma.macs(size)
                    + head.macs(1)
            }
            Net::Ffn { layers } => {
                let hidden: usize = layers[..layers.len() - 1].iter().map(|l| l.d_out).sum();
                layers.iter().map(|l| l.macs(1)).sum::<u64>() + hidden as u64
            }
            Net::Cnn { head, .. } => {
                let t_out = self.spec.cnn_frames - CNN_KERNEL + 1;
                let out = (self.spec.cnn_channels * t_out * self.spec.input_dim) as u64;
                // convolution, bias, activation
                out * CNN_KERNEL as u64 + 2 * out + head.macs(1)
            }
        }
    }

    /// Analytic count for one training step on one example: forward, loss,
    /// and a backward pass costing twice the forward products.
    pub fn training_macs(&self, size: usize) -> u64 {
        3 * self.macs(size) + self.spec.classes as u64
    }
}

fn build_set<T: Scalar>(spec: &ModelSpec, params: &mut ParamStore<T>, init: &mut Init) -> Net {
    let d = spec.hidden;
    let embed = spec
        .input_embed
        .then(|| Linear::new(params, init, "embed", spec.input_dim, d, true, 1.0));
    let cfg = |query_dim| MabConfig {
        query_dim,
        key_dim: query_dim,
        width: d,
        heads: spec.heads,
        style: spec.mab_style,
        scale: spec.attn_scale,
        layer_norm: spec.layer_norm,
    };
    let mut width = if spec.input_embed { d } else { spec.input_dim };
    let isabs = (0..spec.isab_layers)
        .map(|i| {
            let block = Isab::new(params, init, &format!("isab{i}"), cfg(width), spec.inducing);
            width = d;
            block
        })
        .collect();
    let pma = Pma::new(params, init, "pma", cfg(width));
    let head = Linear::new(params, init, "head", d, spec.classes, true, HEAD_GAIN);
    Net::Set { embed, isabs, pma, head }
}

fn to_scalar<T: Scalar>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::of(x)).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
