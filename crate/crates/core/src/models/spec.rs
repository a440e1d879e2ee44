use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Set Transformer over 2-D `(f, m)` frame clouds.
    Fst,
    /// Set Transformer over 3-D `(t, f, m)` spectrogram clouds.
    Tst3,
    /// Feed-forward network over a fixed-length magnitude vector.
    Fb,
    /// Time-only convolution over a fixed `frames × bins` grid.
    Cnn,
}

impl ModelKind {
    pub fn takes_clouds(self) -> bool {
        matches!(self, ModelKind::Fst | ModelKind::Tst3)
    }
}

/// Internal layout of a multihead attention block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MabStyle {
    /// Query/key/value projections, an output projection, identity residual
    /// and a leaky-ReLU row-wise layer. Keys carry no bias.
    #[default]
    Standard,
    /// Residual through the projected queries and a single ReLU row-wise
    /// layer; no separate output projection. All projections carry biases.
    Lean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttnScale {
    /// `1/√(d_h / heads)`
    #[default]
    PerHead,
    /// `1/√d_h`
    Width,
    /// Unscaled `softmax(Q·Kᵀ)·V`.
    Off,
}

/// Hyperparameters of one classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Point dimension for clouds, vector length for FB, bins per frame for CNN.
    pub input_dim: usize,
    pub classes: usize,
    /// Set Transformer width `D`.
    pub hidden: usize,
    pub heads: usize,
    pub inducing: usize,
    pub isab_layers: usize,
    /// Linear `input_dim → D` map ahead of the first ISAB.
    pub input_embed: bool,
    pub mab_style: MabStyle,
    pub attn_scale: AttnScale,
    pub layer_norm: bool,
    /// FB hidden layer widths.
    pub fb_hidden: Vec<usize>,
    /// FB input dropout probability during training.
    pub input_dropout: f64,
    pub cnn_channels: usize,
    pub cnn_frames: usize,
}

impl ModelSpec {
    fn set_transformer(kind: ModelKind, input_dim: usize, hidden: usize, heads: usize, classes: usize) -> Self {
        ModelSpec {
            kind,
            input_dim,
            classes,
            hidden,
            heads,
            inducing: 16,
            isab_layers: 2,
            input_embed: true,
            mab_style: MabStyle::Standard,
            attn_scale: AttnScale::PerHead,
            layer_norm: false,
            fb_hidden: Vec::new(),
            input_dropout: 0.0,
            cnn_channels: 0,
            cnn_frames: 0,
        }
    }

    /// Frame-wise Set Transformer: 2 ISAB + PMA at width 64, 4 heads.
    pub fn fst(classes: usize) -> Self {
        Self::set_transformer(ModelKind::Fst, 2, 64, 4, classes)
    }

    /// Toy frame-wise Set Transformer at width 2, one head. Points already
    /// have the block width, so they enter the first ISAB unembedded.
    pub fn fst_toy(classes: usize) -> Self {
        ModelSpec {
            input_embed: false,
            ..Self::set_transformer(ModelKind::Fst, 2, 2, 1, classes)
        }
    }

    /// Spectro-temporal Set Transformer: 2 ISAB + PMA at width 64 on 3-D points.
    pub fn tst3(classes: usize) -> Self {
        Self::set_transformer(ModelKind::Tst3, 3, 64, 4, classes)
    }

    /// Variant without input embedding, 64 inducing points and [`MabStyle::Lean`] blocks.
    pub fn lean(mut self) -> Self {
        self.input_embed = false;
        self.inducing = 64;
        self.mab_style = MabStyle::Lean;
        self.attn_scale = AttnScale::Width;
        self
    }

    fn fb_with(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Fb,
            input_dim,
            classes,
            hidden: 0,
            heads: 0,
            inducing: 0,
            isab_layers: 0,
            input_embed: false,
            mab_style: MabStyle::Standard,
            attn_scale: AttnScale::PerHead,
            layer_norm: false,
            fb_hidden: hidden,
            input_dropout: 0.2,
            cnn_channels: 0,
            cnn_frames: 0,
        }
    }

    /// Frame-wise baseline on 1025 bins with 512 and 256 hidden units.
    pub fn fb(classes: usize) -> Self {
        Self::fb_with(1025, vec![512, 256], classes)
    }

    /// Toy baseline: 64 inputs, 8 hidden units.
    pub fn fb_toy(classes: usize) -> Self {
        Self::fb_with(64, vec![8], classes)
    }

    pub fn fb_custom(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Self {
        Self::fb_with(input_dim, hidden, classes)
    }

    /// Spectrogram CNN: 30 channels of `(10, 1)` kernels over 513 bins.
    pub fn cnn(classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Cnn,
            input_dim: 513,
            classes,
            hidden: 0,
            heads: 0,
            inducing: 0,
            isab_layers: 0,
            input_embed: false,
            mab_style: MabStyle::Standard,
            attn_scale: AttnScale::PerHead,
            layer_norm: false,
            fb_hidden: Vec::new(),
            input_dropout: 0.0,
            cnn_channels: 30,
            cnn_frames: 10,
        }
    }

    pub fn with_hidden(mut self, hidden: usize, heads: usize) -> Self {
        self.hidden = hidden;
        self.heads = heads;
        self
    }

    pub fn with_inducing(mut self, inducing: usize) -> Self {
        self.inducing = inducing;
        self
    }

    pub fn with_input_dim(mut self, input_dim: usize) -> Self {
        self.input_dim = input_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Param(msg));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.input_dim == 0 {
            return bad("input dimension must be positive".into());
        }
        match self.kind {
            ModelKind::Fst | ModelKind::Tst3 => {
                let want = if self.kind == ModelKind::Fst { 2 } else { 3 };
                if self.input_dim != want {
                    return bad(format!("{:?} takes {want}-D points, got {}", self.kind, self.input_dim));
                }
                if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
                    return bad(format!("{} heads must divide width {}", self.heads, self.hidden));
                }
                if self.inducing == 0 {
                    return bad("need at least one inducing point".into());
                }
            }
            ModelKind::Fb => {
                if self.fb_hidden.iter().any(|&h| h == 0) {
                    return bad("hidden layer widths must be positive".into());
                }
                if !(0.0..1.0).contains(&self.input_dropout) {
                    return bad(format!("dropout {} outside [0, 1)", self.input_dropout));
                }
            }
            ModelKind::Cnn => {
                if self.cnn_channels == 0 || self.cnn_frames < 10 {
                    return bad("CNN needs channels and at least 10 frames".into());
                }
            }
        }
        Ok(())
    }
}
