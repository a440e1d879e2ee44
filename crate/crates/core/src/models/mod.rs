//! Set Transformer blocks, the four classifier families and their input adapters.

mod adapters;
mod attention;
mod checkpoint;
mod classifier;
mod layers;
mod params;
mod spec;

#[cfg(test)]
mod tests;

pub use adapters::{pad_window_input, zero_out};
pub use attention::{BlockOut, Isab, Mab, MabConfig, Pma, Sab};
pub use checkpoint::{Checkpoint, NamedArray, CHECKPOINT_VERSION};
pub use classifier::{argmax, Classifier, Forward, Mode, ModelInput, CNN_KERNEL};
pub use layers::{LayerNorm, Linear};
pub use params::{Bound, Init, ParamEntry, ParamId, ParamStore};
pub use spec::{AttnScale, MabStyle, ModelKind, ModelSpec};
