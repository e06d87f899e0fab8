//! Multi-scale convolutional network for multichannel EEG classification,
//! with preprocessing, training, interpretability and evaluation tooling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub(crate) mod bin;
pub mod data;
pub mod error;
pub mod interpret;
pub mod eval;
pub mod kv;
pub mod layers;
pub mod model;
pub mod par;
pub mod preproc;
pub mod tensor;
pub mod train;

pub use error::{MsnnError, Result};
pub use model::{Mode, MsnnConfig, MsnnModel};
pub use tensor::Tensor;
