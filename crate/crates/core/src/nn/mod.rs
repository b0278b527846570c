//! Dense neural-network substrate with explicit forward and backward passes.

pub mod adam;
pub mod dense;
pub mod embedding;
pub mod gradcheck;
pub mod loss;
pub mod param;

pub use adam::{adam_step, AdamConfig};
pub use dense::{Activation, DenseLayer, Mlp};
pub use embedding::EmbeddingTable;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, Probe};
pub use loss::{bce_with_logits, sigmoid, BceOutput};
pub use param::{Param, ParamId, ParamStore};
