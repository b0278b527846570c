//! Star and Star+ multi-domain click-through-rate models.
//!
//! Everything is dense `f64` with hand-written backpropagation:
//!
//! * [`nn`]: parameter registry, dense and embedding layers, Adam, logistic
//!   loss and a finite-difference gradient checker.
//! * [`norm`]: none / batch / layer / partition normalization.
//! * [`model`]: Star, Star+ and a shared-tower baseline over categorical inputs.
//! * [`fusion`]: add, adaptive add, gate and concat output fusion for Star+.
//! * [`metrics`]: exact rank AUC and logloss, per domain.
//! * [`data`]: datasets, calibrated synthetic generation, CSV ingest, batching.
//! * [`cli`]: the `gen` / `train` / `eval` / `experiment` / `gradcheck` commands.

// `!(x > 0.0)` is how NaN is rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod container;
pub mod data;
pub mod error;
pub mod fusion;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod norm;

pub use container::Container;
pub use data::{Batch, BatchPlan, BatchStrategy, Dataset, Example, SyntheticSpec};
pub use error::{Error, Result};
pub use fusion::{Fusion, TowerOutputs};
pub use matrix::Matrix;
pub use metrics::{auc, logloss, MetricReport, MetricRow};
pub use model::{Architecture, FieldSpec, FusionKind, Model, ModelConfig};
pub use nn::{AdamConfig, ParamStore};
pub use norm::{Mode, NormKind, NormOptions, Normalization};
