//! Full-model finite-difference checks on small configurations.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::{Architecture, FieldSpec, FusionKind, Model, ModelConfig};
use crate::nn::{grad_check, GradCheckOptions, GradCheckReport, Probe};
use crate::norm::{NormKind, NormOptions};

/// Largest batch accepted; every probe re-runs the full forward pass.
pub const MAX_GRADCHECK_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub architecture: Architecture,
    pub fusion: Option<FusionKind>,
    pub norm: NormKind,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.fusion {
            Some(fu) => write!(f, "{} / {} / {}", self.architecture.label(), fu.label(), self.norm.label()),
            None => write!(f, "{} / {}", self.architecture.label(), self.norm.label()),
        }
    }
}

/// Every valid architecture × fusion × normalization combination.
pub fn all_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for norm in NormKind::ALL {
        out.push(Case {
            architecture: Architecture::Star,
            fusion: None,
            norm,
        });
        for fusion in FusionKind::all() {
            out.push(Case {
                architecture: Architecture::StarPlus,
                fusion: Some(fusion),
                norm,
            });
        }
        out.push(Case {
            architecture: Architecture::SharedOnly,
            fusion: None,
            norm,
        });
    }
    out
}

/// Deliberate backward-pass defects for negative controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Negates the gradient of the first parameter that received one.
    SignFlip,
}

#[derive(Clone, Debug)]
pub struct GradcheckSetup {
    pub num_domains: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Standard deviation of the noise added to every parameter before checking.
    pub perturbation: f64,
}

impl Default for GradcheckSetup {
    fn default() -> Self {
        Self {
            num_domains: 3,
            batch_size: 8,
            seed: 0,
            tolerance: 1e-4,
            perturbation: 0.1,
        }
    }
}

/// Small model config for checking: three fields, narrow towers.
pub fn small_config(case: &Case, num_domains: usize, seed: u64) -> ModelConfig {
    let fusion = case.fusion.clone().map(|f| match f {
        FusionKind::Gate { .. } => FusionKind::Gate { gate_hidden: 4 },
        FusionKind::Concat { .. } => FusionKind::Concat { head_widths: vec![5] },
        other => other,
    });
    ModelConfig {
        num_domains,
        fields: (0..3)
            .map(|i| FieldSpec {
                name: format!("f{i}"),
                vocab_size: 5,
                embedding_dim: 3,
            })
            .collect(),
        architecture: case.architecture,
        tower_widths: vec![6, 4],
        tower_output_dim: 3,
        domain_embedding_dim: 2,
        norm: case.norm,
        norm_options: NormOptions::default(),
        fusion,
        seed,
    }
}

/// Batch whose domains come in consecutive pairs, so each present domain has ≥ 2 rows
/// whenever `batch_size` is even.
pub fn small_batch(cfg: &ModelConfig, batch_size: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    Batch {
        feature_ids: cfg
            .fields
            .iter()
            .map(|f| (0..batch_size).map(|_| rng.random_range(0..f.vocab_size)).collect())
            .collect(),
        domains: (0..batch_size).map(|i| (i / 2) % cfg.num_domains).collect(),
        labels: (0..batch_size).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect(),
    }
}

pub fn check_case(case: &Case, setup: &GradcheckSetup, fault: Fault) -> Result<GradCheckReport> {
    if setup.batch_size == 0 || setup.batch_size > MAX_GRADCHECK_BATCH {
        return Err(Error::Validation(format!(
            "gradcheck batch size must be between 1 and {MAX_GRADCHECK_BATCH}, got {}",
            setup.batch_size
        )));
    }
    let cfg = small_config(case, setup.num_domains, setup.seed);
    let batch = small_batch(&cfg, setup.batch_size, setup.seed);
    let mut model = Model::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed.wrapping_add(1));
    for p in model.store_mut().iter_mut() {
        for v in p.value.as_mut_slice() {
            *v += setup.perturbation * rng.sample::<f64, _>(StandardNormal);
        }
    }
    model.loss_and_grad(&batch)?;
    if fault == Fault::SignFlip {
        if let Some(p) = model
            .store_mut()
            .iter_mut()
            .find(|p| p.grad.as_slice().iter().any(|g| *g != 0.0))
        {
            p.grad = p.grad.scale(-1.0);
        }
    }
    let (store, mut objective) = model.objective_parts();
    grad_check(
        store,
        |s| {
            let value = objective.loss(s, &batch)?;
            Ok::<_, Error>(Probe {
                value,
                pattern: objective.activation_pattern(),
            })
        },
        GradCheckOptions::with_tolerance(setup.tolerance),
    )
}
