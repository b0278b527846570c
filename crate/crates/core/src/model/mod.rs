//! Multi-domain model graphs.
//!
//! Every architecture shares the same front end: one embedding table per
//! categorical field, concatenated and normalized once. From there:
//!
//! * **Star** routes each row through a tower whose layer weights are
//!   `W_d ⊙ W_s` for the row's domain, adds an auxiliary tower score, and
//!   predicts `σ(s_star + s_aux)`.
//! * **Star+** runs independent domain, shared and auxiliary towers and hands
//!   `(s_d, s_s, s_a)` to a [`Fusion`] strategy; prediction is `σ(fusion)`.
//! * **SharedOnly** is a single tower plus linear head, with no domain input.
//!
//! The auxiliary tower sees the normalized input concatenated with a learned
//! domain-indicator embedding.

pub mod config;
pub mod star;

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{Architecture, FieldSpec, FusionKind, ModelConfig};
pub use star::{StarLayer, StarTower};

use crate::container::Container;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::fusion::{Fusion, TowerOutputs};
use crate::matrix::Matrix;
use crate::nn::adam::{adam_step, AdamConfig};
use crate::nn::dense::{Activation, DenseLayer, Mlp};
use crate::nn::embedding::EmbeddingTable;
use crate::nn::loss::{bce_with_logits, sigmoid};
use crate::nn::param::{ParamId, ParamStore};
use crate::norm::{Mode, NormKind, Normalization};

/// Version of the checkpoint manifest layout.
pub const CHECKPOINT_SPEC_VERSION: i64 = 1;

/// `σ(s_star + s_aux)`, element-wise.
pub fn star_final_score(s_star: &Matrix, s_aux: &Matrix) -> Result<Matrix> {
    Ok(s_star.add(s_aux)?.map(sigmoid))
}

/// Present domains in ascending order with their row indices.
pub fn route_by_domain(domains: &[usize], num_domains: usize) -> Vec<(usize, Vec<usize>)> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_domains];
    for (i, &d) in domains.iter().enumerate() {
        rows[d].push(i);
    }
    rows.into_iter().enumerate().filter(|(_, r)| !r.is_empty()).collect()
}

/// A parameter (or one row of it) that only a single domain's examples touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainOwned {
    Whole(ParamId),
    Row(ParamId, usize),
}

#[derive(Clone, Debug)]
pub struct AuxTower {
    pub domain_embedding: EmbeddingTable,
    pub mlp: Mlp,
}

impl AuxTower {
    fn forward(&mut self, store: &ParamStore, x: &Matrix, domains: &[usize]) -> Result<Matrix> {
        let dom = self.domain_embedding.forward(store, domains)?;
        self.mlp.forward(store, &Matrix::hconcat(&[x, &dom])?)
    }

    /// Returns the gradient with respect to `x`.
    fn backward(&mut self, store: &mut ParamStore, upstream: &Matrix) -> Result<Matrix> {
        let d_in = self.mlp.backward(store, upstream)?;
        let x_dim = d_in.cols() - self.domain_embedding.dim();
        let mut parts = d_in.hsplit(&[x_dim, self.domain_embedding.dim()])?.into_iter();
        let dx = parts.next().expect("two blocks");
        self.domain_embedding.backward(store, &parts.next().expect("two blocks"))?;
        Ok(dx)
    }
}

// One per model; boxing the larger variant buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
enum Body {
    Star {
        tower: StarTower,
        aux: AuxTower,
    },
    StarPlus {
        domain_towers: Vec<Mlp>,
        shared: Mlp,
        aux: AuxTower,
        fusion: Fusion,
    },
    SharedOnly {
        shared: Mlp,
        head: DenseLayer,
    },
}

#[derive(Clone, Debug)]
struct Graph {
    num_domains: usize,
    embeddings: Vec<EmbeddingTable>,
    norm: Normalization,
    body: Body,
    routing: Option<Vec<(usize, Vec<usize>)>>,
}

impl Graph {
    fn assemble(&mut self, store: &ParamStore, batch: &Batch) -> Result<Matrix> {
        if batch.feature_ids.len() != self.embeddings.len() {
            return Err(Error::Validation(format!(
                "batch has {} feature fields, model expects {}",
                batch.feature_ids.len(),
                self.embeddings.len()
            )));
        }
        let mut blocks = Vec::with_capacity(self.embeddings.len());
        for (table, ids) in self.embeddings.iter_mut().zip(&batch.feature_ids) {
            if ids.len() != batch.domains.len() {
                return Err(Error::Validation(format!(
                    "field `{}` has {} ids for {} rows",
                    table.name(),
                    ids.len(),
                    batch.domains.len()
                )));
            }
            blocks.push(table.forward(store, ids)?);
        }
        Matrix::hconcat(&blocks.iter().collect::<Vec<_>>())
    }

    fn check_domains(&self, domains: &[usize]) -> Result<()> {
        match domains.iter().find(|&&d| d >= self.num_domains) {
            Some(&bad) => Err(Error::Index {
                what: "domain id".into(),
                index: bad,
                bound: self.num_domains,
            }),
            None => Ok(()),
        }
    }

    fn star_combined(&mut self, store: &ParamStore, x: &Matrix, domains: &[usize]) -> Result<Matrix> {
        self.check_domains(domains)?;
        let Body::Star { tower, .. } = &mut self.body else {
            return Err(Error::State("star_combined_forward requires the star architecture".into()));
        };
        let routing = route_by_domain(domains, self.num_domains);
        let mut out = Matrix::zeros(x.rows(), 1);
        for (d, rows) in &routing {
            let sub = tower.forward(store, &x.gather_rows(rows), *d)?;
            out.scatter_rows(rows, &sub)?;
        }
        self.routing = Some(routing);
        Ok(out)
    }

    fn star_plus_towers(&mut self, store: &ParamStore, x: &Matrix, domains: &[usize]) -> Result<TowerOutputs> {
        self.check_domains(domains)?;
        let Body::StarPlus {
            domain_towers,
            shared,
            aux,
            ..
        } = &mut self.body
        else {
            return Err(Error::State("star_plus_forward requires the star_plus architecture".into()));
        };
        let routing = route_by_domain(domains, self.num_domains);
        let s_s = shared.forward(store, x)?;
        let s_a = aux.forward(store, x, domains)?;
        let mut s_d = Matrix::zeros(x.rows(), s_s.cols());
        for (d, rows) in &routing {
            let sub = domain_towers[*d].forward(store, &x.gather_rows(rows))?;
            s_d.scatter_rows(rows, &sub)?;
        }
        self.routing = Some(routing);
        Ok(TowerOutputs { s_d, s_s, s_a })
    }

    fn forward(&mut self, store: &ParamStore, batch: &Batch) -> Result<Matrix> {
        if batch.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        self.check_domains(&batch.domains)?;
        let z = self.assemble(store, batch)?;
        let x = self.norm.forward(store, &z, &batch.domains)?;
        let domains = &batch.domains;
        match self.body {
            Body::Star { .. } => {
                let s_star = self.star_combined(store, &x, domains)?;
                let Body::Star { aux, .. } = &mut self.body else { unreachable!() };
                s_star.add(&aux.forward(store, &x, domains)?)
            }
            Body::StarPlus { .. } => {
                let outputs = self.star_plus_towers(store, &x, domains)?;
                let Body::StarPlus { fusion, .. } = &mut self.body else { unreachable!() };
                fusion.forward(store, &outputs, domains)
            }
            Body::SharedOnly { ref mut shared, ref mut head } => {
                let h = shared.forward(store, &x)?;
                head.forward(store, &h)
            }
        }
    }

    fn backward(&mut self, store: &mut ParamStore, d_logits: &Matrix) -> Result<()> {
        let dx = match &mut self.body {
            Body::Star { tower, aux } => {
                let routing = self
                    .routing
                    .take()
                    .ok_or_else(|| Error::State("model backward without forward".into()))?;
                let mut dx = aux.backward(store, d_logits)?;
                for (d, rows) in &routing {
                    let sub = tower.backward(store, &d_logits.gather_rows(rows), *d)?;
                    dx.scatter_add_rows(rows, &sub)?;
                }
                dx
            }
            Body::StarPlus {
                domain_towers,
                shared,
                aux,
                fusion,
            } => {
                let routing = self
                    .routing
                    .take()
                    .ok_or_else(|| Error::State("model backward without forward".into()))?;
                let grads = fusion.backward(store, d_logits)?;
                let mut dx = shared.backward(store, &grads.s_s)?;
                dx.add_assign(&aux.backward(store, &grads.s_a)?)?;
                for (d, rows) in &routing {
                    let sub = domain_towers[*d].backward(store, &grads.s_d.gather_rows(rows))?;
                    dx.scatter_add_rows(rows, &sub)?;
                }
                dx
            }
            Body::SharedOnly { shared, head } => {
                let dh = head.backward(store, d_logits)?;
                shared.backward(store, &dh)?
            }
        };
        let dz = self.norm.backward(store, &dx)?;
        let widths: Vec<usize> = self.embeddings.iter().map(EmbeddingTable::dim).collect();
        for (table, block) in self.embeddings.iter_mut().zip(dz.hsplit(&widths)?) {
            table.backward(store, &block)?;
        }
        Ok(())
    }

    fn activation_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        match &self.body {
            Body::Star { tower, aux } => {
                tower.hash_activation_pattern(&mut h);
                aux.mlp.hash_activation_pattern(&mut h);
            }
            Body::StarPlus {
                domain_towers,
                shared,
                aux,
                fusion,
            } => {
                for (d, _) in self.routing.iter().flatten() {
                    domain_towers[*d].hash_activation_pattern(&mut h);
                }
                shared.hash_activation_pattern(&mut h);
                aux.mlp.hash_activation_pattern(&mut h);
                fusion.hash_activation_pattern(&mut h);
            }
            Body::SharedOnly { shared, .. } => shared.hash_activation_pattern(&mut h),
        }
        h.finish()
    }
}

/// A multi-domain CTR model: configuration, parameters and computation graph.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    graph: Graph,
}

impl Model {
    /// Builds and initializes a model; all randomness comes from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let m = config.num_domains;
        let input_dim = config.input_dim();
        let k = config.effective_tower_output();

        let mut embeddings = Vec::with_capacity(config.fields.len());
        for f in &config.fields {
            embeddings.push(EmbeddingTable::new(
                &mut store,
                &mut rng,
                &format!("embedding/{}", f.name),
                f.vocab_size,
                f.embedding_dim,
            )?);
        }
        let norm = Normalization::new(&mut store, config.norm, config.norm_options, input_dim, m)?;

        let aux = |store: &mut ParamStore, rng: &mut ChaCha8Rng| -> Result<AuxTower> {
            let domain_embedding =
                EmbeddingTable::new(store, rng, "aux/domain_embedding", m, config.domain_embedding_dim)?;
            let mlp = Mlp::new(
                store,
                rng,
                "aux",
                input_dim + config.domain_embedding_dim,
                &config.tower_widths,
                k,
                Activation::Identity,
            )?;
            Ok(AuxTower { domain_embedding, mlp })
        };

        let body = match config.architecture {
            Architecture::Star => Body::Star {
                tower: StarTower::new(&mut store, &mut rng, m, input_dim, &config.tower_widths, 1)?,
                aux: aux(&mut store, &mut rng)?,
            },
            Architecture::StarPlus => {
                let mut domain_towers = Vec::with_capacity(m);
                for d in 0..m {
                    domain_towers.push(Mlp::new(
                        &mut store,
                        &mut rng,
                        &format!("tower/domain{d}"),
                        input_dim,
                        &config.tower_widths,
                        k,
                        Activation::Identity,
                    )?);
                }
                let shared = Mlp::new(
                    &mut store,
                    &mut rng,
                    "tower/shared",
                    input_dim,
                    &config.tower_widths,
                    k,
                    Activation::Identity,
                )?;
                let aux = aux(&mut store, &mut rng)?;
                let fusion = Fusion::new(
                    &mut store,
                    &mut rng,
                    config.fusion.as_ref().expect("validated"),
                    k,
                    m,
                )?;
                Body::StarPlus {
                    domain_towers,
                    shared,
                    aux,
                    fusion,
                }
            }
            Architecture::SharedOnly => Body::SharedOnly {
                shared: Mlp::new(
                    &mut store,
                    &mut rng,
                    "tower/shared",
                    input_dim,
                    &config.tower_widths,
                    k,
                    Activation::Identity,
                )?,
                head: DenseLayer::new(&mut store, &mut rng, "head", k, 1, Activation::Identity)?,
            },
        };
        Ok(Self {
            config,
            store,
            graph: Graph {
                num_domains: m,
                embeddings,
                norm,
                body,
                routing: None,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn norm(&self) -> &Normalization {
        &self.graph.norm
    }

    pub fn norm_mut(&mut self) -> &mut Normalization {
        &mut self.graph.norm
    }

    pub fn embeddings(&self) -> &[EmbeddingTable] {
        &self.graph.embeddings
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.graph.norm.set_mode(mode);
    }

    pub fn mode(&self) -> Mode {
        self.graph.norm.mode()
    }

    pub fn fusion(&self) -> Option<&Fusion> {
        match &self.graph.body {
            Body::StarPlus { fusion, .. } => Some(fusion),
            _ => None,
        }
    }

    pub fn star_tower(&self) -> Option<&StarTower> {
        match &self.graph.body {
            Body::Star { tower, .. } => Some(tower),
            _ => None,
        }
    }

    pub fn domain_towers(&self) -> Option<&[Mlp]> {
        match &self.graph.body {
            Body::StarPlus { domain_towers, .. } => Some(domain_towers),
            _ => None,
        }
    }

    pub fn shared_tower(&self) -> Option<&Mlp> {
        match &self.graph.body {
            Body::StarPlus { shared, .. } | Body::SharedOnly { shared, .. } => Some(shared),
            Body::Star { .. } => None,
        }
    }

    pub fn aux_tower(&self) -> Option<&AuxTower> {
        match &self.graph.body {
            Body::Star { aux, .. } | Body::StarPlus { aux, .. } => Some(aux),
            Body::SharedOnly { .. } => None,
        }
    }

    /// Output heads: star output layers or the fusion heads. Used to zero a model's output.
    pub fn output_head_params(&self) -> Vec<ParamId> {
        let last = |mlp: &Mlp| {
            let l = mlp.layers().last().expect("non-empty mlp");
            [l.weight(), l.bias()]
        };
        match &self.graph.body {
            Body::Star { tower, aux } => {
                let l = tower.layers().last().expect("non-empty tower");
                let mut ids = vec![l.shared_weight(), l.shared_bias()];
                for d in 0..self.config.num_domains {
                    ids.extend([l.domain_weight(d), l.domain_bias(d)]);
                }
                ids.extend(last(&aux.mlp));
                ids
            }
            Body::StarPlus { fusion, .. } => {
                if let Some(h) = fusion.heads() {
                    h.iter().flat_map(|l| [l.weight(), l.bias()]).collect()
                } else if let Some(h) = fusion.gate_head() {
                    vec![h.weight(), h.bias()]
                } else {
                    last(fusion.concat_head().expect("concat"))
                        .into_iter()
                        .collect()
                }
            }
            Body::SharedOnly { head, .. } => vec![head.weight(), head.bias()],
        }
    }

    /// Parameters (or rows) that only examples from domain `d` can influence.
    pub fn domain_owned(&self, d: usize) -> Vec<DomainOwned> {
        let mut out = Vec::new();
        match &self.graph.body {
            Body::Star { tower, aux } => {
                out.extend(tower.domain_params(d).into_iter().map(DomainOwned::Whole));
                out.push(DomainOwned::Row(aux.domain_embedding.table(), d));
            }
            Body::StarPlus {
                domain_towers,
                aux,
                fusion,
                ..
            } => {
                out.extend(domain_towers[d].param_ids().into_iter().map(DomainOwned::Whole));
                out.push(DomainOwned::Row(aux.domain_embedding.table(), d));
                if let Some(w) = fusion.adaptive_param() {
                    out.push(DomainOwned::Row(w, d));
                }
                if let Some(net) = fusion.gate_net() {
                    out.push(DomainOwned::Row(net.layers()[0].weight(), d));
                }
            }
            Body::SharedOnly { .. } => {}
        }
        if let (Some(gp), Some(bp)) = (self.graph.norm.gamma_p(), self.graph.norm.beta_p()) {
            out.push(DomainOwned::Row(gp, d));
            out.push(DomainOwned::Row(bp, d));
        }
        out
    }

    /// Parameters every domain trains: shared and auxiliary towers.
    pub fn shared_params(&self) -> Vec<ParamId> {
        match &self.graph.body {
            Body::Star { tower, aux } => {
                let mut ids = tower.shared_params();
                ids.extend(aux.mlp.param_ids());
                ids
            }
            Body::StarPlus { shared, aux, .. } => {
                let mut ids = shared.param_ids();
                ids.extend(aux.mlp.param_ids());
                ids
            }
            Body::SharedOnly { shared, head } => {
                let mut ids = shared.param_ids();
                ids.extend([head.weight(), head.bias()]);
                ids
            }
        }
    }

    /// Logits (`B × 1`) for a batch; caches state for [`Model::backward`].
    pub fn forward(&mut self, batch: &Batch) -> Result<Matrix> {
        self.graph.forward(&self.store, batch)
    }

    pub fn backward(&mut self, d_logits: &Matrix) -> Result<()> {
        self.graph.backward(&mut self.store, d_logits)
    }

    /// Star tower outputs (`B × 1`) on an already-normalized input.
    pub fn star_combined_forward(&mut self, x: &Matrix, domains: &[usize]) -> Result<Matrix> {
        self.graph.star_combined(&self.store, x, domains)
    }

    /// Star+ tower outputs on an already-normalized input.
    pub fn star_plus_forward(&mut self, x: &Matrix, domains: &[usize]) -> Result<TowerOutputs> {
        self.graph.star_plus_towers(&self.store, x, domains)
    }

    /// Click probabilities; call `set_mode(Mode::Inference)` first for frozen statistics.
    pub fn predict(&mut self, batch: &Batch) -> Result<Matrix> {
        Ok(self.forward(batch)?.map(sigmoid))
    }

    /// Zeroes gradients, runs forward + backward and returns the mean loss.
    pub fn loss_and_grad(&mut self, batch: &Batch) -> Result<f64> {
        self.store.zero_grads();
        let logits = self.forward(batch)?;
        let out = bce_with_logits(&logits, &batch.label_matrix())?;
        self.backward(&out.grad)?;
        Ok(out.loss)
    }

    /// Forward-only loss; used as a finite-difference objective.
    pub fn loss(&mut self, batch: &Batch) -> Result<f64> {
        let logits = self.forward(batch)?;
        Ok(bce_with_logits(&logits, &batch.label_matrix())?.loss)
    }

    /// One optimization step. A non-finite loss or gradient aborts before any update.
    pub fn train_step(&mut self, batch: &Batch, adam: &AdamConfig) -> Result<f64> {
        let loss = self.loss_and_grad(batch)?;
        if !loss.is_finite() || self.store.iter().any(|(_, p)| !p.grad.is_finite()) {
            let norms = self
                .store
                .grad_norms()
                .into_iter()
                .map(|(n, v)| format!("{n}={v:.3e}"))
                .collect::<Vec<_>>()
                .join(" ");
            return Err(Error::Numeric(format!(
                "loss={loss} learning_rate={} grad_norms: {norms}",
                adam.learning_rate
            )));
        }
        adam_step(&mut self.store, adam);
        Ok(loss)
    }

    /// Fingerprint of every relu on/off mask from the last forward pass.
    pub fn activation_pattern(&self) -> u64 {
        self.graph.activation_pattern()
    }

    /// Splits the model so a closure can read parameters while the graph mutates its caches.
    pub fn objective_parts(&mut self) -> (&mut ParamStore, ModelObjective<'_>) {
        (&mut self.store, ModelObjective { graph: &mut self.graph })
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut meta = toml::Table::new();
        meta.insert("spec_version".into(), toml::Value::Integer(CHECKPOINT_SPEC_VERSION));
        meta.insert(
            "model".into(),
            toml::Value::Table(
                toml::Table::try_from(&self.config).map_err(|e| Error::Config(format!("model config: {e}")))?,
            ),
        );
        meta.insert(
            "norm_mode".into(),
            toml::Value::String(
                match self.mode() {
                    Mode::Training => "training",
                    Mode::Inference => "inference",
                }
                .into(),
            ),
        );
        let mut c = Container::new("checkpoint", meta);
        for (_, p) in self.store.iter() {
            c.push(p.name.clone(), p.value.clone());
        }
        for (_, p) in self.store.iter() {
            c.push(format!("{}#m1", p.name), p.m1.clone());
            c.push(format!("{}#m2", p.name), p.m2.clone());
        }
        let steps: Vec<f64> = self.store.iter().map(|(_, p)| p.step_count as f64).collect();
        c.push("optimizer/step_counts", Matrix::from_vec(1, steps.len(), steps)?);
        c.push("norm/running_mean", self.graph.norm.running_mean().clone());
        c.push("norm/running_var", self.graph.norm.running_var().clone());
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    /// Restores a model; `expected`, when given, must equal the stored configuration.
    /// The loaded model is always in inference mode.
    pub fn from_container(c: &Container, expected: Option<&ModelConfig>, path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        if c.kind != "checkpoint" {
            return Err(bad(format!("expected a checkpoint, found `{}`", c.kind)));
        }
        match c.meta.get("spec_version").and_then(toml::Value::as_integer) {
            Some(CHECKPOINT_SPEC_VERSION) => {}
            other => return Err(bad(format!("unsupported checkpoint spec_version {other:?}"))),
        }
        let table = c
            .meta
            .get("model")
            .and_then(toml::Value::as_table)
            .ok_or_else(|| bad("manifest lacks a [meta.model] table".into()))?;
        let config: ModelConfig = table
            .clone()
            .try_into()
            .map_err(|e| bad(format!("model config: {e}")))?;
        if let Some(exp) = expected {
            if exp != &config {
                return Err(config_mismatch(exp, &config));
            }
        }
        let mut model = Model::new(config)?;
        let steps = c
            .tensor("optimizer/step_counts")
            .ok_or_else(|| bad("missing optimizer/step_counts".into()))?
            .clone();
        if steps.as_slice().len() != model.store.len() {
            return Err(bad("step count vector does not match the parameter list".into()));
        }
        let ids: Vec<ParamId> = model.store.iter().map(|(id, _)| id).collect();
        for (i, id) in ids.into_iter().enumerate() {
            let name = model.store.get(id).name.clone();
            let fetch = |key: String| -> Result<Matrix> {
                let m = c.tensor(&key).ok_or_else(|| bad(format!("missing tensor `{key}`")))?;
                if m.shape() != model.store.get(id).shape() {
                    return Err(bad(format!(
                        "tensor `{key}` has shape {:?}, model expects {:?}",
                        m.shape(),
                        model.store.get(id).shape()
                    )));
                }
                Ok(m.clone())
            };
            let value = fetch(name.clone())?;
            let m1 = fetch(format!("{name}#m1"))?;
            let m2 = fetch(format!("{name}#m2"))?;
            let p = model.store.get_mut(id);
            p.value = value;
            p.m1 = m1;
            p.m2 = m2;
            p.step_count = steps.as_slice()[i] as u64;
        }
        let mean = c
            .tensor("norm/running_mean")
            .ok_or_else(|| bad("missing norm/running_mean".into()))?
            .clone();
        let var = c
            .tensor("norm/running_var")
            .ok_or_else(|| bad("missing norm/running_var".into()))?
            .clone();
        model.graph.norm.set_running_stats(mean, var)?;
        model.set_mode(Mode::Inference);
        Ok(model)
    }

    pub fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<Self> {
        Self::from_container(&Container::load(path)?, expected, path)
    }

    pub fn is_star_plus(&self) -> bool {
        self.config.architecture == Architecture::StarPlus
    }

    pub fn norm_kind(&self) -> NormKind {
        self.config.norm
    }
}

fn config_mismatch(expected: &ModelConfig, found: &ModelConfig) -> Error {
    let a = toml::Table::try_from(expected).unwrap_or_default();
    let b = toml::Table::try_from(found).unwrap_or_default();
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut exp = Vec::new();
    let mut got = Vec::new();
    for k in keys {
        let (x, y) = (a.get(k), b.get(k));
        if x != y {
            exp.push(format!("{k}={}", x.map_or("<absent>".into(), |v| v.to_string())));
            got.push(format!("{k}={}", y.map_or("<absent>".into(), |v| v.to_string())));
        }
    }
    Error::SchemaMismatch {
        expected: exp,
        found: got,
    }
}

/// Borrow of a model's graph for evaluating the loss against an external parameter store.
pub struct ModelObjective<'a> {
    graph: &'a mut Graph,
}

impl ModelObjective<'_> {
    pub fn loss(&mut self, store: &ParamStore, batch: &Batch) -> Result<f64> {
        let logits = self.graph.forward(store, batch)?;
        Ok(bce_with_logits(&logits, &batch.label_matrix())?.loss)
    }

    pub fn activation_pattern(&self) -> u64 {
        self.graph.activation_pattern()
    }
}
