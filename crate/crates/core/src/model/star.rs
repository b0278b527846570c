//! Star towers: every layer uses `W = W_d ⊙ W_s`, `b = b_d + b_s`.

use std::hash::Hasher;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::dense::{affine_backward, affine_forward, hash_relu_mask, Activation, AffineCache};
use crate::nn::param::{xavier_uniform, ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct StarLayer {
    domain_weights: Vec<ParamId>,
    domain_biases: Vec<ParamId>,
    shared_weight: ParamId,
    shared_bias: ParamId,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
    /// One cache per domain: a forward may route several domain sub-batches.
    caches: Vec<Option<AffineCache>>,
}

impl StarLayer {
    /// Shared weights are Xavier-initialized; domain weights start at 1 so the
    /// initial product equals the shared layer.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        index: usize,
        num_domains: usize,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let shared_weight = store.register(
            format!("star/shared/layer{index}/weight"),
            xavier_uniform(rng, in_dim, out_dim),
        )?;
        let shared_bias = store.register(format!("star/shared/layer{index}/bias"), Matrix::zeros(1, out_dim))?;
        let mut domain_weights = Vec::with_capacity(num_domains);
        let mut domain_biases = Vec::with_capacity(num_domains);
        for d in 0..num_domains {
            domain_weights.push(store.register(
                format!("star/domain{d}/layer{index}/weight"),
                Matrix::filled(in_dim, out_dim, 1.0),
            )?);
            domain_biases.push(store.register(
                format!("star/domain{d}/layer{index}/bias"),
                Matrix::zeros(1, out_dim),
            )?);
        }
        Ok(Self {
            domain_weights,
            domain_biases,
            shared_weight,
            shared_bias,
            activation,
            in_dim,
            out_dim,
            caches: vec![None; num_domains],
        })
    }

    pub fn domain_weight(&self, d: usize) -> ParamId {
        self.domain_weights[d]
    }

    pub fn domain_bias(&self, d: usize) -> ParamId {
        self.domain_biases[d]
    }

    pub fn shared_weight(&self) -> ParamId {
        self.shared_weight
    }

    pub fn shared_bias(&self) -> ParamId {
        self.shared_bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn combined(&self, store: &ParamStore, d: usize) -> Result<(Matrix, Matrix)> {
        let w = store
            .value(self.domain_weights[d])
            .hadamard(store.value(self.shared_weight))?;
        let b = store.value(self.domain_biases[d]).add(store.value(self.shared_bias))?;
        Ok((w, b))
    }

    pub fn forward(&mut self, store: &ParamStore, x: &Matrix, domain: usize) -> Result<Matrix> {
        if domain >= self.domain_weights.len() {
            return Err(Error::Index {
                what: "star domain".into(),
                index: domain,
                bound: self.domain_weights.len(),
            });
        }
        if x.cols() != self.in_dim {
            return Err(Error::Dimension {
                op: "star_forward",
                left: x.shape(),
                right: (self.in_dim, self.out_dim),
            });
        }
        let (w, b) = self.combined(store, domain)?;
        let (out, cache) = affine_forward(x, &w, &b, self.activation)?;
        self.caches[domain] = Some(cache);
        Ok(out)
    }

    /// Product rule: `dW_d = dW ⊙ W_s`, `dW_s = dW ⊙ W_d`; both biases get `db`.
    pub fn backward(&mut self, store: &mut ParamStore, upstream: &Matrix, domain: usize) -> Result<Matrix> {
        let cache = self
            .caches
            .get_mut(domain)
            .and_then(Option::take)
            .ok_or_else(|| Error::State(format!("star backward for domain {domain} without a forward pass")))?;
        let (w, _) = self.combined(store, domain)?;
        let (dw, db, dx) = affine_backward(&cache, &w, self.activation, upstream)?;
        let d_domain_w = dw.hadamard(store.value(self.shared_weight))?;
        let d_shared_w = dw.hadamard(store.value(self.domain_weights[domain]))?;
        store.grad_mut(self.domain_weights[domain]).add_assign(&d_domain_w)?;
        store.grad_mut(self.shared_weight).add_assign(&d_shared_w)?;
        store.grad_mut(self.domain_biases[domain]).add_assign(&db)?;
        store.grad_mut(self.shared_bias).add_assign(&db)?;
        Ok(dx)
    }

    fn hash_activation_pattern(&self, hasher: &mut impl Hasher) {
        if self.activation == Activation::Relu {
            for cache in self.caches.iter().flatten() {
                hash_relu_mask(cache, hasher);
            }
        }
    }
}

/// Stack of star layers: relu hidden widths, then one identity output unit.
#[derive(Clone, Debug)]
pub struct StarTower {
    layers: Vec<StarLayer>,
}

impl StarTower {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        num_domains: usize,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(StarLayer::new(store, rng, i, num_domains, width, h, Activation::Relu)?);
            width = h;
        }
        layers.push(StarLayer::new(
            store,
            rng,
            hidden.len(),
            num_domains,
            width,
            out_dim,
            Activation::Identity,
        )?);
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[StarLayer] {
        &self.layers
    }

    /// Parameters owned by one domain (weights and biases of every layer).
    pub fn domain_params(&self, d: usize) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| [l.domain_weights[d], l.domain_biases[d]])
            .collect()
    }

    pub fn shared_params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.shared_weight, l.shared_bias]).collect()
    }

    pub fn forward(&mut self, store: &ParamStore, x: &Matrix, domain: usize) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(store, &h, domain)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, store: &mut ParamStore, upstream: &Matrix, domain: usize) -> Result<Matrix> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(store, &g, domain)?;
        }
        Ok(g)
    }

    pub(crate) fn hash_activation_pattern(&self, hasher: &mut impl Hasher) {
        for layer in &self.layers {
            layer.hash_activation_pattern(hasher);
        }
    }
}
