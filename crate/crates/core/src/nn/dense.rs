use std::hash::Hasher;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::param::{xavier_uniform, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Input and pre-activation retained between forward and backward.
#[derive(Clone, Debug)]
pub(crate) struct AffineCache {
    pub input: Matrix,
    pub pre: Matrix,
}

/// Computes `φ(x·W + b)` and the cache needed to differentiate it.
pub(crate) fn affine_forward(
    x: &Matrix,
    weight: &Matrix,
    bias: &Matrix,
    activation: Activation,
) -> Result<(Matrix, AffineCache)> {
    let mut pre = x.matmul(weight)?;
    pre.add_row_broadcast(bias)?;
    let out = pre.map(|v| activation.apply(v));
    Ok((
        out,
        AffineCache {
            input: x.clone(),
            pre,
        },
    ))
}

/// Gradients of an affine layer: `(dW, db, dx)`.
pub(crate) fn affine_backward(
    cache: &AffineCache,
    weight: &Matrix,
    activation: Activation,
    upstream: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    upstream.ensure_same_shape(&cache.pre, "dense backward upstream")?;
    let delta = match activation {
        Activation::Identity => upstream.clone(),
        Activation::Relu => {
            let mut d = upstream.clone();
            for (g, &p) in d.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
                *g *= activation.derivative(p);
            }
            d
        }
    };
    let d_weight = cache.input.t_matmul(&delta)?;
    let d_bias = delta.sum_rows();
    let d_input = delta.matmul_t(weight)?;
    Ok((d_weight, d_bias, d_input))
}

pub(crate) fn hash_relu_mask(cache: &AffineCache, hasher: &mut impl Hasher) {
    for &p in cache.pre.as_slice() {
        hasher.write_u8(u8::from(p > 0.0));
    }
}

/// Fully-connected layer `φ(x·W + b)` with `W: in × out`, `b: 1 × out`.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    weight: ParamId,
    bias: ParamId,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
    cache: Option<AffineCache>,
}

impl DenseLayer {
    /// Registers `{name}/weight` and `{name}/bias`, Xavier weights and zero bias.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "layer `{name}` needs positive dimensions, got {in_dim}x{out_dim}"
            )));
        }
        let weight = store.register(format!("{name}/weight"), xavier_uniform(rng, in_dim, out_dim))?;
        let bias = store.register(format!("{name}/bias"), Matrix::zeros(1, out_dim))?;
        Ok(Self {
            weight,
            bias,
            activation,
            in_dim,
            out_dim,
            cache: None,
        })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
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

    pub fn forward(&mut self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim {
            return Err(Error::Dimension {
                op: "dense_forward",
                left: x.shape(),
                right: store.value(self.weight).shape(),
            });
        }
        let (out, cache) = affine_forward(
            x,
            store.value(self.weight),
            store.value(self.bias),
            self.activation,
        )?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&mut self, store: &mut ParamStore, upstream: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("dense backward called without a forward pass".into()))?;
        let (dw, db, dx) =
            affine_backward(&cache, store.value(self.weight), self.activation, upstream)?;
        store.grad_mut(self.weight).add_assign(&dw)?;
        store.grad_mut(self.bias).add_assign(&db)?;
        Ok(dx)
    }

    pub(crate) fn hash_activation_pattern(&self, hasher: &mut impl Hasher) {
        if self.activation == Activation::Relu {
            if let Some(cache) = &self.cache {
                hash_relu_mask(cache, hasher);
            }
        }
    }
}

/// A stack of dense layers: relu on every hidden width, configurable output activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        out_activation: Activation,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(DenseLayer::new(
                store,
                rng,
                &format!("{prefix}/layer{i}"),
                width,
                h,
                Activation::Relu,
            )?);
            width = h;
        }
        layers.push(DenseLayer::new(
            store,
            rng,
            &format!("{prefix}/layer{}", hidden.len()),
            width,
            out_dim,
            out_activation,
        )?);
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn forward(&mut self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(store, &h)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, store: &mut ParamStore, upstream: &Matrix) -> Result<Matrix> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(store, &g)?;
        }
        Ok(g)
    }

    pub(crate) fn hash_activation_pattern(&self, hasher: &mut impl Hasher) {
        for layer in &self.layers {
            layer.hash_activation_pattern(hasher);
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn layer_with(store: &mut ParamStore, w: Matrix, b: Matrix, act: Activation) -> DenseLayer {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = DenseLayer::new(store, &mut rng, "l", w.rows(), w.cols(), act).unwrap();
        *store.value_mut(layer.weight()) = w;
        *store.value_mut(layer.bias()) = b;
        layer
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let mut store = ParamStore::new();
        let mut layer = layer_with(&mut store, Matrix::identity(2), Matrix::zeros(1, 2), Activation::Identity);
        let out = layer.forward(&store, &Matrix::from_rows(&[&[3.0, -1.0]])).unwrap();
        assert_eq!(out.as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn relu_clamps_negative_outputs() {
        let mut store = ParamStore::new();
        let mut layer = layer_with(&mut store, Matrix::identity(2), Matrix::zeros(1, 2), Activation::Relu);
        let out = layer.forward(&store, &Matrix::from_rows(&[&[3.0, -1.0]])).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn scalar_chain_rule() {
        let mut store = ParamStore::new();
        let mut layer = layer_with(
            &mut store,
            Matrix::from_rows(&[&[2.0]]),
            Matrix::zeros(1, 1),
            Activation::Identity,
        );
        layer.forward(&store, &Matrix::from_rows(&[&[5.0]])).unwrap();
        let dx = layer.backward(&mut store, &Matrix::from_rows(&[&[1.0]])).unwrap();
        assert_eq!(dx.as_slice(), &[2.0]);
        assert_eq!(store.grad(layer.weight()).as_slice(), &[5.0]);
        assert_eq!(store.grad(layer.bias()).as_slice(), &[1.0]);
    }

    #[test]
    fn dead_relu_blocks_all_gradient() {
        let mut store = ParamStore::new();
        let mut layer = layer_with(
            &mut store,
            Matrix::from_rows(&[&[1.0]]),
            Matrix::from_rows(&[&[-10.0]]),
            Activation::Relu,
        );
        layer.forward(&store, &Matrix::from_rows(&[&[2.0]])).unwrap();
        let dx = layer.backward(&mut store, &Matrix::from_rows(&[&[1.0]])).unwrap();
        assert_eq!(dx.as_slice(), &[0.0]);
        assert_eq!(store.grad(layer.weight()).as_slice(), &[0.0]);
        assert_eq!(store.grad(layer.bias()).as_slice(), &[0.0]);
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut store = ParamStore::new();
        let mut layer = layer_with(&mut store, Matrix::identity(2), Matrix::zeros(1, 2), Activation::Identity);
        let err = layer.backward(&mut store, &Matrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn forward_shape_mismatch_names_both_shapes() {
        let mut store = ParamStore::new();
        let mut layer = layer_with(&mut store, Matrix::identity(2), Matrix::zeros(1, 2), Activation::Identity);
        let err = layer.forward(&store, &Matrix::zeros(1, 3)).unwrap_err();
        assert!(err.to_string().contains("(1, 3) vs (2, 2)"), "{err}");
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let mut layer = DenseLayer::new(&mut store, &mut rng, "d", 5, 4, Activation::Relu).unwrap();
        let x = crate::nn::param::normal(&mut rng, 3, 5, 1.0);
        let a = layer.forward(&store, &x).unwrap();
        let b = layer.forward(&store, &x).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}
