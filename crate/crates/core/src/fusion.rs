//! The four Star+ fusion strategies mapping `(s_d, s_s, s_a)` to one logit per row.
//!
//! * add: `c_d·h_d(s_d) + c_s·h_s(s_s) + c_a·h_a(s_a)` with fixed constants and
//!   per-tower linear heads `h: k → 1`.
//! * adaptive add: same sum with `c_d = σ(w[d])`, `c_s = c_a = (1 − c_d)/2`,
//!   one learnable `w` entry per domain.
//! * gate: `g = softmax(gate_net(one_hot(domain)))`, fused vector
//!   `g₁·s_d + g₂·s_s + g₃·s_a`, then one linear head `k → 1`.
//! * concat: an MLP on `[s_d | s_s | s_a]` ending in one unit.

use std::hash::Hasher;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::config::FusionKind;
use crate::nn::dense::{Activation, DenseLayer, Mlp};
use crate::nn::loss::sigmoid;
use crate::nn::param::{ParamId, ParamStore};

/// Outputs of the domain, shared and auxiliary towers, each `B × k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TowerOutputs {
    pub s_d: Matrix,
    pub s_s: Matrix,
    pub s_a: Matrix,
}

impl TowerOutputs {
    fn check(&self) -> Result<()> {
        self.s_d.ensure_same_shape(&self.s_s, "tower outputs s_d/s_s")?;
        self.s_d.ensure_same_shape(&self.s_a, "tower outputs s_d/s_a")
    }
}

/// Adaptive-add weights for a raw parameter value `w`: `(c_d, c_s, c_a)`.
pub fn adaptive_weights(w: f64) -> (f64, f64, f64) {
    let c_d = sigmoid(w);
    let rest = (1.0 - c_d) / 2.0;
    (c_d, rest, rest)
}

/// Row-wise softmax over a `B × n` matrix.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn one_hot(domains: &[usize], num_domains: usize) -> Matrix {
    let mut m = Matrix::zeros(domains.len(), num_domains);
    for (r, &d) in domains.iter().enumerate() {
        m[(r, d)] = 1.0;
    }
    m
}

#[derive(Clone, Debug)]
struct WeightedCache {
    heads: [Matrix; 3],
    coeffs: Vec<[f64; 3]>,
    domains: Vec<usize>,
}

#[derive(Clone, Debug)]
struct GateCache {
    weights: Matrix,
    outputs: TowerOutputs,
}

#[derive(Clone, Debug)]
enum Strategy {
    Add {
        coeffs: [f64; 3],
        heads: [DenseLayer; 3],
    },
    AdaptiveAdd {
        w: ParamId,
        heads: [DenseLayer; 3],
    },
    Gate {
        gate_net: Mlp,
        head: DenseLayer,
    },
    Concat {
        head: Mlp,
    },
}

/// Learnable fusion parameters for exactly one strategy.
#[derive(Clone, Debug)]
pub struct Fusion {
    kind: FusionKind,
    num_domains: usize,
    k: usize,
    strategy: Strategy,
    weighted_cache: Option<WeightedCache>,
    gate_cache: Option<GateCache>,
}

fn heads<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, k: usize) -> Result<[DenseLayer; 3]> {
    Ok([
        DenseLayer::new(store, rng, "fusion/head_d", k, 1, Activation::Identity)?,
        DenseLayer::new(store, rng, "fusion/head_s", k, 1, Activation::Identity)?,
        DenseLayer::new(store, rng, "fusion/head_a", k, 1, Activation::Identity)?,
    ])
}

impl Fusion {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        kind: &FusionKind,
        k: usize,
        num_domains: usize,
    ) -> Result<Self> {
        kind.validate()?;
        let strategy = match kind {
            FusionKind::Add { c_d, c_s, c_a } => Strategy::Add {
                coeffs: [*c_d, *c_s, *c_a],
                heads: heads(store, rng, k)?,
            },
            FusionKind::AdaptiveAdd => {
                let heads = heads(store, rng, k)?;
                let w = store.register("fusion/w_d", Matrix::zeros(num_domains, 1))?;
                Strategy::AdaptiveAdd { w, heads }
            }
            FusionKind::Gate { gate_hidden } => Strategy::Gate {
                gate_net: Mlp::new(store, rng, "fusion/gate", num_domains, &[*gate_hidden], 3, Activation::Identity)?,
                head: DenseLayer::new(store, rng, "fusion/head", k, 1, Activation::Identity)?,
            },
            FusionKind::Concat { head_widths } => Strategy::Concat {
                head: Mlp::new(store, rng, "fusion/concat", 3 * k, head_widths, 1, Activation::Identity)?,
            },
        };
        Ok(Self {
            kind: kind.clone(),
            num_domains,
            k,
            strategy,
            weighted_cache: None,
            gate_cache: None,
        })
    }

    pub fn kind(&self) -> &FusionKind {
        &self.kind
    }

    /// The `w_d` parameter of adaptive add.
    pub fn adaptive_param(&self) -> Option<ParamId> {
        match &self.strategy {
            Strategy::AdaptiveAdd { w, .. } => Some(*w),
            _ => None,
        }
    }

    /// `(c_d, c_s, c_a)` for a domain, for add and adaptive add.
    pub fn coefficients(&self, store: &ParamStore, domain: usize) -> Option<[f64; 3]> {
        match &self.strategy {
            Strategy::Add { coeffs, .. } => Some(*coeffs),
            Strategy::AdaptiveAdd { w, .. } => {
                let (a, b, c) = adaptive_weights(store.value(*w)[(domain, 0)]);
                Some([a, b, c])
            }
            _ => None,
        }
    }

    /// Linear heads `(h_d, h_s, h_a)` of add and adaptive add.
    pub fn heads(&self) -> Option<&[DenseLayer; 3]> {
        match &self.strategy {
            Strategy::Add { heads, .. } | Strategy::AdaptiveAdd { heads, .. } => Some(heads),
            _ => None,
        }
    }

    pub fn concat_head(&self) -> Option<&Mlp> {
        match &self.strategy {
            Strategy::Concat { head } => Some(head),
            _ => None,
        }
    }

    pub fn gate_head(&self) -> Option<&DenseLayer> {
        match &self.strategy {
            Strategy::Gate { head, .. } => Some(head),
            _ => None,
        }
    }

    pub fn gate_net(&self) -> Option<&Mlp> {
        match &self.strategy {
            Strategy::Gate { gate_net, .. } => Some(gate_net),
            _ => None,
        }
    }

    /// Gate weights (`B × 3`, rows on the simplex) for the given domains.
    pub fn gate_weights(&self, store: &ParamStore, domains: &[usize]) -> Result<Matrix> {
        let Strategy::Gate { gate_net, .. } = &self.strategy else {
            return Err(Error::State(format!("{} fusion has no gate", self.kind.label())));
        };
        let mut net = gate_net.clone();
        Ok(softmax_rows(&net.forward(store, &one_hot(domains, self.num_domains))?))
    }

    pub fn forward(&mut self, store: &ParamStore, outputs: &TowerOutputs, domains: &[usize]) -> Result<Matrix> {
        outputs.check()?;
        if outputs.s_d.cols() != self.k || outputs.s_d.rows() != domains.len() {
            return Err(Error::Dimension {
                op: "fusion_forward",
                left: outputs.s_d.shape(),
                right: (domains.len(), self.k),
            });
        }
        if let Some(&bad) = domains.iter().find(|&&d| d >= self.num_domains) {
            return Err(Error::Index {
                what: "domain id".into(),
                index: bad,
                bound: self.num_domains,
            });
        }
        let rows = domains.len();
        match &mut self.strategy {
            Strategy::Add { coeffs, heads } => {
                let hs = [
                    heads[0].forward(store, &outputs.s_d)?,
                    heads[1].forward(store, &outputs.s_s)?,
                    heads[2].forward(store, &outputs.s_a)?,
                ];
                let coeffs = vec![*coeffs; rows];
                let logits = weighted_sum(&hs, &coeffs);
                self.weighted_cache = Some(WeightedCache {
                    heads: hs,
                    coeffs,
                    domains: domains.to_vec(),
                });
                Ok(logits)
            }
            Strategy::AdaptiveAdd { w, heads } => {
                let hs = [
                    heads[0].forward(store, &outputs.s_d)?,
                    heads[1].forward(store, &outputs.s_s)?,
                    heads[2].forward(store, &outputs.s_a)?,
                ];
                let wv = store.value(*w);
                let coeffs: Vec<[f64; 3]> = domains
                    .iter()
                    .map(|&d| {
                        let (a, b, c) = adaptive_weights(wv[(d, 0)]);
                        [a, b, c]
                    })
                    .collect();
                let logits = weighted_sum(&hs, &coeffs);
                self.weighted_cache = Some(WeightedCache {
                    heads: hs,
                    coeffs,
                    domains: domains.to_vec(),
                });
                Ok(logits)
            }
            Strategy::Gate { gate_net, head } => {
                let weights = softmax_rows(&gate_net.forward(store, &one_hot(domains, self.num_domains))?);
                let mut fused = Matrix::zeros(rows, self.k);
                for r in 0..rows {
                    let g = weights.row(r);
                    let (d, s, a) = (outputs.s_d.row(r), outputs.s_s.row(r), outputs.s_a.row(r));
                    for (c, f) in fused.row_mut(r).iter_mut().enumerate() {
                        *f = g[0] * d[c] + g[1] * s[c] + g[2] * a[c];
                    }
                }
                let logits = head.forward(store, &fused)?;
                self.gate_cache = Some(GateCache {
                    weights,
                    outputs: outputs.clone(),
                });
                Ok(logits)
            }
            Strategy::Concat { head } => {
                let cat = Matrix::hconcat(&[&outputs.s_d, &outputs.s_s, &outputs.s_a])?;
                head.forward(store, &cat)
            }
        }
    }

    /// Accumulates fusion parameter gradients and returns the gradients of the tower outputs.
    pub fn backward(&mut self, store: &mut ParamStore, d_logits: &Matrix) -> Result<TowerOutputs> {
        let adaptive = self.adaptive_param();
        match &mut self.strategy {
            Strategy::Add { heads, .. } | Strategy::AdaptiveAdd { heads, .. } => {
                let cache = self
                    .weighted_cache
                    .take()
                    .ok_or_else(|| Error::State("fusion backward without forward".into()))?;
                let rows = cache.coeffs.len();
                if d_logits.shape() != (rows, 1) {
                    return Err(Error::Dimension {
                        op: "fusion_backward",
                        left: (rows, 1),
                        right: d_logits.shape(),
                    });
                }
                let mut d_heads = [Matrix::zeros(rows, 1), Matrix::zeros(rows, 1), Matrix::zeros(rows, 1)];
                for r in 0..rows {
                    let g = d_logits[(r, 0)];
                    for (head, c) in d_heads.iter_mut().zip(cache.coeffs[r]) {
                        head[(r, 0)] = g * c;
                    }
                }
                if let Some(w) = adaptive {
                    let mut dw = Matrix::zeros(self.num_domains, 1);
                    for r in 0..rows {
                        let c_d = cache.coeffs[r][0];
                        let h = |t: usize| cache.heads[t][(r, 0)];
                        // d/dw of c_d·h_d + (1 − c_d)/2·(h_s + h_a), with dc_d/dw = c_d(1 − c_d)
                        dw[(cache.domains[r], 0)] +=
                            d_logits[(r, 0)] * c_d * (1.0 - c_d) * (h(0) - 0.5 * (h(1) + h(2)));
                    }
                    store.grad_mut(w).add_assign(&dw)?;
                }
                let [h_d, h_s, h_a] = heads;
                let [g_d, g_s, g_a] = d_heads;
                Ok(TowerOutputs {
                    s_d: h_d.backward(store, &g_d)?,
                    s_s: h_s.backward(store, &g_s)?,
                    s_a: h_a.backward(store, &g_a)?,
                })
            }
            Strategy::Gate { gate_net, head } => {
                let cache = self
                    .gate_cache
                    .take()
                    .ok_or_else(|| Error::State("fusion backward without forward".into()))?;
                let d_fused = head.backward(store, d_logits)?;
                let rows = d_fused.rows();
                let mut grads = TowerOutputs {
                    s_d: Matrix::zeros(rows, self.k),
                    s_s: Matrix::zeros(rows, self.k),
                    s_a: Matrix::zeros(rows, self.k),
                };
                let mut d_gate_logits = Matrix::zeros(rows, 3);
                for r in 0..rows {
                    let g = cache.weights.row(r);
                    let df = d_fused.row(r);
                    let towers = [cache.outputs.s_d.row(r), cache.outputs.s_s.row(r), cache.outputs.s_a.row(r)];
                    let mut dg = [0.0; 3];
                    for t in 0..3 {
                        dg[t] = df.iter().zip(towers[t]).map(|(a, b)| a * b).sum();
                    }
                    for (c, &v) in df.iter().enumerate() {
                        grads.s_d[(r, c)] = g[0] * v;
                        grads.s_s[(r, c)] = g[1] * v;
                        grads.s_a[(r, c)] = g[2] * v;
                    }
                    let dot: f64 = (0..3).map(|t| g[t] * dg[t]).sum();
                    for t in 0..3 {
                        d_gate_logits[(r, t)] = g[t] * (dg[t] - dot);
                    }
                }
                gate_net.backward(store, &d_gate_logits)?;
                Ok(grads)
            }
            Strategy::Concat { head } => {
                let d_cat = head.backward(store, d_logits)?;
                let mut parts = d_cat.hsplit(&[self.k, self.k, self.k])?.into_iter();
                Ok(TowerOutputs {
                    s_d: parts.next().expect("three blocks"),
                    s_s: parts.next().expect("three blocks"),
                    s_a: parts.next().expect("three blocks"),
                })
            }
        }
    }

    pub(crate) fn hash_activation_pattern(&self, hasher: &mut impl Hasher) {
        match &self.strategy {
            Strategy::Gate { gate_net, .. } => gate_net.hash_activation_pattern(hasher),
            Strategy::Concat { head } => head.hash_activation_pattern(hasher),
            _ => {}
        }
    }
}

fn weighted_sum(heads: &[Matrix; 3], coeffs: &[[f64; 3]]) -> Matrix {
    let mut out = Matrix::zeros(coeffs.len(), 1);
    for (r, c) in coeffs.iter().enumerate() {
        out[(r, 0)] = c[0] * heads[0][(r, 0)] + c[1] * heads[1][(r, 0)] + c[2] * heads[2][(r, 0)];
    }
    out
}
