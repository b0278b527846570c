//! Normalization of the concatenated embedding vector: none, batch, layer or
//! partition (per-domain statistics with a combined global × domain affine).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::param::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    None,
    Batch,
    Layer,
    Partition,
}

impl NormKind {
    pub const ALL: [NormKind; 4] = [NormKind::None, NormKind::Batch, NormKind::Layer, NormKind::Partition];

    pub fn label(self) -> &'static str {
        match self {
            NormKind::None => "No Normalization",
            NormKind::Batch => "BatchNorm",
            NormKind::Layer => "LayerNorm",
            NormKind::Partition => "PartitionNorm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormOptions {
    /// Weight of the old value in the running-statistics EMA.
    pub momentum: f64,
    pub eps: f64,
    /// Partition only: take moments over the whole batch instead of per domain.
    pub shared_moments: bool,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            momentum: 0.99,
            eps: 1e-5,
            shared_moments: false,
        }
    }
}

impl NormOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("norm momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("norm eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Clone, Debug)]
struct NormCache {
    xhat: Matrix,
    domains: Vec<usize>,
    /// Row groups sharing moments, and `1/sqrt(var+eps)` for each group.
    /// Empty when statistics were constants (inference) or per-row (layer).
    groups: Vec<(Vec<usize>, Vec<f64>)>,
    /// Per-row inverse std: layer norm (one per row) or inference (per column, per row).
    row_inv_std: Option<Matrix>,
}

/// Normalization state: affine parameters, running statistics and mode.
#[derive(Clone, Debug)]
pub struct Normalization {
    kind: NormKind,
    opts: NormOptions,
    dim: usize,
    num_domains: usize,
    gamma: Option<ParamId>,
    beta: Option<ParamId>,
    gamma_p: Option<ParamId>,
    beta_p: Option<ParamId>,
    running_mean: Matrix,
    running_var: Matrix,
    mode: Mode,
    cache: Option<NormCache>,
}

impl Normalization {
    pub fn new(
        store: &mut ParamStore,
        kind: NormKind,
        opts: NormOptions,
        dim: usize,
        num_domains: usize,
    ) -> Result<Self> {
        opts.validate()?;
        let mut gamma = None;
        let mut beta = None;
        let mut gamma_p = None;
        let mut beta_p = None;
        if kind != NormKind::None {
            gamma = Some(store.register("norm/gamma", Matrix::filled(1, dim, 1.0))?);
            beta = Some(store.register("norm/beta", Matrix::zeros(1, dim))?);
        }
        if kind == NormKind::Partition {
            gamma_p = Some(store.register("norm/gamma_p", Matrix::filled(num_domains, dim, 1.0))?);
            beta_p = Some(store.register("norm/beta_p", Matrix::zeros(num_domains, dim))?);
        }
        let stat_rows = match kind {
            NormKind::Batch => 1,
            NormKind::Partition if opts.shared_moments => 1,
            NormKind::Partition => num_domains,
            NormKind::None | NormKind::Layer => 0,
        };
        Ok(Self {
            kind,
            opts,
            dim,
            num_domains,
            gamma,
            beta,
            gamma_p,
            beta_p,
            running_mean: Matrix::zeros(stat_rows, dim),
            running_var: Matrix::filled(stat_rows, dim, 1.0),
            mode: Mode::Training,
            cache: None,
        })
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn options(&self) -> NormOptions {
        self.opts
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn gamma(&self) -> Option<ParamId> {
        self.gamma
    }

    pub fn beta(&self) -> Option<ParamId> {
        self.beta
    }

    pub fn gamma_p(&self) -> Option<ParamId> {
        self.gamma_p
    }

    pub fn beta_p(&self) -> Option<ParamId> {
        self.beta_p
    }

    pub fn running_mean(&self) -> &Matrix {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Matrix {
        &self.running_var
    }

    pub fn set_running_stats(&mut self, mean: Matrix, var: Matrix) -> Result<()> {
        mean.ensure_same_shape(&self.running_mean, "running mean")?;
        var.ensure_same_shape(&self.running_var, "running var")?;
        if var.as_slice().iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Validation("running variance must be non-negative".into()));
        }
        self.running_mean = mean;
        self.running_var = var;
        Ok(())
    }

    /// Per-row `(scale, shift)` of the affine step.
    fn row_affine(&self, store: &ParamStore, domain: usize) -> (Vec<f64>, Vec<f64>) {
        let (Some(g), Some(b)) = (self.gamma, self.beta) else {
            unreachable!("affine requested for NormKind::None")
        };
        let mut scale = store.value(g).row(0).to_vec();
        let mut shift = store.value(b).row(0).to_vec();
        if let (Some(gp), Some(bp)) = (self.gamma_p, self.beta_p) {
            for (s, &v) in scale.iter_mut().zip(store.value(gp).row(domain)) {
                *s *= v;
            }
            for (s, &v) in shift.iter_mut().zip(store.value(bp).row(domain)) {
                *s += v;
            }
        }
        (scale, shift)
    }

    fn check_domains(&self, x: &Matrix, domains: &[usize]) -> Result<()> {
        if domains.len() != x.rows() {
            return Err(Error::Dimension {
                op: "norm_forward domains",
                left: x.shape(),
                right: (domains.len(), 1),
            });
        }
        if x.cols() != self.dim {
            return Err(Error::Dimension {
                op: "norm_forward",
                left: x.shape(),
                right: (x.rows(), self.dim),
            });
        }
        if let Some(&bad) = domains.iter().find(|&&d| d >= self.num_domains) {
            return Err(Error::Index {
                what: "domain id".into(),
                index: bad,
                bound: self.num_domains,
            });
        }
        Ok(())
    }

    /// Row groups that share moments in training mode, with the running-stat row each updates.
    fn moment_groups(&self, domains: &[usize]) -> Vec<(usize, Vec<usize>)> {
        let all = || (0..domains.len()).collect::<Vec<_>>();
        match self.kind {
            NormKind::Batch => vec![(0, all())],
            NormKind::Partition if self.opts.shared_moments => vec![(0, all())],
            NormKind::Partition => {
                let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
                for d in 0..self.num_domains {
                    let rows: Vec<usize> = (0..domains.len()).filter(|&i| domains[i] == d).collect();
                    if !rows.is_empty() {
                        groups.push((d, rows));
                    }
                }
                groups
            }
            NormKind::None | NormKind::Layer => Vec::new(),
        }
    }

    pub fn forward(&mut self, store: &ParamStore, x: &Matrix, domains: &[usize]) -> Result<Matrix> {
        self.check_domains(x, domains)?;
        if self.kind == NormKind::None {
            self.cache = Some(NormCache {
                xhat: Matrix::zeros(0, 0),
                domains: domains.to_vec(),
                groups: Vec::new(),
                row_inv_std: None,
            });
            return Ok(x.clone());
        }
        let eps = self.opts.eps;
        let (rows, cols) = x.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut groups = Vec::new();
        let mut row_inv_std = None;

        match (self.kind, self.mode) {
            (NormKind::Layer, _) => {
                let mut inv = Matrix::zeros(rows, 1);
                for r in 0..rows {
                    let row = x.row(r);
                    let mean = row.iter().sum::<f64>() / cols as f64;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
                    let inv_std = 1.0 / (var + eps).sqrt();
                    inv[(r, 0)] = inv_std;
                    for (o, &v) in xhat.row_mut(r).iter_mut().zip(row) {
                        *o = (v - mean) * inv_std;
                    }
                }
                row_inv_std = Some(inv);
            }
            (_, Mode::Training) => {
                let momentum = self.opts.momentum;
                let moment_groups = self.moment_groups(domains);
                if let Some((stat_row, members)) = moment_groups.iter().find(|(_, m)| m.len() < 2) {
                    return Err(Error::DegenerateBatch {
                        group: match self.kind {
                            NormKind::Partition if !self.opts.shared_moments => format!("domain {stat_row}"),
                            _ => "batch".into(),
                        },
                        rows: members.len(),
                    });
                }
                for (stat_row, members) in moment_groups {
                    let n = members.len() as f64;
                    let mut inv_stds = Vec::with_capacity(cols);
                    for c in 0..cols {
                        let mean = members.iter().map(|&i| x[(i, c)]).sum::<f64>() / n;
                        let var = members.iter().map(|&i| (x[(i, c)] - mean).powi(2)).sum::<f64>() / n;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        for &i in &members {
                            xhat[(i, c)] = (x[(i, c)] - mean) * inv_std;
                        }
                        inv_stds.push(inv_std);
                        let rm = &mut self.running_mean[(stat_row, c)];
                        *rm = momentum * *rm + (1.0 - momentum) * mean;
                        let rv = &mut self.running_var[(stat_row, c)];
                        *rv = momentum * *rv + (1.0 - momentum) * var;
                    }
                    groups.push((members, inv_stds));
                }
            }
            (_, Mode::Inference) => {
                let mut inv = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let stat_row = if self.running_mean.rows() == 1 { 0 } else { domains[r] };
                    for c in 0..cols {
                        let inv_std = 1.0 / (self.running_var[(stat_row, c)] + eps).sqrt();
                        inv[(r, c)] = inv_std;
                        xhat[(r, c)] = (x[(r, c)] - self.running_mean[(stat_row, c)]) * inv_std;
                    }
                }
                row_inv_std = Some(inv);
            }
        }

        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let (scale, shift) = self.row_affine(store, domains[r]);
            for c in 0..cols {
                out[(r, c)] = xhat[(r, c)] * scale[c] + shift[c];
            }
        }
        self.cache = Some(NormCache {
            xhat,
            domains: domains.to_vec(),
            groups,
            row_inv_std,
        });
        Ok(out)
    }

    pub fn backward(&mut self, store: &mut ParamStore, upstream: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("normalization backward called without a forward pass".into()))?;
        if self.kind == NormKind::None {
            return Ok(upstream.clone());
        }
        upstream.ensure_same_shape(&cache.xhat, "norm_backward")?;
        let (rows, cols) = upstream.shape();
        let (gamma, beta) = (self.gamma.expect("affine"), self.beta.expect("affine"));

        // Affine parameter gradients and d xhat.
        let mut dxhat = Matrix::zeros(rows, cols);
        let mut d_gamma = Matrix::zeros(1, cols);
        let mut d_beta = Matrix::zeros(1, cols);
        let mut d_gamma_p = self.gamma_p.map(|_| Matrix::zeros(self.num_domains, cols));
        let mut d_beta_p = self.beta_p.map(|_| Matrix::zeros(self.num_domains, cols));
        for r in 0..rows {
            let d = cache.domains[r];
            let (scale, _) = self.row_affine(store, d);
            let g = store.value(gamma).row(0);
            let gp = self.gamma_p.map(|id| store.value(id).row(d));
            for c in 0..cols {
                let up = upstream[(r, c)];
                let xh = cache.xhat[(r, c)];
                dxhat[(r, c)] = up * scale[c];
                d_beta[(0, c)] += up;
                match gp {
                    Some(gp) => {
                        d_gamma[(0, c)] += up * xh * gp[c];
                        if let Some(m) = d_gamma_p.as_mut() {
                            m[(d, c)] += up * xh * g[c];
                        }
                        if let Some(m) = d_beta_p.as_mut() {
                            m[(d, c)] += up;
                        }
                    }
                    None => d_gamma[(0, c)] += up * xh,
                }
            }
        }
        store.grad_mut(gamma).add_assign(&d_gamma)?;
        store.grad_mut(beta).add_assign(&d_beta)?;
        if let (Some(id), Some(m)) = (self.gamma_p, d_gamma_p) {
            store.grad_mut(id).add_assign(&m)?;
        }
        if let (Some(id), Some(m)) = (self.beta_p, d_beta_p) {
            store.grad_mut(id).add_assign(&m)?;
        }

        let mut dx = Matrix::zeros(rows, cols);
        if self.kind == NormKind::Layer {
            let inv = cache.row_inv_std.as_ref().expect("layer norm caches row stats");
            let n = cols as f64;
            for r in 0..rows {
                let dxh = dxhat.row(r);
                let xh = cache.xhat.row(r);
                let sum_d: f64 = dxh.iter().sum();
                let sum_dx: f64 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum();
                let k = inv[(r, 0)] / n;
                for c in 0..cols {
                    dx[(r, c)] = k * (n * dxh[c] - sum_d - xh[c] * sum_dx);
                }
            }
        } else if let Some(inv) = &cache.row_inv_std {
            // Inference: statistics are constants.
            for r in 0..rows {
                for c in 0..cols {
                    dx[(r, c)] = dxhat[(r, c)] * inv[(r, c)];
                }
            }
        } else {
            for (members, inv_stds) in &cache.groups {
                let n = members.len() as f64;
                for c in 0..cols {
                    let sum_d: f64 = members.iter().map(|&i| dxhat[(i, c)]).sum();
                    let sum_dx: f64 = members.iter().map(|&i| dxhat[(i, c)] * cache.xhat[(i, c)]).sum();
                    let k = inv_stds[c] / n;
                    for &i in members {
                        dx[(i, c)] = k * (n * dxhat[(i, c)] - sum_d - cache.xhat[(i, c)] * sum_dx);
                    }
                }
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(kind: NormKind, dim: usize, m: usize) -> (ParamStore, Normalization) {
        let mut store = ParamStore::new();
        let norm = Normalization::new(&mut store, kind, NormOptions::default(), dim, m).unwrap();
        (store, norm)
    }

    #[test]
    fn none_is_pass_through() {
        let (mut store, mut n) = build(NormKind::None, 2, 2);
        let x = Matrix::from_rows(&[&[1.0, -7.0], &[3.5, 0.0]]);
        assert_eq!(n.forward(&store, &x, &[0, 1]).unwrap(), x);
        let up = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(n.backward(&mut store, &up).unwrap(), up);
        assert!(store.is_empty());
    }

    #[test]
    fn batch_norm_two_values() {
        let (store, mut n) = build(NormKind::Batch, 1, 1);
        let out = n.forward(&store, &Matrix::column(&[1.0, 3.0]), &[0, 0]).unwrap();
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out[(0, 0)] + expected).abs() < 1e-15);
        assert!((out[(1, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_constant_row_maps_to_zero() {
        let (store, mut n) = build(NormKind::Layer, 3, 1);
        let out = n.forward(&store, &Matrix::from_rows(&[&[2.0, 2.0, 2.0]]), &[0]).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(n.running_mean().rows(), 0);
    }

    #[test]
    fn single_row_group_is_degenerate_in_training() {
        let (store, mut n) = build(NormKind::Batch, 2, 2);
        let err = n.forward(&store, &Matrix::zeros(1, 2), &[0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateBatch { rows: 1, .. }));

        let (store, mut n) = build(NormKind::Partition, 2, 2);
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let err = n.forward(&store, &x, &[0, 0, 1]).unwrap_err();
        assert!(err.to_string().contains("domain 1"), "{err}");
    }

    #[test]
    fn unknown_domain_is_an_index_error() {
        let (store, mut n) = build(NormKind::Partition, 2, 2);
        let err = n.forward(&store, &Matrix::zeros(2, 2), &[0, 2]).unwrap_err();
        assert!(matches!(err, Error::Index { index: 2, bound: 2, .. }));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        for kind in [NormKind::Batch, NormKind::Layer, NormKind::Partition] {
            let (mut store, mut n) = build(kind, 3, 2);
            let x = Matrix::from_rows(&[&[1.0, 2.0, 0.5], &[3.0, -4.0, 1.0], &[0.2, 0.1, 9.0], &[1.0, 1.5, 2.0]]);
            n.forward(&store, &x, &[0, 1, 0, 1]).unwrap();
            let dx = n.backward(&mut store, &Matrix::zeros(4, 3)).unwrap();
            assert!(dx.as_slice().iter().all(|&v| v == 0.0));
            assert!(store.iter().all(|(_, p)| p.grad.as_slice().iter().all(|&g| g == 0.0)));
        }
    }

    #[test]
    fn absent_domain_gets_no_partition_gradient() {
        let (mut store, mut n) = build(NormKind::Partition, 2, 3);
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, -4.0], &[0.2, 0.1]]);
        n.forward(&store, &x, &[0, 0, 0]).unwrap();
        n.backward(&mut store, &Matrix::filled(3, 2, 0.7)).unwrap();
        for id in [n.gamma_p().unwrap(), n.beta_p().unwrap()] {
            let g = store.grad(id);
            assert_eq!(g.row(1), &[0.0, 0.0]);
            assert_eq!(g.row(2), &[0.0, 0.0]);
        }
    }

    #[test]
    fn running_stats_track_repeated_batch() {
        let (store, mut n) = build(NormKind::Batch, 1, 1);
        let x = Matrix::column(&[4.0, 6.0, 8.0]);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            n.forward(&store, &x, &[0, 0, 0]).unwrap();
            let dist = (n.running_mean()[(0, 0)] - 6.0).abs();
            assert!(dist < prev);
            prev = dist;
            assert!(n.running_var()[(0, 0)] >= 0.0);
        }
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let (mut store, mut n) = build(NormKind::Layer, 2, 1);
        assert!(matches!(n.backward(&mut store, &Matrix::zeros(1, 2)), Err(Error::State(_))));
    }
}
