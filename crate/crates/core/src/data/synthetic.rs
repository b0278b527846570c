//! Calibrated synthetic multi-domain CTR data.
//!
//! Ground truth is logistic. For an example in domain `d` with feature values
//! `v_1..v_F`:
//!
//! ```text
//! logit = c_d + scale / sqrt(F) * Σ_f [ sqrt(1 - mix) * θ_f(v_f) + sqrt(mix) * φ_{d,f}(v_f) ]
//! ```
//!
//! `θ` is shared across domains, `φ` is domain-specific, both low-rank
//! projections of per-value latent vectors. Feature values follow
//! domain-conditional categorical distributions. The intercepts `c_d` are
//! solved by bisection so that the mean click probability over a large
//! calibration draw equals the target CTR.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetField, Example};
use crate::error::{Error, Result};
use crate::nn::loss::sigmoid;

/// Draws per domain used to fit and verify the intercepts.
pub const CALIBRATION_SAMPLES: usize = 50_000;
/// Required `|E[σ(logit)] − target|` after calibration.
pub const CALIBRATION_TOLERANCE: f64 = 1e-4;
const INTERCEPT_BRACKET: f64 = 60.0;

const STREAM_TRUTH: u64 = 0;
const STREAM_CALIBRATION: u64 = 1;
const STREAM_SAMPLING: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub domain_names: Vec<String>,
    /// Probability of each domain; sums to 1.
    pub domain_shares: Vec<f64>,
    /// Per-domain mean click rate, each in `(0, 1)`.
    pub target_ctrs: Vec<f64>,
    /// One vocabulary size per categorical field.
    pub vocab_sizes: Vec<usize>,
    pub shared_effect_dim: usize,
    pub domain_effect_dim: usize,
    /// Standard deviation scale of the feature part of the logit.
    pub effect_scale: f64,
    /// Weight of domain-specific versus shared effects, in `[0, 1]`.
    pub domain_mix: f64,
    /// How far each domain's feature distributions move from the common one.
    pub feature_skew: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Equal-vocabulary spec with default effect sizes.
    pub fn new(shares_pct: &[f64], ctrs_pct: &[f64], seed: u64) -> Self {
        Self {
            domain_names: (1..=shares_pct.len()).map(|d| format!("D{d}")).collect(),
            domain_shares: shares_pct.iter().map(|s| s / 100.0).collect(),
            target_ctrs: ctrs_pct.iter().map(|c| c / 100.0).collect(),
            vocab_sizes: vec![32; 6],
            shared_effect_dim: 4,
            domain_effect_dim: 4,
            effect_scale: 1.5,
            domain_mix: 0.5,
            feature_skew: 0.5,
            seed,
        }
    }

    /// Table-1-shaped presets: `company1`, `company2`, `alicpp`.
    // 6.28 is a measured share, not an approximation of tau.
    #[allow(clippy::approx_constant)]
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "company1" => Ok(Self::new(&[93.31, 6.68, 0.01], &[0.41, 16.28, 13.33], seed)),
            "company2" => Ok(Self::new(
                &[59.76, 16.09, 15.59, 6.28, 1.96, 0.32],
                &[4.75, 14.79, 2.94, 10.0, 13.4, 20.11],
                seed,
            )),
            "alicpp" => Ok(Self::new(&[0.75, 61.43, 37.82], &[4.4, 3.82, 4.02], seed)),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected company1, company2 or alicpp)"
            ))),
        }
    }

    pub const PRESETS: [&'static str; 3] = ["company1", "company2", "alicpp"];

    pub fn num_domains(&self) -> usize {
        self.domain_shares.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.domain_shares.len();
        if m == 0 {
            return Err(Error::Config("at least one domain is required".into()));
        }
        if self.target_ctrs.len() != m || self.domain_names.len() != m {
            return Err(Error::Config(format!(
                "domain_shares has {m} entries but target_ctrs has {} and domain_names {}",
                self.target_ctrs.len(),
                self.domain_names.len()
            )));
        }
        if self.domain_shares.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("domain shares must be finite and non-negative".into()));
        }
        let total: f64 = self.domain_shares.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("domain shares sum to {total}, not 1")));
        }
        if let Some(c) = self.target_ctrs.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
            return Err(Error::Config(format!("target ctr {c} is outside (0, 1)")));
        }
        if self.vocab_sizes.is_empty() || self.vocab_sizes.contains(&0) {
            return Err(Error::Config("vocab_sizes must be non-empty and positive".into()));
        }
        if self.shared_effect_dim == 0 || self.domain_effect_dim == 0 {
            return Err(Error::Config("effect dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.domain_mix) {
            return Err(Error::Config(format!("domain_mix {} is outside [0, 1]", self.domain_mix)));
        }
        if !(self.effect_scale.is_finite() && self.effect_scale >= 0.0) {
            return Err(Error::Config("effect_scale must be finite and non-negative".into()));
        }
        if !(self.feature_skew.is_finite() && self.feature_skew >= 0.0) {
            return Err(Error::Config("feature_skew must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn fields(&self) -> Vec<DatasetField> {
        self.vocab_sizes
            .iter()
            .enumerate()
            .map(|(f, &v)| DatasetField {
                name: format!("f{f}"),
                vocab_size: v,
            })
            .collect()
    }

    /// Samples the ground truth and calibrates the intercepts.
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        self.validate()?;
        let m = self.num_domains();
        let nf = self.vocab_sizes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(STREAM_TRUTH);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };

        let shared_dir: Vec<f64> = (0..self.shared_effect_dim).map(|_| normal()).collect();
        let domain_dirs: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..self.domain_effect_dim).map(|_| normal()).collect())
            .collect();
        let mut shared_effects = Vec::with_capacity(nf);
        let mut domain_effects = vec![Vec::with_capacity(nf); m];
        let mut feature_probs = vec![Vec::with_capacity(nf); m];
        for &vocab in &self.vocab_sizes {
            let base: Vec<f64> = (0..vocab).map(|_| normal()).collect();
            let u: Vec<Vec<f64>> = (0..vocab)
                .map(|_| (0..self.shared_effect_dim).map(|_| normal()).collect())
                .collect();
            let v: Vec<Vec<f64>> = (0..vocab)
                .map(|_| (0..self.domain_effect_dim).map(|_| normal()).collect())
                .collect();
            shared_effects.push(u.iter().map(|row| projection(row, &shared_dir)).collect::<Vec<_>>());
            for d in 0..m {
                domain_effects[d].push(v.iter().map(|row| projection(row, &domain_dirs[d])).collect::<Vec<_>>());
                let logits: Vec<f64> = base.iter().map(|b| b + self.feature_skew * normal()).collect();
                feature_probs[d].push(softmax(&logits));
            }
        }
        let mut truth = GroundTruth {
            shared_effects,
            domain_effects,
            feature_probs,
            intercepts: vec![0.0; m],
            weight_shared: self.effect_scale * (1.0 - self.domain_mix).sqrt() / (nf as f64).sqrt(),
            weight_domain: self.effect_scale * self.domain_mix.sqrt() / (nf as f64).sqrt(),
            calibration: Vec::with_capacity(m),
        };

        let mut crng = ChaCha8Rng::seed_from_u64(self.seed);
        crng.set_stream(STREAM_CALIBRATION);
        let samplers = truth.samplers()?;
        for (d, sampler) in samplers.iter().enumerate().take(m) {
            let effects: Vec<f64> = (0..CALIBRATION_SAMPLES)
                .map(|_| {
                    let ids: Vec<usize> = sampler.iter().map(|s| s.sample(&mut crng)).collect();
                    truth.feature_logit(d, &ids)
                })
                .collect();
            let (c, achieved) = calibrate_intercept(&effects, self.target_ctrs[d]).map_err(|reason| {
                Error::Calibration {
                    domain: d,
                    target: self.target_ctrs[d],
                    reason,
                }
            })?;
            truth.intercepts[d] = c;
            truth.calibration.push(Calibration {
                target: self.target_ctrs[d],
                achieved,
                intercept: c,
            });
        }
        Ok(truth)
    }

    /// `n` examples; a pure function of `(self, n)`.
    pub fn generate(&self, n: usize) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Validation("cannot generate an empty dataset (n = 0)".into()));
        }
        let truth = self.ground_truth()?;
        self.generate_with(&truth, n)
    }

    pub fn generate_with(&self, truth: &GroundTruth, n: usize) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(STREAM_SAMPLING);
        let domain_dist = WeightedIndex::new(&self.domain_shares)
            .map_err(|e| Error::Config(format!("domain shares: {e}")))?;
        let samplers = truth.samplers()?;
        let mut examples = Vec::with_capacity(n);
        for _ in 0..n {
            let d = domain_dist.sample(&mut rng);
            let ids: Vec<usize> = samplers[d].iter().map(|s| s.sample(&mut rng)).collect();
            let p = truth.probability(d, &ids);
            let label = u8::from(rng.random::<f64>() < p);
            examples.push(Example {
                feature_ids: ids,
                domain_id: d,
                label,
            });
        }
        Dataset::new(self.fields(), self.domain_names.clone(), examples)
    }
}

/// Result of fitting one domain's intercept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub target: f64,
    /// Mean click probability over the calibration draw at the fitted intercept.
    pub achieved: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// `[field][value]`
    shared_effects: Vec<Vec<f64>>,
    /// `[domain][field][value]`
    domain_effects: Vec<Vec<Vec<f64>>>,
    /// `[domain][field][value]`
    feature_probs: Vec<Vec<Vec<f64>>>,
    intercepts: Vec<f64>,
    weight_shared: f64,
    weight_domain: f64,
    calibration: Vec<Calibration>,
}

impl GroundTruth {
    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn calibration(&self) -> &[Calibration] {
        &self.calibration
    }

    pub fn feature_probs(&self, domain: usize, field: usize) -> &[f64] {
        &self.feature_probs[domain][field]
    }

    /// Feature part of the logit, without the intercept.
    pub fn feature_logit(&self, domain: usize, ids: &[usize]) -> f64 {
        let mut shared = 0.0;
        let mut specific = 0.0;
        for (f, &v) in ids.iter().enumerate() {
            shared += self.shared_effects[f][v];
            specific += self.domain_effects[domain][f][v];
        }
        self.weight_shared * shared + self.weight_domain * specific
    }

    pub fn probability(&self, domain: usize, ids: &[usize]) -> f64 {
        sigmoid(self.intercepts[domain] + self.feature_logit(domain, ids))
    }

    fn samplers(&self) -> Result<Vec<Vec<WeightedIndex<f64>>>> {
        self.feature_probs
            .iter()
            .map(|fields| {
                fields
                    .iter()
                    .map(|p| WeightedIndex::new(p).map_err(|e| Error::Numeric(format!("feature distribution: {e}"))))
                    .collect()
            })
            .collect()
    }
}

fn projection(row: &[f64], dir: &[f64]) -> f64 {
    row.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>() / (dir.len() as f64).sqrt()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn mean_probability(effects: &[f64], intercept: f64) -> f64 {
    effects.iter().map(|e| sigmoid(intercept + e)).sum::<f64>() / effects.len() as f64
}

/// Bisection on the intercept; the mean probability is increasing in it.
fn calibrate_intercept(effects: &[f64], target: f64) -> std::result::Result<(f64, f64), String> {
    if effects.iter().any(|e| !e.is_finite()) {
        return Err("non-finite feature effects".into());
    }
    let (mut lo, mut hi) = (-INTERCEPT_BRACKET, INTERCEPT_BRACKET);
    let (f_lo, f_hi) = (mean_probability(effects, lo), mean_probability(effects, hi));
    if !(f_lo < target && target < f_hi) {
        return Err(format!(
            "target outside reachable range [{f_lo:.3e}, {f_hi:.6}] for intercepts in ±{INTERCEPT_BRACKET}"
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_probability(effects, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    let achieved = mean_probability(effects, c);
    if (achieved - target).abs() >= CALIBRATION_TOLERANCE {
        return Err(format!("bisection stalled at mean {achieved}"));
    }
    Ok((c, achieved))
}

/// Mean of `σ(c + e)` for `e ~ N(0, s²)` by trapezoid integration.
#[cfg(test)]
fn gaussian_mean_probability(c: f64, s: f64) -> f64 {
    let steps = 20_000;
    let half_width = 12.0;
    let h = 2.0 * half_width / steps as f64;
    let mut acc = 0.0;
    for i in 0..=steps {
        let z = -half_width + i as f64 * h;
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        acc += w * density * sigmoid(c + s * z);
    }
    acc * h
}
