use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Column-oriented mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `feature_ids[field][row]`
    pub feature_ids: Vec<Vec<usize>>,
    pub domains: Vec<usize>,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn label_matrix(&self) -> Matrix {
        Matrix::column(&self.labels)
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Batch {
        Batch {
            feature_ids: self
                .feature_ids
                .iter()
                .map(|col| rows.iter().map(|&r| col[r]).collect())
                .collect(),
            domains: rows.iter().map(|&r| self.domains[r]).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStrategy {
    /// Every batch comes from a single domain.
    DomainHomogeneous,
    /// Uniform shuffle over all examples.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub strategy: BatchStrategy,
    pub seed: u64,
    /// Optional cap on batches per epoch.
    pub max_batches_per_epoch: Option<usize>,
}

impl Default for BatchPlan {
    fn default() -> Self {
        Self {
            batch_size: 2000,
            strategy: BatchStrategy::DomainHomogeneous,
            seed: 0,
            max_batches_per_epoch: None,
        }
    }
}

impl BatchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// Example indices of every batch in one epoch. Identical `(plan, epoch)`
    /// gives an identical schedule.
    ///
    /// Domain-homogeneous: each domain's shuffled examples are chunked, then the
    /// next batch is drawn from a domain chosen with probability proportional to
    /// its remaining examples. Chunks with fewer than 2 rows are dropped.
    pub fn schedule(&self, dataset: &Dataset, epoch: u64) -> Result<Vec<Vec<usize>>> {
        self.validate()?;
        if dataset.is_empty() {
            return Err(Error::Validation("cannot batch an empty dataset".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut batches = match self.strategy {
            BatchStrategy::Mixed => {
                let mut order: Vec<usize> = (0..dataset.len()).collect();
                order.shuffle(&mut rng);
                chunk(order, self.batch_size, "mixed")
            }
            BatchStrategy::DomainHomogeneous => {
                let mut queues: Vec<std::collections::VecDeque<Vec<usize>>> = Vec::new();
                let mut remaining: Vec<usize> = Vec::new();
                for d in 0..dataset.num_domains() {
                    let mut idx = dataset.domain_indices(d);
                    idx.shuffle(&mut rng);
                    let chunks = chunk(idx, self.batch_size, &format!("domain {d}"));
                    remaining.push(chunks.iter().map(Vec::len).sum());
                    queues.push(chunks.into());
                }
                let mut out = Vec::new();
                loop {
                    let total: usize = remaining.iter().sum();
                    if total == 0 {
                        break;
                    }
                    let mut pick = rng.random_range(0..total);
                    let mut d = 0;
                    while pick >= remaining[d] {
                        pick -= remaining[d];
                        d += 1;
                    }
                    let b = queues[d].pop_front().expect("remaining > 0 implies a queued batch");
                    remaining[d] -= b.len();
                    out.push(b);
                }
                out
            }
        };
        if let Some(cap) = self.max_batches_per_epoch {
            batches.truncate(cap);
        }
        Ok(batches)
    }
}

fn chunk(indices: Vec<usize>, size: usize, what: &str) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = indices.chunks(size).map(<[usize]>::to_vec).collect();
    if out.last().is_some_and(|b| b.len() < 2) {
        debug!("{what}: dropping a trailing batch of 1 example (normalization needs at least 2)");
        out.pop();
    }
    out
}
