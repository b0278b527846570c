//! Multi-domain datasets, synthetic generation, CSV ingest and batching.

pub mod batch;
pub mod csv;
pub mod synthetic;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use batch::{Batch, BatchPlan, BatchStrategy};
pub use synthetic::{Calibration, SyntheticSpec};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::FieldSpec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    /// One id per field, in field order.
    pub feature_ids: Vec<usize>,
    pub domain_id: usize,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetField {
    pub name: String,
    pub vocab_size: usize,
}

/// Per-domain share and click rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSummary {
    pub name: String,
    pub examples: usize,
    pub positives: usize,
    /// Fraction of all examples.
    pub share: f64,
    /// Fraction of positives; `NaN` for an empty domain.
    pub ctr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    fields: Vec<DatasetField>,
    domain_names: Vec<String>,
    examples: Vec<Example>,
}

impl Dataset {
    /// Checks every example against the field vocabularies and domain count.
    pub fn new(fields: Vec<DatasetField>, domain_names: Vec<String>, examples: Vec<Example>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Validation("a dataset needs at least one feature field".into()));
        }
        if domain_names.is_empty() {
            return Err(Error::Validation("a dataset needs at least one domain".into()));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.feature_ids.len() != fields.len() {
                return Err(Error::Validation(format!(
                    "example {i} has {} feature ids, expected {}",
                    ex.feature_ids.len(),
                    fields.len()
                )));
            }
            for (id, f) in ex.feature_ids.iter().zip(&fields) {
                if *id >= f.vocab_size {
                    return Err(Error::Index {
                        what: format!("field `{}` id in example {i}", f.name),
                        index: *id,
                        bound: f.vocab_size,
                    });
                }
            }
            if ex.domain_id >= domain_names.len() {
                return Err(Error::Index {
                    what: format!("domain id in example {i}"),
                    index: ex.domain_id,
                    bound: domain_names.len(),
                });
            }
            if ex.label > 1 {
                return Err(Error::Validation(format!("example {i} has label {}", ex.label)));
            }
        }
        Ok(Self {
            fields,
            domain_names,
            examples,
        })
    }

    pub fn fields(&self) -> &[DatasetField] {
        &self.fields
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_domains(&self) -> usize {
        self.domain_names.len()
    }

    /// Model field specs with one embedding width for every field.
    pub fn field_specs(&self, embedding_dim: usize) -> Vec<FieldSpec> {
        self.fields
            .iter()
            .map(|f| FieldSpec {
                name: f.name.clone(),
                vocab_size: f.vocab_size,
                embedding_dim,
            })
            .collect()
    }

    pub fn domain_indices(&self, d: usize) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.domain_id == d)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn domains(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.domain_id).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            feature_ids: (0..self.fields.len())
                .map(|f| indices.iter().map(|&i| self.examples[i].feature_ids[f]).collect())
                .collect(),
            domains: indices.iter().map(|&i| self.examples[i].domain_id).collect(),
            labels: indices.iter().map(|&i| f64::from(self.examples[i].label)).collect(),
        }
    }

    /// Same schema, selected examples in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            fields: self.fields.clone(),
            domain_names: self.domain_names.clone(),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    pub fn filter_domain(&self, d: usize) -> Dataset {
        self.subset(&self.domain_indices(d))
    }

    /// Contiguous train/validation/test split by position.
    pub fn split(&self, train: f64, valid: f64) -> Result<(Dataset, Dataset, Dataset)> {
        if !(train > 0.0 && valid >= 0.0 && train + valid <= 1.0) {
            return Err(Error::Config(format!(
                "invalid split fractions train={train} valid={valid}"
            )));
        }
        let n = self.len();
        let a = (n as f64 * train).round() as usize;
        let b = ((n as f64 * (train + valid)).round() as usize).min(n);
        let idx: Vec<usize> = (0..n).collect();
        Ok((self.subset(&idx[..a]), self.subset(&idx[a..b]), self.subset(&idx[b..])))
    }

    pub fn summary(&self) -> Vec<DomainSummary> {
        let mut counts = vec![(0usize, 0usize); self.num_domains()];
        for e in &self.examples {
            counts[e.domain_id].0 += 1;
            counts[e.domain_id].1 += usize::from(e.label);
        }
        let n = self.len().max(1) as f64;
        counts
            .into_iter()
            .zip(&self.domain_names)
            .map(|((examples, positives), name)| DomainSummary {
                name: name.clone(),
                examples,
                positives,
                share: examples as f64 / n,
                ctr: if examples == 0 {
                    f64::NAN
                } else {
                    positives as f64 / examples as f64
                },
            })
            .collect()
    }

    /// Per-domain share and CTR table, percentages with two decimals.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>10} {:>10} {:>10}", "domain", "examples", "share %", "ctr %");
        for row in self.summary() {
            let ctr = if row.ctr.is_nan() {
                "NA".to_string()
            } else {
                format!("{:.2}", 100.0 * row.ctr)
            };
            let _ = writeln!(
                s,
                "{:<12} {:>10} {:>10.2} {:>10}",
                row.name,
                row.examples,
                100.0 * row.share,
                ctr
            );
        }
        s
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut meta = toml::Table::new();
        let fields = toml::Value::try_from(&self.fields).map_err(|e| Error::Config(e.to_string()))?;
        meta.insert("fields".into(), fields);
        meta.insert(
            "domain_names".into(),
            toml::Value::Array(self.domain_names.iter().cloned().map(toml::Value::String).collect()),
        );
        let n = self.len();
        let f = self.fields.len();
        let mut ids = Vec::with_capacity(n * f);
        for e in &self.examples {
            ids.extend(e.feature_ids.iter().map(|&v| v as f64));
        }
        let mut c = Container::new("dataset", meta);
        c.push("feature_ids", Matrix::from_vec(n, f, ids)?);
        c.push(
            "domains",
            Matrix::from_vec(n, 1, self.examples.iter().map(|e| e.domain_id as f64).collect())?,
        );
        c.push(
            "labels",
            Matrix::from_vec(n, 1, self.examples.iter().map(|e| f64::from(e.label)).collect())?,
        );
        Ok(c)
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        if c.kind != "dataset" {
            return Err(bad(format!("expected a dataset, found `{}`", c.kind)));
        }
        let fields: Vec<DatasetField> = c
            .meta
            .get("fields")
            .cloned()
            .ok_or_else(|| bad("missing fields".into()))?
            .try_into()
            .map_err(|e| bad(format!("fields: {e}")))?;
        let domain_names: Vec<String> = c
            .meta
            .get("domain_names")
            .cloned()
            .ok_or_else(|| bad("missing domain_names".into()))?
            .try_into()
            .map_err(|e| bad(format!("domain_names: {e}")))?;
        let get = |name: &str| c.tensor(name).ok_or_else(|| bad(format!("missing tensor `{name}`")));
        let ids = get("feature_ids")?;
        let domains = get("domains")?;
        let labels = get("labels")?;
        if ids.cols() != fields.len() || domains.rows() != ids.rows() || labels.rows() != ids.rows() {
            return Err(bad("tensor shapes disagree with the manifest".into()));
        }
        let examples = (0..ids.rows())
            .map(|r| Example {
                feature_ids: ids.row(r).iter().map(|&v| v as usize).collect(),
                domain_id: domains.as_slice()[r] as usize,
                label: labels.as_slice()[r] as u8,
            })
            .collect();
        Dataset::new(fields, domain_names, examples)
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?, path)
    }
}
