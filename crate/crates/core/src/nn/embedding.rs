use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::param::{normal, ParamId, ParamStore};

/// Standard deviation of the normal initializer for embedding rows.
pub const EMBEDDING_INIT_STD: f64 = 0.01;

/// Lookup table mapping categorical ids to dense rows.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    name: String,
    vocab_size: usize,
    dim: usize,
    table: ParamId,
    cache: Option<Vec<usize>>,
}

impl EmbeddingTable {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        vocab_size: usize,
        dim: usize,
    ) -> Result<Self> {
        if vocab_size == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "embedding `{name}` needs positive vocab and dim, got {vocab_size}x{dim}"
            )));
        }
        let table = store.register(
            format!("{name}/table"),
            normal(rng, vocab_size, dim, EMBEDDING_INIT_STD),
        )?;
        Ok(Self {
            name: name.to_string(),
            vocab_size,
            dim,
            table,
            cache: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table(&self) -> ParamId {
        self.table
    }

    pub fn forward(&mut self, store: &ParamStore, ids: &[usize]) -> Result<Matrix> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.vocab_size) {
            return Err(Error::Index {
                what: format!("embedding `{}`", self.name),
                index: bad,
                bound: self.vocab_size,
            });
        }
        let out = store.value(self.table).gather_rows(ids);
        self.cache = Some(ids.to_vec());
        Ok(out)
    }

    /// Scatter-adds the upstream rows into the looked-up table rows.
    pub fn backward(&mut self, store: &mut ParamStore, upstream: &Matrix) -> Result<()> {
        let ids = self
            .cache
            .take()
            .ok_or_else(|| Error::State(format!("embedding `{}` backward without forward", self.name)))?;
        if upstream.shape() != (ids.len(), self.dim) {
            return Err(Error::Dimension {
                op: "embedding_backward",
                left: (ids.len(), self.dim),
                right: upstream.shape(),
            });
        }
        store.grad_mut(self.table).scatter_add_rows(&ids, upstream)
    }
}
