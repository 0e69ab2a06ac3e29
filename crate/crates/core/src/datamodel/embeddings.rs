use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ClassId;
use crate::{Error, Result};

/// Where the class embeddings came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    #[default]
    Label,
    Description,
}

/// Semantic vector per class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    source: EmbeddingSource,
    rows: BTreeMap<ClassId, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, source: EmbeddingSource) -> Self {
        EmbeddingTable {
            dim,
            source,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn with_source(mut self, source: EmbeddingSource) -> Self {
        self.source = source;
        self
    }

    pub fn insert(&mut self, class: ClassId, e: Vec<f64>) -> Result<()> {
        if e.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: e.len(),
            });
        }
        super::ensure_finite(&e, || format!("embedding for class {class}"))?;
        self.rows.insert(class, e);
        Ok(())
    }

    pub fn get(&self, class: ClassId) -> Result<&[f64]> {
        self.rows
            .get(&class)
            .map(Vec::as_slice)
            .ok_or(Error::MissingEmbedding(class))
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.rows.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &[f64])> + '_ {
        self.rows.iter().map(|(&c, r)| (c, r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
