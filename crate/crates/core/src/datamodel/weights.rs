use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ClassId, ClassRegistry};
use crate::{Error, Result};

/// One bias-free weight row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    dim: usize,
    rows: BTreeMap<ClassId, Vec<f64>>,
}

impl WeightMatrix {
    pub fn new(dim: usize) -> Self {
        WeightMatrix {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn zeros(dim: usize, classes: &[ClassId]) -> Self {
        let mut w = WeightMatrix::new(dim);
        for &c in classes {
            w.rows.insert(c, vec![0.0; dim]);
        }
        w
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Inserts or replaces the row for `class`.
    pub fn insert(&mut self, class: ClassId, row: Vec<f64>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        super::ensure_finite(&row, || format!("weight row for class {class}"))?;
        self.rows.insert(class, row);
        Ok(())
    }

    pub fn get(&self, class: ClassId) -> Option<&[f64]> {
        self.rows.get(&class).map(Vec::as_slice)
    }

    pub(crate) fn get_mut(&mut self, class: ClassId) -> Option<&mut Vec<f64>> {
        self.rows.get_mut(&class)
    }

    pub fn row(&self, class: ClassId) -> Result<&[f64]> {
        self.get(class).ok_or(Error::UnknownClass(class))
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.rows.contains_key(&class)
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.rows.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &[f64])> + '_ {
        self.rows.iter().map(|(&c, r)| (c, r.as_slice()))
    }

    /// Copy holding only `classes`; every one must be present.
    pub fn restrict(&self, classes: &[ClassId]) -> Result<WeightMatrix> {
        let mut out = WeightMatrix::new(self.dim);
        for &c in classes {
            out.rows.insert(c, self.row(c)?.to_vec());
        }
        Ok(out)
    }

    /// Mean Euclidean norm of the rows for `classes`.
    pub fn mean_norm(&self, classes: &[ClassId]) -> Result<f64> {
        if classes.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for &c in classes {
            total += self.row(c)?.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        Ok(total / classes.len() as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().flatten().all(|v| v.is_finite())
    }

    /// Hash of the exact bit patterns of every row.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.dim.hash(&mut h);
        for (c, row) in &self.rows {
            c.hash(&mut h);
            for v in row {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Frozen per-session copies of the weights, keyed by session index.
#[derive(Debug, Clone, Default)]
pub struct WeightSnapshots {
    snaps: BTreeMap<usize, Arc<WeightMatrix>>,
}

impl WeightSnapshots {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, session: usize, weights: WeightMatrix) -> Result<()> {
        if self.snaps.contains_key(&session) {
            return Err(Error::DuplicateSnapshot(session));
        }
        self.snaps.insert(session, Arc::new(weights));
        Ok(())
    }

    pub fn get(&self, session: usize) -> Option<&WeightMatrix> {
        self.snaps.get(&session).map(Arc::as_ref)
    }

    pub fn sessions(&self) -> impl Iterator<Item = usize> + '_ {
        self.snaps.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    /// Row of `class` at the end of the session that introduced it.
    pub fn anchor(&self, class: ClassId, registry: &ClassRegistry) -> Result<&[f64]> {
        let t = registry
            .session_of(class)
            .ok_or(Error::UnknownClass(class))?;
        self.get(t)
            .and_then(|w| w.get(class))
            .ok_or(Error::MissingSnapshot(class))
    }
}
