use std::collections::BTreeMap;

use super::{ClassId, FeatureVector, LabeledExample, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
struct ClassPools {
    support: Vec<FeatureVector>,
    query: Vec<FeatureVector>,
}

/// Class-labeled feature vectors, each held in exactly one of the support or
/// query pool of its class.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    classes: BTreeMap<ClassId, ClassPools>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("feature dimension must be positive".into()));
        }
        Ok(FeatureStore {
            dim,
            classes: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, class: ClassId, split: Split, feature: FeatureVector) -> Result<()> {
        if feature.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: feature.dim(),
            });
        }
        let pools = self.classes.entry(class).or_default();
        match split {
            Split::Support => pools.support.push(feature),
            Split::Query => pools.query.push(feature),
        }
        Ok(())
    }

    /// Classes present in the store, ascending.
    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.keys().copied()
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.classes.contains_key(&class)
    }

    pub fn pool(&self, class: ClassId, split: Split) -> &[FeatureVector] {
        match self.classes.get(&class) {
            Some(p) => match split {
                Split::Support => &p.support,
                Split::Query => &p.query,
            },
            None => &[],
        }
    }

    /// All examples of `split` for the given classes, in class order then
    /// insertion order.
    pub fn examples(&self, classes: &[ClassId], split: Split) -> Vec<LabeledExample> {
        let mut sorted = classes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        sorted
            .into_iter()
            .flat_map(|c| {
                self.pool(c, split)
                    .iter()
                    .map(move |f| LabeledExample::new(c, f.clone()))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.classes
            .values()
            .map(|p| p.support.len() + p.query.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every class must have at least one query example.
    pub fn validate(&self) -> Result<()> {
        for (class, pools) in &self.classes {
            if pools.query.is_empty() {
                return Err(Error::Insufficient(format!(
                    "class {class} has no query examples"
                )));
            }
        }
        Ok(())
    }

    /// Records in a stable order: class ascending, support pool before query
    /// pool.
    pub fn records(&self) -> impl Iterator<Item = (ClassId, Split, &FeatureVector)> + '_ {
        self.classes.iter().flat_map(|(&c, p)| {
            p.support
                .iter()
                .map(move |f| (c, Split::Support, f))
                .chain(p.query.iter().map(move |f| (c, Split::Query, f)))
        })
    }
}
