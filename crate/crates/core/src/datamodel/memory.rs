use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::{ClassId, LabeledExample};
use crate::{Error, Result};

/// One retained support example per previously learned class.
///
/// Entries are never replaced: the example picked for a class in the session
/// that introduced it is replayed in every later session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryBuffer {
    examples: Vec<LabeledExample>,
    classes: BTreeSet<ClassId>,
}

impl MemoryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.classes.contains(&class)
    }

    /// Appends one uniformly chosen example for each of `classes` (taken from
    /// `support`), visiting classes in ascending order.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        classes: &[ClassId],
        support: &[LabeledExample],
        rng: &mut R,
    ) -> Result<()> {
        let mut by_class: BTreeMap<ClassId, Vec<&LabeledExample>> = BTreeMap::new();
        for ex in support {
            by_class.entry(ex.class).or_default().push(ex);
        }
        let wanted: BTreeSet<ClassId> = classes.iter().copied().collect();
        for &c in &wanted {
            if by_class.get(&c).is_none_or(|v| v.is_empty()) {
                return Err(Error::MissingExample(c));
            }
        }
        for c in wanted {
            if self.classes.contains(&c) {
                continue;
            }
            let pool = &by_class[&c];
            let pick = rng.random_range(0..pool.len());
            self.examples.push(pool[pick].clone());
            self.classes.insert(c);
        }
        Ok(())
    }
}
