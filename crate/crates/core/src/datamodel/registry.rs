use std::collections::{BTreeMap, BTreeSet};

use super::ClassId;
use crate::{Error, Result};

/// Which classes were introduced in which session.
///
/// Session 0 holds the base classes; every later registration opens the next
/// session. Session class sets are pairwise disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassRegistry {
    sessions: Vec<Vec<ClassId>>,
    session_of: BTreeMap<ClassId, usize>,
}

impl ClassRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `new_classes` under the next session index and returns it.
    /// An empty set still opens a session.
    pub fn register_session<I>(&mut self, new_classes: I) -> Result<usize>
    where
        I: IntoIterator<Item = ClassId>,
    {
        let set: BTreeSet<ClassId> = new_classes.into_iter().collect();
        let overlap: Vec<ClassId> = set
            .iter()
            .filter(|c| self.session_of.contains_key(c))
            .copied()
            .collect();
        if !overlap.is_empty() {
            return Err(Error::Disjointness(overlap));
        }
        let t = self.sessions.len();
        for &c in &set {
            self.session_of.insert(c, t);
        }
        self.sessions.push(set.into_iter().collect());
        Ok(t)
    }

    pub fn num_sessions(&self) -> usize {
        self.sessions.len()
    }

    /// Index of the most recent session, if any.
    pub fn last_session(&self) -> Option<usize> {
        self.sessions.len().checked_sub(1)
    }

    pub fn session_of(&self, class: ClassId) -> Option<usize> {
        self.session_of.get(&class).copied()
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.session_of.contains_key(&class)
    }

    /// C^(t), ascending. Empty for sessions that do not exist.
    pub fn session_classes(&self, t: usize) -> &[ClassId] {
        self.sessions.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn base_classes(&self) -> &[ClassId] {
        self.session_classes(0)
    }

    /// C^(<=t), ascending.
    pub fn classes_up_to(&self, t: usize) -> Vec<ClassId> {
        self.collect_where(|s| s <= t)
    }

    /// C^(<t), ascending.
    pub fn classes_before(&self, t: usize) -> Vec<ClassId> {
        self.collect_where(|s| s < t)
    }

    /// Classes introduced after the base session.
    pub fn novel_classes(&self) -> Vec<ClassId> {
        self.collect_where(|s| s > 0)
    }

    pub fn all_classes(&self) -> Vec<ClassId> {
        self.session_of.keys().copied().collect()
    }

    /// Copy holding only sessions `0..=last`.
    pub fn truncated(&self, last: usize) -> ClassRegistry {
        let mut out = ClassRegistry::new();
        for classes in self.sessions.iter().take(last + 1) {
            out.register_session(classes.iter().copied())
                .expect("sessions of a valid registry are disjoint");
        }
        out
    }

    fn collect_where(&self, keep: impl Fn(usize) -> bool) -> Vec<ClassId> {
        self.session_of
            .iter()
            .filter(|(_, &s)| keep(s))
            .map(|(&c, _)| c)
            .collect()
    }
}
