use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::ClassId;
use crate::linalg::axpy;

/// Per-class gradient rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    rows: BTreeMap<ClassId, Vec<f64>>,
}

impl Gradient {
    pub fn new() -> Self {
        Self::default()
    }

    /// `grad[class] += scale * v`
    pub fn add(&mut self, class: ClassId, scale: f64, v: &[f64]) {
        let row = self
            .rows
            .entry(class)
            .or_insert_with(|| vec![0.0; v.len()]);
        axpy(scale, v, row);
    }

    /// `self += scale * other`
    pub fn accumulate(&mut self, scale: f64, other: &Gradient) {
        for (&c, row) in &other.rows {
            self.add(c, scale, row);
        }
    }

    pub fn get(&self, class: ClassId) -> Option<&[f64]> {
        self.rows.get(&class).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &[f64])> + '_ {
        self.rows.iter().map(|(&c, r)| (c, r.as_slice()))
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.rows.keys().copied()
    }

    pub fn norm(&self) -> f64 {
        self.rows.values().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().flatten().all(|v| v.is_finite())
    }
}

/// Value and gradient of one objective component.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub gradient: Gradient,
}
