use std::borrow::Borrow;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datamodel::{ClassId, LabeledExample, WeightMatrix};
use crate::linalg::dot;
use crate::{Error, Result};

/// Argmax of `eta_c . x` over `active` (ascending); ties go to the lowest id.
pub fn predict(weights: &WeightMatrix, active: &[ClassId], x: &[f64]) -> Result<ClassId> {
    let mut best: Option<(ClassId, f64)> = None;
    for &c in active {
        let row = weights.row(c)?;
        if row.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: row.len(),
                got: x.len(),
            });
        }
        let s = dot(row, x);
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((c, s)),
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::Insufficient("no active classes to predict from".into()))
}

/// Fraction of `correct` over `total`, in percent.
pub fn percent(correct: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| 100.0 * correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: ClassId,
    pub correct: u64,
    pub total: u64,
    /// Percent; `None` for a class with no queries.
    pub accuracy: Option<f64>,
}

/// Query counts indexed by (gold, predicted) over a fixed ascending class
/// list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<ClassId>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[ClassId]) -> Self {
        let mut classes = classes.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn index_of(&self, class: ClassId) -> Result<usize> {
        self.classes
            .binary_search(&class)
            .map_err(|_| Error::UnknownClass(class))
    }

    pub fn record(&mut self, gold: ClassId, predicted: ClassId) -> Result<()> {
        let (g, p) = (self.index_of(gold)?, self.index_of(predicted)?);
        self.counts[g][p] += 1;
        Ok(())
    }

    pub fn get(&self, gold: ClassId, predicted: ClassId) -> Result<u64> {
        Ok(self.counts[self.index_of(gold)?][self.index_of(predicted)?])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, gold: ClassId) -> Result<u64> {
        Ok(self.counts[self.index_of(gold)?].iter().sum())
    }

    /// Sample-level accuracy over queries whose gold class is in `group`.
    pub fn group_accuracy(&self, group: &[ClassId]) -> Option<f64> {
        let (mut correct, mut total) = (0, 0);
        for &c in group {
            if let Ok(i) = self.index_of(c) {
                correct += self.counts[i][i];
                total += self.counts[i].iter().sum::<u64>();
            }
        }
        percent(correct, total)
    }

    pub fn per_class(&self) -> Vec<ClassAccuracy> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, &class)| {
                let total = self.counts[i].iter().sum();
                let correct = self.counts[i][i];
                ClassAccuracy {
                    class,
                    correct,
                    total,
                    accuracy: percent(correct, total),
                }
            })
            .collect()
    }

    /// Share of all predictions that land in `predicted` classes.
    pub fn prediction_share(&self, predicted: &[ClassId]) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let cols: BTreeSet<usize> = predicted.iter().filter_map(|&c| self.index_of(c).ok()).collect();
        let hits: u64 = self
            .counts
            .iter()
            .map(|row| cols.iter().map(|&j| row[j]).sum::<u64>())
            .sum();
        hits as f64 / total as f64
    }
}

/// Confusion counts of argmax predictions over `active` for `queries`.
pub fn confusion_matrix<B: Borrow<LabeledExample>>(
    weights: &WeightMatrix,
    queries: &[B],
    active: &[ClassId],
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(active);
    for q in queries {
        let q = q.borrow();
        m.index_of(q.class)?;
        let pred = predict(weights, m.classes(), q.features())?;
        m.record(q.class, pred)?;
    }
    Ok(m)
}

/// Group accuracies combined in proportion to the number of classes in each
/// group.
pub fn weighted_accuracy(acc_base: f64, n_base: usize, acc_novel: f64, n_novel: usize) -> f64 {
    let n = (n_base + n_novel) as f64;
    if n == 0.0 {
        return 0.0;
    }
    (n_base as f64 * acc_base + n_novel as f64 * acc_novel) / n
}

/// Mean of the joint-minus-individual accuracy gaps of the two groups.
pub fn delta(base_joint: f64, base_individual: f64, novel_joint: f64, novel_individual: f64) -> f64 {
    0.5 * ((base_joint - base_individual) + (novel_joint - novel_individual))
}

/// Mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

pub fn mean_ci95(values: &[f64]) -> MeanCi {
    let n = values.len();
    if n == 0 {
        return MeanCi {
            mean: 0.0,
            ci95: 0.0,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci95 = if n > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        1.96 * (var / n as f64).sqrt()
    } else {
        0.0
    };
    MeanCi { mean, ci95, n }
}
