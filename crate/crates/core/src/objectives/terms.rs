use std::borrow::Borrow;
use std::collections::BTreeMap;

use super::{Gradient, Penalty};
use crate::datamodel::{ClassId, ClassRegistry, LabeledExample, WeightMatrix, WeightSnapshots};
use crate::linalg::{dot, OrthonormalBasis};
use crate::{Error, Result};

fn check_row_dim(weights: &WeightMatrix, got: usize) -> Result<()> {
    if got != weights.dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.dim(),
            got,
        });
    }
    Ok(())
}

/// Mean softmax cross-entropy of `batch` over the `active` classes (sorted
/// ascending), with bias-free logits `eta_c . x`.
///
/// The gradient has a row for every active class.
pub fn cross_entropy<B: Borrow<LabeledExample>>(
    weights: &WeightMatrix,
    batch: &[B],
    active: &[ClassId],
) -> Result<Penalty> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let rows: Vec<&[f64]> = active
        .iter()
        .map(|&c| weights.row(c))
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut grads = vec![vec![0.0; weights.dim()]; active.len()];
    let mut logits = vec![0.0; active.len()];
    let mut value = 0.0;

    for ex in batch {
        let ex = ex.borrow();
        let x = ex.features();
        check_row_dim(weights, x.len())?;
        let y = active
            .binary_search(&ex.class)
            .map_err(|_| Error::UnknownClass(ex.class))?;
        for (z, w) in logits.iter_mut().zip(&rows) {
            *z = dot(w, x);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        value += lse - logits[y];
        for (k, (z, g)) in logits.iter().zip(grads.iter_mut()).enumerate() {
            let p = (z - lse).exp();
            let coeff = (p - if k == y { 1.0 } else { 0.0 }) / n;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += coeff * xi;
            }
        }
    }

    let mut gradient = Gradient::new();
    for (&c, g) in active.iter().zip(&grads) {
        gradient.add(c, 1.0, g);
    }
    Ok(Penalty {
        value: value / n,
        gradient,
    })
}

/// `sum_c |eta_c|^2` over `classes`.
pub fn r_prior(weights: &WeightMatrix, classes: &[ClassId]) -> Result<Penalty> {
    let mut out = Penalty::default();
    for &c in classes {
        let w = weights.row(c)?;
        out.value += dot(w, w);
        out.gradient.add(c, 2.0, w);
    }
    Ok(out)
}

/// One old class pulled toward its end-of-session value.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub class: ClassId,
    pub target: Vec<f64>,
    pub beta: f64,
}

/// Anchors for every class learned before the current session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OldAnchors {
    entries: Vec<Anchor>,
}

impl OldAnchors {
    pub fn new(entries: Vec<Anchor>) -> Self {
        OldAnchors { entries }
    }

    /// For session `t`: each class of session `t' < t` is anchored to its row
    /// in snapshot `t'`, with `beta_base` for `t' = 0` and `beta_prev_novel`
    /// otherwise.
    pub fn from_snapshots(
        snapshots: &WeightSnapshots,
        registry: &ClassRegistry,
        session: usize,
        beta_base: f64,
        beta_prev_novel: f64,
    ) -> Result<OldAnchors> {
        let mut entries = Vec::new();
        for t in 0..session {
            let beta = if t == 0 { beta_base } else { beta_prev_novel };
            for &class in registry.session_classes(t) {
                let target = snapshots
                    .get(t)
                    .and_then(|w| w.get(class))
                    .ok_or(Error::MissingSnapshot(class))?
                    .to_vec();
                entries.push(Anchor {
                    class,
                    target,
                    beta,
                });
            }
        }
        Ok(OldAnchors { entries })
    }

    pub fn entries(&self) -> &[Anchor] {
        &self.entries
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.entries.iter().map(|a| a.class)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `sum beta |eta_c^{t'} - eta_c|^2`; the value is already beta-weighted.
pub fn r_old(weights: &WeightMatrix, anchors: &OldAnchors) -> Result<Penalty> {
    let mut out = Penalty::default();
    for a in anchors.entries() {
        let w = weights.row(a.class)?;
        check_row_dim(weights, a.target.len())?;
        let diff: Vec<f64> = w.iter().zip(&a.target).map(|(x, t)| x - t).collect();
        out.value += a.beta * dot(&diff, &diff);
        out.gradient.add(a.class, 2.0 * a.beta, &diff);
    }
    Ok(out)
}

/// `sum_c |eta_c - P P^T eta_c|^2` over the novel classes.
///
/// `I - P P^T` is symmetric and idempotent, so the gradient `2 (I - P P^T) eta`
/// is the same whether the projection is held fixed or differentiated.
pub fn r_new_subspace(
    weights: &WeightMatrix,
    novel: &[ClassId],
    basis: &OrthonormalBasis,
) -> Result<Penalty> {
    let mut out = Penalty::default();
    for &c in novel {
        let r = basis.residual(weights.row(c)?)?;
        out.value += dot(&r, &r);
        out.gradient.add(c, 2.0, &r);
    }
    Ok(out)
}

/// `sum_c |eta_c - target_c|^2` with targets held constant.
pub fn r_new_fixed_target(
    weights: &WeightMatrix,
    novel: &[ClassId],
    targets: &BTreeMap<ClassId, Vec<f64>>,
) -> Result<Penalty> {
    let mut out = Penalty::default();
    for &c in novel {
        let w = weights.row(c)?;
        let t = targets.get(&c).ok_or(Error::MissingTarget(c))?;
        check_row_dim(weights, t.len())?;
        let diff: Vec<f64> = w.iter().zip(t).map(|(x, y)| x - y).collect();
        out.value += dot(&diff, &diff);
        out.gradient.add(c, 2.0, &diff);
    }
    Ok(out)
}
