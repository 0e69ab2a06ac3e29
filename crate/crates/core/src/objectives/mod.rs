//! Fine-tuning objective: cross-entropy plus the weight prior, the old-class
//! anchor and one new-class regularizer, each with an analytic gradient.
//!
//! The engine minimizes
//!
//! ```text
//! CE + alpha * R_prior + R_old(beta-weighted) + gamma * R_new
//! ```
//!
//! which is the negation of the penalized log-likelihood.

mod gradient;
pub mod targets;
mod terms;

use std::borrow::Borrow;
use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use gradient::{Gradient, Penalty};
pub use targets::{
    fit_embedding_map, linear_map_targets, semantic_targets, semantic_weights, tempered_softmax,
    Targets,
};
pub use terms::{
    cross_entropy, r_new_fixed_target, r_new_subspace, r_old, r_prior, Anchor, OldAnchors,
};

use crate::datamodel::{ClassId, LabeledExample, RegularizerKind, WeightMatrix};
use crate::linalg::OrthonormalBasis;
use crate::{Error, Result};

/// What the new-class penalty pulls toward.
#[derive(Debug, Clone, PartialEq)]
pub enum NovelPrior {
    /// No new-class penalty.
    None,
    /// The span of the base weights; the target moves with the weights.
    Subspace(Arc<OrthonormalBasis>),
    /// Targets fixed for the whole session.
    Fixed(Targets),
}

impl NovelPrior {
    fn name(&self) -> &'static str {
        match self {
            NovelPrior::None => "none",
            NovelPrior::Subspace(_) => "subspace",
            NovelPrior::Fixed(_) => "fixed-target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub data_loss: f64,
    pub r_prior: f64,
    /// Already multiplied by the per-class beta.
    pub r_old: f64,
    pub r_new: f64,
    pub total: f64,
    pub gradient: Gradient,
}

/// A fully specified session objective.
#[derive(Debug, Clone)]
pub struct Objective {
    kind: RegularizerKind,
    alpha: f64,
    gamma: f64,
    active: Vec<ClassId>,
    novel: Vec<ClassId>,
    anchors: OldAnchors,
    prior: NovelPrior,
}

impl Objective {
    /// Validates and assembles the objective for one session.
    ///
    /// `active` is every class with a trainable row; `novel` the subset
    /// introduced this session. Anchored classes must be active and not novel.
    pub fn assemble(
        kind: RegularizerKind,
        alpha: f64,
        gamma: f64,
        active: &[ClassId],
        novel: &[ClassId],
        anchors: OldAnchors,
        prior: NovelPrior,
    ) -> Result<Objective> {
        let compatible = matches!(
            (kind, &prior),
            (RegularizerKind::FineTune, NovelPrior::None)
                | (RegularizerKind::Subspace, NovelPrior::Subspace(_))
                | (
                    RegularizerKind::Semantic
                        | RegularizerKind::Description
                        | RegularizerKind::LinearMap,
                    NovelPrior::Fixed(_)
                )
        );
        if !compatible {
            return Err(Error::ConflictingRegularizer {
                kind: kind.to_string(),
                prior: prior.name(),
            });
        }
        for (name, v) in [("alpha", alpha), ("gamma", gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        let active_set: BTreeSet<ClassId> = active.iter().copied().collect();
        let novel_set: BTreeSet<ClassId> = novel.iter().copied().collect();
        if let Some(&c) = novel_set.difference(&active_set).next() {
            return Err(Error::UnknownClass(c));
        }
        for c in anchors.classes() {
            if !active_set.contains(&c) || novel_set.contains(&c) {
                return Err(Error::UnknownClass(c));
            }
        }
        if let NovelPrior::Fixed(targets) = &prior {
            if let Some(&c) = novel_set.iter().find(|c| !targets.contains_key(c)) {
                return Err(Error::MissingTarget(c));
            }
        }
        let dims: BTreeSet<usize> = anchors
            .entries()
            .iter()
            .map(|a| a.target.len())
            .chain(match &prior {
                NovelPrior::Subspace(p) => vec![p.dim()],
                NovelPrior::Fixed(t) => t.values().map(Vec::len).collect(),
                NovelPrior::None => vec![],
            })
            .collect();
        if dims.len() > 1 {
            let mut it = dims.into_iter();
            return Err(Error::DimensionMismatch {
                expected: it.next().unwrap_or_default(),
                got: it.next().unwrap_or_default(),
            });
        }
        Ok(Objective {
            kind,
            alpha,
            gamma,
            active: active_set.into_iter().collect(),
            novel: novel_set.into_iter().collect(),
            anchors,
            prior,
        })
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    /// Classes whose rows are updated by training.
    pub fn trainable(&self) -> &[ClassId] {
        &self.active
    }

    pub fn novel(&self) -> &[ClassId] {
        &self.novel
    }

    pub fn prior(&self) -> &NovelPrior {
        &self.prior
    }

    /// New-class penalty before scaling by gamma.
    pub fn r_new(&self, weights: &WeightMatrix) -> Result<Penalty> {
        match &self.prior {
            NovelPrior::None => Ok(Penalty::default()),
            NovelPrior::Subspace(basis) => r_new_subspace(weights, &self.novel, basis),
            NovelPrior::Fixed(targets) => r_new_fixed_target(weights, &self.novel, targets),
        }
    }

    pub fn evaluate<B: Borrow<LabeledExample>>(
        &self,
        weights: &WeightMatrix,
        batch: &[B],
    ) -> Result<ObjectiveTerms> {
        let ce = cross_entropy(weights, batch, &self.active)?;
        let prior = r_prior(weights, &self.active)?;
        let old = r_old(weights, &self.anchors)?;
        let new = self.r_new(weights)?;

        let mut gradient = ce.gradient;
        gradient.accumulate(self.alpha, &prior.gradient);
        gradient.accumulate(1.0, &old.gradient);
        gradient.accumulate(self.gamma, &new.gradient);

        let total = ce.value + self.alpha * prior.value + old.value + self.gamma * new.value;
        Ok(ObjectiveTerms {
            data_loss: ce.value,
            r_prior: prior.value,
            r_old: old.value,
            r_new: new.value,
            total,
            gradient,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::FeatureVector;
    use crate::linalg::orthonormal_basis;

    fn ids(v: &[u32]) -> Vec<ClassId> {
        v.iter().copied().map(ClassId).collect()
    }

    fn setup() -> (WeightMatrix, Vec<LabeledExample>) {
        let mut w = WeightMatrix::new(2);
        w.insert(ClassId(0), vec![0.5, -0.2]).unwrap();
        w.insert(ClassId(1), vec![-0.1, 0.3]).unwrap();
        w.insert(ClassId(2), vec![0.7, 0.7]).unwrap();
        let batch = vec![
            LabeledExample::new(ClassId(2), FeatureVector::new(vec![1.0, 0.5]).unwrap()),
            LabeledExample::new(ClassId(2), FeatureVector::new(vec![0.2, 1.5]).unwrap()),
        ];
        (w, batch)
    }

    #[test]
    fn zero_coefficients_give_plain_cross_entropy() {
        let (w, batch) = setup();
        let anchors = OldAnchors::new(vec![Anchor {
            class: ClassId(0),
            target: vec![0.0, 0.0],
            beta: 0.0,
        }]);
        let obj = Objective::assemble(
            RegularizerKind::FineTune,
            0.0,
            0.0,
            &ids(&[0, 1, 2]),
            &ids(&[2]),
            anchors,
            NovelPrior::None,
        )
        .unwrap();
        let terms = obj.evaluate(&w, &batch).unwrap();
        let ce = cross_entropy(&w, &batch, &ids(&[0, 1, 2])).unwrap();
        assert_eq!(terms.total, ce.value);
        assert_eq!(terms.gradient, ce.gradient);
    }

    #[test]
    fn finetune_has_no_new_class_penalty() {
        let (w, batch) = setup();
        let obj = Objective::assemble(
            RegularizerKind::FineTune,
            0.1,
            5.0,
            &ids(&[0, 1, 2]),
            &ids(&[2]),
            OldAnchors::default(),
            NovelPrior::None,
        )
        .unwrap();
        assert_eq!(obj.evaluate(&w, &batch).unwrap().r_new, 0.0);
    }

    #[test]
    fn mismatched_kind_and_prior_conflict() {
        let basis = Arc::new(orthonormal_basis(&[vec![1.0, 0.0]]).unwrap());
        let err = Objective::assemble(
            RegularizerKind::FineTune,
            0.0,
            0.0,
            &ids(&[0, 1]),
            &ids(&[1]),
            OldAnchors::default(),
            NovelPrior::Subspace(basis.clone()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConflictingRegularizer { .. }));
        assert!(Objective::assemble(
            RegularizerKind::Semantic,
            0.0,
            0.0,
            &ids(&[0, 1]),
            &ids(&[1]),
            OldAnchors::default(),
            NovelPrior::Subspace(basis),
        )
        .is_err());
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let basis = Arc::new(orthonormal_basis(&[vec![1.0, 0.0, 0.0]]).unwrap());
        let anchors = OldAnchors::new(vec![Anchor {
            class: ClassId(0),
            target: vec![0.0, 0.0],
            beta: 0.2,
        }]);
        assert!(matches!(
            Objective::assemble(
                RegularizerKind::Subspace,
                0.0,
                1.0,
                &ids(&[0, 1]),
                &ids(&[1]),
                anchors,
                NovelPrior::Subspace(basis),
            ),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fixed_targets_must_cover_novel_classes() {
        assert!(matches!(
            Objective::assemble(
                RegularizerKind::LinearMap,
                0.0,
                1.0,
                &ids(&[0, 1]),
                &ids(&[1]),
                OldAnchors::default(),
                NovelPrior::Fixed(Targets::new()),
            ),
            Err(Error::MissingTarget(ClassId(1)))
        ));
    }
}
