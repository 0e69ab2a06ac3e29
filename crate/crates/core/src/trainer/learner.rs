use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fine_tune, init_novel_weights, skipped_report, snapshot, TrainReport};
use crate::datamodel::{
    ClassId, ClassRegistry, EmbeddingTable, LabeledExample, MemoryBuffer, RegularizerKind,
    RunConfig, WeightMatrix, WeightSnapshots,
};
use crate::linalg::{orthonormal_basis, OrthonormalBasis};
use crate::objectives::{
    linear_map_targets, semantic_targets, NovelPrior, Objective, OldAnchors,
};
use crate::{Error, Result};

/// Session-0 classifier plus what every later session derives from it.
#[derive(Debug, Clone)]
pub struct BaseModel {
    classes: Vec<ClassId>,
    weights: WeightMatrix,
    basis: Option<Arc<OrthonormalBasis>>,
    mean_norm: f64,
}

impl BaseModel {
    /// Rows of `weights` for `classes` become snapshot 0.
    pub fn new(weights: &WeightMatrix, classes: &[ClassId]) -> Result<BaseModel> {
        let mut classes = classes.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let weights = weights.restrict(&classes)?;
        let rows: Vec<&[f64]> = weights.iter().map(|(_, r)| r).collect();
        // all-zero base rows have no span; only the subspace prior needs one
        let basis = match orthonormal_basis(&rows) {
            Ok(b) => Some(Arc::new(b)),
            Err(Error::DegenerateBasis(_)) => None,
            Err(e) => return Err(e),
        };
        let mean_norm = weights.mean_norm(&classes)?;
        Ok(BaseModel {
            classes,
            weights,
            basis,
            mean_norm,
        })
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn basis(&self) -> Result<&Arc<OrthonormalBasis>> {
        self.basis
            .as_ref()
            .ok_or(Error::DegenerateBasis("base weights are all zero"))
    }

    pub fn mean_norm(&self) -> f64 {
        self.mean_norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTraining {
    pub session: usize,
    pub report: TrainReport,
}

/// Carries one run through its incremental sessions: owns the live weights,
/// snapshots, registry, memory buffer and the run's random stream.
pub struct IncrementalLearner<'a> {
    config: &'a RunConfig,
    base: &'a BaseModel,
    embeddings: Option<&'a EmbeddingTable>,
    registry: ClassRegistry,
    weights: WeightMatrix,
    snapshots: WeightSnapshots,
    memory: MemoryBuffer,
    rng: ChaCha8Rng,
}

impl<'a> IncrementalLearner<'a> {
    /// Starts after session 0. `base_support` seeds the memory buffer with
    /// one example per base class when memory is enabled.
    pub fn new(
        config: &'a RunConfig,
        base: &'a BaseModel,
        embeddings: Option<&'a EmbeddingTable>,
        base_support: &[LabeledExample],
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        if config.regularizer.kind.needs_embeddings() && embeddings.is_none() {
            return Err(Error::InvalidConfig(format!(
                "regularizer {} needs class embeddings",
                config.regularizer.kind
            )));
        }
        let mut registry = ClassRegistry::new();
        registry.register_session(base.classes().iter().copied())?;
        let mut snapshots = WeightSnapshots::new();
        snapshots.store(0, base.weights().clone())?;
        let mut memory = MemoryBuffer::new();
        if config.regularizer.memory {
            memory.update(base.classes(), base_support, &mut rng)?;
        }
        Ok(IncrementalLearner {
            config,
            base,
            embeddings,
            registry,
            weights: base.weights().clone(),
            snapshots,
            memory,
            rng,
        })
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn snapshots(&self) -> &WeightSnapshots {
        &self.snapshots
    }

    pub fn memory(&self) -> &MemoryBuffer {
        &self.memory
    }

    /// Regularization prior for this session's new classes.
    pub fn novel_prior(&self, novel: &[ClassId]) -> Result<NovelPrior> {
        let reg = &self.config.regularizer;
        let base = self.base;
        Ok(match reg.kind {
            RegularizerKind::FineTune => NovelPrior::None,
            RegularizerKind::Subspace => NovelPrior::Subspace(base.basis()?.clone()),
            RegularizerKind::Semantic | RegularizerKind::Description => {
                let emb = self.embeddings.expect("checked in new");
                NovelPrior::Fixed(semantic_targets(
                    emb,
                    novel,
                    base.classes(),
                    base.weights(),
                    reg.tau,
                )?)
            }
            RegularizerKind::LinearMap => {
                let emb = self.embeddings.expect("checked in new");
                NovelPrior::Fixed(linear_map_targets(
                    emb,
                    novel,
                    base.classes(),
                    base.weights(),
                    reg.ridge,
                )?)
            }
        })
    }

    /// Registers `novel`, fine-tunes on `support` (plus memory), snapshots
    /// the result and then adds the new classes to memory.
    pub fn learn_session(
        &mut self,
        novel: &[ClassId],
        support: &[LabeledExample],
    ) -> Result<SessionTraining> {
        if let Some(ex) = support.iter().find(|e| !novel.contains(&e.class)) {
            return Err(Error::UnknownClass(ex.class));
        }
        let t = self.registry.register_session(novel.iter().copied())?;
        let novel = self.registry.session_classes(t).to_vec();
        let reg = &self.config.regularizer;

        let init = init_novel_weights(support, &novel, self.base.mean_norm(), &mut self.rng)?;
        for (c, row) in init {
            self.weights.insert(c, row)?;
        }
        let prior = self.novel_prior(&novel)?;
        let anchors = OldAnchors::from_snapshots(
            &self.snapshots,
            &self.registry,
            t,
            reg.beta_base,
            reg.beta_prev_novel,
        )?;
        let active = self.registry.classes_up_to(t);
        let objective = Objective::assemble(
            reg.kind, reg.alpha, reg.gamma, &active, &novel, anchors, prior,
        )?;

        let mut data = support.to_vec();
        if reg.memory {
            data.extend_from_slice(self.memory.examples());
        }
        let report = if data.is_empty() {
            skipped_report()
        } else {
            fine_tune(
                &mut self.weights,
                &objective,
                &data,
                &self.config.optimizer,
                &mut self.rng,
            )?
        };
        log::debug!(
            "session {t}: {} epochs, loss {:.6}, converged {}",
            report.epochs_run,
            report.final_loss,
            report.converged
        );

        snapshot(&self.weights, &self.registry, t, &mut self.snapshots)?;
        if reg.memory {
            self.memory.update(&novel, support, &mut self.rng)?;
        }
        Ok(SessionTraining { session: t, report })
    }
}
