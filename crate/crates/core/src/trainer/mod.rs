//! Per-session SGD fine-tuning.

mod learner;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use learner::{BaseModel, IncrementalLearner, SessionTraining};

use crate::datamodel::{
    BaseTrainConfig, ClassId, ClassRegistry, LabeledExample, OptimizerConfig, RegularizerKind,
    WeightMatrix, WeightSnapshots,
};
use crate::linalg::{axpy, norm};
use crate::objectives::{NovelPrior, Objective, OldAnchors};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub loss_trace: Vec<f64>,
    pub converged: bool,
    pub examples_per_epoch: usize,
}

impl TrainReport {
    fn skipped() -> Self {
        TrainReport {
            epochs_run: 0,
            final_loss: 0.0,
            loss_trace: Vec::new(),
            converged: true,
            examples_per_epoch: 0,
        }
    }
}

/// Initial rows for the new classes: the mean support feature of each class,
/// rescaled to `base_norm` (the mean norm of the base rows).
///
/// A mean that vanishes relative to its features falls back to a random
/// Gaussian direction of norm `0.01 * base_norm`; that is the only use of
/// `rng`. A non-positive `base_norm` keeps the raw mean.
pub fn init_novel_weights<R: Rng + ?Sized>(
    support: &[LabeledExample],
    novel: &[ClassId],
    base_norm: f64,
    rng: &mut R,
) -> Result<BTreeMap<ClassId, Vec<f64>>> {
    let mut out = BTreeMap::new();
    let mut sorted = novel.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for c in sorted {
        let feats: Vec<&[f64]> = support
            .iter()
            .filter(|e| e.class == c)
            .map(|e| e.features())
            .collect();
        let Some(first) = feats.first() else {
            return Err(Error::MissingExample(c));
        };
        let dim = first.len();
        let mut mean = vec![0.0; dim];
        for f in &feats {
            axpy(1.0 / feats.len() as f64, f, &mut mean);
        }
        let largest = feats.iter().map(|f| norm(f)).fold(0.0, f64::max);
        let m = norm(&mean);
        let row = if m <= 1e-12 * largest || m == 0.0 {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let gn = norm(&g);
            let scale = 0.01 * base_norm.max(0.0) / gn;
            g.into_iter().map(|v| v * scale).collect()
        } else if base_norm > 0.0 {
            mean.into_iter().map(|v| v * base_norm / m).collect()
        } else {
            mean
        };
        out.insert(c, row);
    }
    Ok(out)
}

/// Minimizes `objective` over its trainable rows by plain SGD.
///
/// Sets of at most `batch_size` examples are used whole every epoch; larger
/// sets are reshuffled each epoch and cut into mini-batches. The epoch loss is
/// the mean total objective over the epoch's steps, each measured before its
/// update. Training stops once the epoch loss moves by less than
/// `convergence_tolerance` for `patience_epochs` consecutive epochs, or after
/// `max_epochs`.
pub fn fine_tune<R: Rng + ?Sized>(
    weights: &mut WeightMatrix,
    objective: &Objective,
    data: &[LabeledExample],
    opt: &OptimizerConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for &c in objective.trainable() {
        weights.row(c)?;
    }
    let batch_size = opt.batch_size.max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::new();
    let mut stable = 0usize;
    let mut converged = false;

    for epoch in 1..=opt.max_epochs {
        if data.len() > batch_size {
            order.shuffle(rng);
        }
        let mut epoch_total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| &data[i]).collect();
            let terms = objective.evaluate(weights, &batch)?;
            if !terms.total.is_finite() || !terms.gradient.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: terms.total,
                });
            }
            for (c, g) in terms.gradient.iter() {
                if let Some(row) = weights.get_mut(c) {
                    axpy(-opt.learning_rate, g, row);
                }
            }
            epoch_total += terms.total;
            steps += 1;
        }
        if !weights.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
        let loss = epoch_total / steps as f64;
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if (loss - prev).abs() < opt.convergence_tolerance {
                stable += 1;
            } else {
                stable = 0;
            }
        }
        trace.push(loss);
        if stable >= opt.patience_epochs {
            converged = true;
            break;
        }
    }

    Ok(TrainReport {
        epochs_run: trace.len(),
        final_loss: trace.last().copied().unwrap_or(0.0),
        loss_trace: trace,
        converged,
        examples_per_epoch: data.len(),
    })
}

/// Stores an immutable copy of the rows of C^(<=t) as snapshot `t`.
pub fn snapshot(
    weights: &WeightMatrix,
    registry: &ClassRegistry,
    session: usize,
    snapshots: &mut WeightSnapshots,
) -> Result<()> {
    let rows = weights.restrict(&registry.classes_up_to(session))?;
    snapshots.store(session, rows)
}

/// Fits base-class weights from zero with cross-entropy and the weight prior.
pub fn train_base<R: Rng + ?Sized>(
    data: &[LabeledExample],
    base: &[ClassId],
    dim: usize,
    config: &BaseTrainConfig,
    rng: &mut R,
) -> Result<(WeightMatrix, TrainReport)> {
    let mut weights = WeightMatrix::zeros(dim, base);
    let objective = Objective::assemble(
        RegularizerKind::FineTune,
        config.alpha,
        0.0,
        base,
        &[],
        OldAnchors::default(),
        NovelPrior::None,
    )?;
    let report = fine_tune(&mut weights, &objective, data, &config.optimizer, rng)?;
    Ok((weights, report))
}

pub(crate) fn skipped_report() -> TrainReport {
    TrainReport::skipped()
}
