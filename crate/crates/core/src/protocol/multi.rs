use serde::{Deserialize, Serialize};

use super::metrics::{confusion_matrix, weighted_accuracy, ClassAccuracy, ConfusionMatrix};
use super::{rng_for, BASE_STREAM, RUN_STREAM};
use crate::datamodel::{
    ClassId, ClassRegistry, EmbeddingTable, FeatureStore, LabeledExample, RunConfig, Split,
    WeightMatrix,
};
use crate::trainer::{train_base, BaseModel, IncrementalLearner, TrainReport};
use crate::{Error, Result};

/// Feature pools plus the session layout of a multi-session run.
#[derive(Debug, Clone, Copy)]
pub struct SessionStream<'a> {
    pub store: &'a FeatureStore,
    pub registry: &'a ClassRegistry,
    pub embeddings: Option<&'a EmbeddingTable>,
}

impl<'a> SessionStream<'a> {
    pub fn new(
        store: &'a FeatureStore,
        registry: &'a ClassRegistry,
        embeddings: Option<&'a EmbeddingTable>,
    ) -> Self {
        SessionStream {
            store,
            registry,
            embeddings,
        }
    }

    /// Every registered class needs queries, and the store may not hold
    /// queries for classes the stream never introduces.
    pub fn validate(&self) -> Result<()> {
        if self.registry.num_sessions() == 0 {
            return Err(Error::Insufficient("stream has no base session".into()));
        }
        for c in self.store.classes() {
            if !self.store.pool(c, Split::Query).is_empty() && !self.registry.contains(c) {
                return Err(Error::UnknownClass(c));
            }
        }
        for c in self.registry.all_classes() {
            if self.store.pool(c, Split::Query).is_empty() {
                return Err(Error::Insufficient(format!("class {c} has no query examples")));
            }
        }
        Ok(())
    }

    pub fn support(&self, t: usize) -> Vec<LabeledExample> {
        self.store
            .examples(self.registry.session_classes(t), Split::Support)
    }

    /// Queries over every class seen up to session `t`.
    pub fn queries(&self, t: usize) -> Vec<LabeledExample> {
        self.store
            .examples(&self.registry.classes_up_to(t), Split::Query)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: usize,
    pub n_classes: usize,
    pub n_base: usize,
    pub n_novel: usize,
    pub acc_base: f64,
    /// `None` in session 0.
    pub acc_novel: Option<f64>,
    pub acc_weighted: f64,
    /// Share of all predictions that fall in this session's classes.
    pub recency_bias: Option<f64>,
    pub per_class: Vec<ClassAccuracy>,
    pub confusion: ConfusionMatrix,
    pub training: Option<TrainReport>,
}

/// Scores `weights` on `queries` over the classes of sessions `0..=t`.
pub fn evaluate_session(
    weights: &WeightMatrix,
    registry: &ClassRegistry,
    t: usize,
    queries: &[LabeledExample],
) -> Result<SessionResult> {
    if t >= registry.num_sessions() {
        return Err(Error::InvalidConfig(format!("session {t} is not registered")));
    }
    let active = registry.classes_up_to(t);
    if let Some(q) = queries.iter().find(|q| active.binary_search(&q.class).is_err()) {
        return Err(Error::UnknownClass(q.class));
    }
    let confusion = confusion_matrix(weights, queries, &active)?;
    let base = registry.base_classes();
    let novel: Vec<ClassId> = active
        .iter()
        .copied()
        .filter(|c| registry.session_of(*c) != Some(0))
        .collect();

    let acc_base = confusion.group_accuracy(base).unwrap_or(0.0);
    let acc_novel = if novel.is_empty() {
        None
    } else {
        Some(confusion.group_accuracy(&novel).unwrap_or(0.0))
    };
    let acc_weighted = weighted_accuracy(acc_base, base.len(), acc_novel.unwrap_or(0.0), novel.len());
    let recency_bias = (t > 0).then(|| confusion.prediction_share(registry.session_classes(t)));
    Ok(SessionResult {
        session: t,
        n_classes: active.len(),
        n_base: base.len(),
        n_novel: novel.len(),
        acc_base,
        acc_novel,
        acc_weighted,
        recency_bias,
        per_class: confusion.per_class(),
        confusion,
        training: None,
    })
}

/// Trains base weights on the support split of the base classes.
pub fn fit_base_weights(
    store: &FeatureStore,
    registry: &ClassRegistry,
    config: &RunConfig,
) -> Result<(WeightMatrix, TrainReport)> {
    let base = registry.base_classes();
    let data = store.examples(base, Split::Support);
    let mut rng = rng_for(config.protocol.seed, BASE_STREAM);
    train_base(&data, base, store.dim(), &config.base_training, &mut rng)
}

/// Evaluates the base weights, then learns and evaluates each incremental
/// session in order. Returns one record per session.
pub fn run_multi_session(
    stream: &SessionStream<'_>,
    base_weights: &WeightMatrix,
    config: &RunConfig,
) -> Result<Vec<SessionResult>> {
    stream.validate()?;
    let registry = stream.registry;
    let base = BaseModel::new(base_weights, registry.base_classes())?;
    let rng = rng_for(config.protocol.seed, RUN_STREAM);
    let mut learner =
        IncrementalLearner::new(config, &base, stream.embeddings, &stream.support(0), rng)?;

    let mut results = Vec::with_capacity(registry.num_sessions());
    results.push(evaluate_session(learner.weights(), learner.registry(), 0, &stream.queries(0))?);
    for t in 1..registry.num_sessions() {
        let training = learner.learn_session(registry.session_classes(t), &stream.support(t))?;
        let mut result = evaluate_session(learner.weights(), learner.registry(), t, &stream.queries(t))?;
        log::info!(
            "session {t}: base {:.2} novel {:.2} weighted {:.2}",
            result.acc_base,
            result.acc_novel.unwrap_or(0.0),
            result.acc_weighted
        );
        result.training = Some(training.report);
        results.push(result);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::FeatureVector;

    fn axis_store(n: u32) -> FeatureStore {
        let mut s = FeatureStore::new(n as usize).unwrap();
        for c in 0..n {
            let mut x = vec![0.0; n as usize];
            x[c as usize] = 1.0;
            for split in [Split::Support, Split::Query] {
                s.push(ClassId(c), split, FeatureVector::new(x.clone()).unwrap())
                    .unwrap();
            }
        }
        s
    }

    #[test]
    fn perfect_classifier_scores_100_everywhere() {
        let store = axis_store(4);
        let mut reg = ClassRegistry::new();
        reg.register_session([ClassId(0), ClassId(1)]).unwrap();
        reg.register_session([ClassId(2), ClassId(3)]).unwrap();
        let mut w = WeightMatrix::new(4);
        for c in 0..4u32 {
            let mut r = vec![0.0; 4];
            r[c as usize] = 10.0;
            w.insert(ClassId(c), r).unwrap();
        }
        let q = SessionStream::new(&store, &reg, None).queries(1);
        let r = evaluate_session(&w, &reg, 1, &q).unwrap();
        assert_eq!((r.acc_base, r.acc_novel, r.acc_weighted), (100.0, Some(100.0), 100.0));
        assert_eq!(r.confusion.total(), 4);
        for pc in &r.per_class {
            assert_eq!(pc.total, r.confusion.row_sum(pc.class).unwrap());
        }
    }

    #[test]
    fn unseen_query_class_is_rejected() {
        let store = axis_store(3);
        let mut reg = ClassRegistry::new();
        reg.register_session([ClassId(0), ClassId(1)]).unwrap();
        let w = WeightMatrix::zeros(3, &[ClassId(0), ClassId(1)]);
        let q = store.examples(&[ClassId(2)], Split::Query);
        assert!(matches!(
            evaluate_session(&w, &reg, 0, &q),
            Err(Error::UnknownClass(ClassId(2)))
        ));
        assert!(SessionStream::new(&store, &reg, None).validate().is_err());
    }

    #[test]
    fn session_count_matches_stream() {
        let store = axis_store(6);
        let mut reg = ClassRegistry::new();
        reg.register_session([ClassId(0), ClassId(1), ClassId(2)]).unwrap();
        reg.register_session([ClassId(3)]).unwrap();
        reg.register_session([ClassId(4), ClassId(5)]).unwrap();
        let cfg = RunConfig::default();
        let (w, _) = fit_base_weights(&store, &reg, &cfg).unwrap();
        let stream = SessionStream::new(&store, &reg, None);
        let res = run_multi_session(&stream, &w, &cfg).unwrap();
        assert_eq!(res.len(), 3);
        assert_eq!(res[2].n_classes, 6);
        assert_eq!(res[0].acc_novel, None);
        assert!(res[1].training.is_some());
    }
}
