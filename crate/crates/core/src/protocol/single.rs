use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion_matrix, delta, mean_ci95, MeanCi};
use super::{rng_for, EPISODE_STREAM};
use crate::datamodel::{ClassId, EmbeddingTable, FeatureStore, LabeledExample, RunConfig, Split};
use crate::trainer::{BaseModel, IncrementalLearner};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    /// Total queries; half are drawn from the base group, the rest from the
    /// episode's novel classes.
    pub queries: usize,
}

impl EpisodeSpec {
    pub fn from_config(config: &RunConfig) -> Self {
        EpisodeSpec {
            n_way: config.protocol.n_way,
            k_shot: config.protocol.shots,
            queries: config.protocol.queries_per_episode,
        }
    }

    fn base_queries(&self) -> usize {
        self.queries / 2
    }

    fn novel_queries(&self) -> usize {
        self.queries - self.base_queries()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub novel: Vec<ClassId>,
    pub support: Vec<LabeledExample>,
    pub queries: Vec<LabeledExample>,
}

struct Pools<'a> {
    store: &'a FeatureStore,
    base_queries: Vec<(ClassId, usize)>,
    candidates: Vec<ClassId>,
}

impl<'a> Pools<'a> {
    fn new(
        store: &'a FeatureStore,
        base: &[ClassId],
        novel_pool: &[ClassId],
        spec: &EpisodeSpec,
    ) -> Result<Self> {
        if spec.n_way == 0 || spec.k_shot == 0 || spec.queries < 2 {
            return Err(Error::InvalidConfig(
                "episodes need n_way, k_shot >= 1 and at least 2 queries".into(),
            ));
        }
        let mut base_queries = Vec::new();
        for &c in base {
            for i in 0..store.pool(c, Split::Query).len() {
                base_queries.push((c, i));
            }
        }
        if base_queries.len() < spec.base_queries() {
            return Err(Error::Insufficient(format!(
                "{} base queries available, {} needed",
                base_queries.len(),
                spec.base_queries()
            )));
        }
        let mut candidates: Vec<ClassId> = novel_pool
            .iter()
            .copied()
            .filter(|&c| {
                store.pool(c, Split::Support).len() >= spec.k_shot
                    && !store.pool(c, Split::Query).is_empty()
            })
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        if candidates.len() < spec.n_way {
            return Err(Error::Insufficient(format!(
                "{} novel classes have {} support examples and a query, {} needed",
                candidates.len(),
                spec.k_shot,
                spec.n_way
            )));
        }
        Ok(Pools {
            store,
            base_queries,
            candidates,
        })
    }

    fn example(&self, class: ClassId, split: Split, i: usize) -> LabeledExample {
        LabeledExample::new(class, self.store.pool(class, split)[i].clone())
    }

    fn sample<R: Rng + ?Sized>(&self, spec: &EpisodeSpec, rng: &mut R) -> Result<Episode> {
        let mut novel: Vec<ClassId> = self
            .candidates
            .choose_multiple(rng, spec.n_way)
            .copied()
            .collect();
        novel.sort_unstable();

        let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
        for &c in &novel {
            let n = self.store.pool(c, Split::Support).len();
            for i in index::sample(rng, n, spec.k_shot) {
                support.push(self.example(c, Split::Support, i));
            }
        }

        let novel_queries: Vec<(ClassId, usize)> = novel
            .iter()
            .flat_map(|&c| (0..self.store.pool(c, Split::Query).len()).map(move |i| (c, i)))
            .collect();
        if novel_queries.len() < spec.novel_queries() {
            return Err(Error::Insufficient(format!(
                "episode novel classes have {} queries, {} needed",
                novel_queries.len(),
                spec.novel_queries()
            )));
        }
        let mut queries = Vec::with_capacity(spec.queries);
        for i in index::sample(rng, self.base_queries.len(), spec.base_queries()) {
            let (c, j) = self.base_queries[i];
            queries.push(self.example(c, Split::Query, j));
        }
        for i in index::sample(rng, novel_queries.len(), spec.novel_queries()) {
            let (c, j) = novel_queries[i];
            queries.push(self.example(c, Split::Query, j));
        }
        queries.shuffle(rng);
        Ok(Episode {
            novel,
            support,
            queries,
        })
    }
}

/// Draws `n_way` novel classes from `novel_pool`, `k_shot` support examples
/// for each, and a query set split evenly between the base group and the
/// drawn classes (without replacement within each group).
pub fn sample_episode<R: Rng + ?Sized>(
    store: &FeatureStore,
    base: &[ClassId],
    novel_pool: &[ClassId],
    spec: &EpisodeSpec,
    rng: &mut R,
) -> Result<Episode> {
    Pools::new(store, base, novel_pool, spec)?.sample(spec, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub index: usize,
    pub base_joint: f64,
    pub base_individual: f64,
    pub novel_joint: f64,
    pub novel_individual: f64,
    /// Average of the two joint group accuracies.
    pub mean_joint: f64,
    pub delta: f64,
}

/// Joint accuracies score every query against base and novel labels
/// together; individual accuracies score each group against its own labels.
pub fn evaluate_episode(
    index: usize,
    weights: &crate::datamodel::WeightMatrix,
    base: &[ClassId],
    novel: &[ClassId],
    queries: &[LabeledExample],
) -> Result<EpisodeResult> {
    let mut joint: Vec<ClassId> = base.iter().chain(novel).copied().collect();
    joint.sort_unstable();
    let (base_q, novel_q): (Vec<&LabeledExample>, Vec<&LabeledExample>) =
        queries.iter().partition(|q| base.contains(&q.class));

    let all = confusion_matrix(weights, queries, &joint)?;
    let group = |m: &super::ConfusionMatrix, g: &[ClassId]| {
        m.group_accuracy(g)
            .ok_or_else(|| Error::Insufficient(format!("episode {index} has an empty query group")))
    };
    let base_joint = group(&all, base)?;
    let novel_joint = group(&all, novel)?;
    let base_individual = group(&confusion_matrix(weights, &base_q, base)?, base)?;
    let novel_individual = group(&confusion_matrix(weights, &novel_q, novel)?, novel)?;
    Ok(EpisodeResult {
        index,
        base_joint,
        base_individual,
        novel_joint,
        novel_individual,
        mean_joint: 0.5 * (base_joint + novel_joint),
        delta: delta(base_joint, base_individual, novel_joint, novel_individual),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleSessionSummary {
    pub episodes_requested: usize,
    pub episodes_completed: usize,
    pub episodes_failed: usize,
    pub mean_joint: MeanCi,
    pub base_joint: MeanCi,
    pub novel_joint: MeanCi,
    pub base_individual: MeanCi,
    pub novel_individual: MeanCi,
    /// Signed: joint minus individual, so interference shows as negative.
    pub delta: MeanCi,
    pub abs_delta: f64,
}

impl SingleSessionSummary {
    /// Aggregates are computed in episode-index order, so the summary does
    /// not depend on the order in which episodes finished.
    pub fn from_results(requested: usize, results: &[EpisodeResult], failed: usize) -> Self {
        let mut sorted: Vec<&EpisodeResult> = results.iter().collect();
        sorted.sort_by_key(|r| r.index);
        let stat = |f: fn(&EpisodeResult) -> f64| {
            mean_ci95(&sorted.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        let delta = stat(|r| r.delta);
        SingleSessionSummary {
            episodes_requested: requested,
            episodes_completed: results.len(),
            episodes_failed: failed,
            mean_joint: stat(|r| r.mean_joint),
            base_joint: stat(|r| r.base_joint),
            novel_joint: stat(|r| r.novel_joint),
            base_individual: stat(|r| r.base_individual),
            novel_individual: stat(|r| r.novel_individual),
            abs_delta: delta.mean.abs(),
            delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleSessionOutcome {
    pub summary: SingleSessionSummary,
    pub failures: Vec<EpisodeFailure>,
    pub episodes: Vec<EpisodeResult>,
}

/// Runs `config.protocol.episodes` independent episodes on `jobs` threads.
///
/// Each episode starts from the base weights and draws from its own random
/// stream, so results do not depend on `jobs`. Training failures are
/// recorded and the episode is left out of the summary; sampling problems
/// abort the run.
pub fn run_single_session(
    store: &FeatureStore,
    base: &BaseModel,
    novel_pool: &[ClassId],
    embeddings: Option<&EmbeddingTable>,
    config: &RunConfig,
    jobs: usize,
) -> Result<SingleSessionOutcome> {
    let spec = EpisodeSpec::from_config(config);
    let pools = Pools::new(store, base.classes(), novel_pool, &spec)?;
    let mut config = config.clone();
    if config.regularizer.memory {
        log::warn!("memory replay does not apply to single-session episodes; ignoring");
        config.regularizer.memory = false;
    }
    let config = &config;
    let n = config.protocol.episodes;

    let run = |index: usize| -> Result<std::result::Result<EpisodeResult, EpisodeFailure>> {
        let mut rng = rng_for(config.protocol.seed, EPISODE_STREAM + index as u64);
        let episode = pools.sample(&spec, &mut rng)?;
        let trained = IncrementalLearner::new(config, base, embeddings, &[], rng).and_then(
            |mut learner| {
                learner.learn_session(&episode.novel, &episode.support)?;
                Ok(learner)
            },
        );
        let learner = match trained {
            Ok(l) => l,
            Err(e) => {
                log::warn!("episode {index} failed: {e}");
                return Ok(Err(EpisodeFailure {
                    index,
                    error: e.to_string(),
                }));
            }
        };
        evaluate_episode(
            index,
            learner.weights(),
            base.classes(),
            &episode.novel,
            &episode.queries,
        )
        .map(Ok)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| (0..n).into_par_iter().map(run).collect());

    let mut episodes = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for o in outcomes {
        match o? {
            Ok(r) => episodes.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(SingleSessionOutcome {
        summary: SingleSessionSummary::from_results(n, &episodes, failures.len()),
        failures,
        episodes,
    })
}
