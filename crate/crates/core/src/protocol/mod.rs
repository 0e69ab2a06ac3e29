//! Benchmark protocols and their metrics.
//!
//! The multi-session protocol learns a stream of class sessions one after
//! another and evaluates on every class seen so far after each session. The
//! single-session protocol samples many independent one-session episodes
//! from a pool of candidate classes, always restarting from the base weights.

mod metrics;
mod multi;
mod report;
mod single;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use metrics::{
    confusion_matrix, delta, mean_ci95, percent, predict, weighted_accuracy, ClassAccuracy,
    ConfusionMatrix, MeanCi,
};
pub use multi::{evaluate_session, fit_base_weights, run_multi_session, SessionResult, SessionStream};
pub use report::{
    confusion_csv, session_table_csv, single_summary_csv, ResultsBody, ResultsFile,
    RESULTS_SCHEMA,
};
pub use single::{
    evaluate_episode, run_single_session, sample_episode, Episode, EpisodeFailure, EpisodeResult,
    EpisodeSpec, SingleSessionOutcome, SingleSessionSummary,
};

/// Random stream of the incremental sessions of a multi-session run.
pub const RUN_STREAM: u64 = 0;
/// Random stream used when base weights are trained in-engine.
pub const BASE_STREAM: u64 = 1;
/// Episode `i` of a single-session run draws from stream `EPISODE_STREAM + i`.
pub const EPISODE_STREAM: u64 = 2;

/// Independent generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
