//! Domain types shared by every stage of a run.

mod class;
pub mod config;
mod embeddings;
pub mod io;
mod memory;
mod registry;
mod store;
mod weights;

pub use class::{ClassId, FeatureVector, LabeledExample, Split};
pub use config::{
    BaseTrainConfig, OptimizerConfig, ProtocolConfig, ProtocolKind, RegularizerConfig,
    RegularizerKind, RunConfig,
};
pub use embeddings::{EmbeddingSource, EmbeddingTable};
pub use memory::MemoryBuffer;
pub use registry::ClassRegistry;
pub use store::FeatureStore;
pub use weights::{WeightMatrix, WeightSnapshots};

pub use crate::linalg::{LinearMap, OrthonormalBasis};

pub(crate) fn ensure_finite(values: &[f64], what: impl FnOnce() -> String) -> crate::Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::NonFinite(what()))
    }
}
