//! Gaussian class-cluster fixtures.
//!
//! Class `c` gets a mean `m_c` drawn uniformly from the sphere of radius
//! `mean_scale`; its examples are `m_c + u + stddev * N(0, I)`, where `u` is
//! a shared offset of norm `shared_offset` in a random direction. Class
//! embeddings are either the means `m_c` themselves, so that embedding
//! similarity mirrors feature geometry, or independent random directions.
//!
//! The shared offset stands in for the common component of non-negative
//! network features. Rows imprinted from support means inherit it while
//! softmax-trained base rows largely cancel it, which is what lets plain
//! fine-tuning drift toward the newest classes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    ClassId, ClassRegistry, EmbeddingSource, EmbeddingTable, FeatureStore, FeatureVector, Split,
};
use crate::linalg::norm;
use crate::protocol::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    FromMeans,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub mean_scale: f64,
    pub stddev: f64,
    /// Support examples for each class outside the base session.
    pub support_per_class: usize,
    pub query_per_class: usize,
    /// Support examples for each base class (the base training set).
    pub base_support_per_class: usize,
    /// Classes `0..base_classes` form session 0.
    pub base_classes: usize,
    /// The remaining classes are split into sessions of this size, in id
    /// order; the last one may be smaller.
    pub session_size: usize,
    pub embedding_mode: EmbeddingMode,
    #[serde(default)]
    pub shared_offset: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// 20 base classes and four 5-class sessions in 32 dimensions, 5-shot.
    pub fn benchmark(seed: u64) -> SynthSpec {
        SynthSpec {
            n_classes: 40,
            dim: 32,
            mean_scale: 5.0,
            stddev: 1.5,
            support_per_class: 5,
            query_per_class: 50,
            base_support_per_class: 100,
            base_classes: 20,
            session_size: 5,
            embedding_mode: EmbeddingMode::FromMeans,
            shared_offset: 10.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth: {m}")));
        if !(self.stddev > 0.0 && self.stddev.is_finite()) {
            return bad("stddev must be positive");
        }
        if !(self.mean_scale >= 0.0 && self.mean_scale.is_finite()) {
            return bad("mean_scale must be non-negative");
        }
        if !(self.shared_offset >= 0.0 && self.shared_offset.is_finite()) {
            return bad("shared_offset must be non-negative");
        }
        if self.dim == 0 || self.n_classes == 0 {
            return bad("dim and n_classes must be at least 1");
        }
        if self.support_per_class == 0 || self.query_per_class == 0 || self.base_support_per_class == 0
        {
            return bad("example counts must be at least 1");
        }
        if self.base_classes == 0 || self.base_classes > self.n_classes {
            return bad("base_classes must be in 1..=n_classes");
        }
        if self.session_size == 0 && self.base_classes < self.n_classes {
            return bad("session_size must be at least 1");
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<ClassRegistry> {
        let mut reg = ClassRegistry::new();
        reg.register_session((0..self.base_classes as u32).map(ClassId))?;
        let rest: Vec<ClassId> = (self.base_classes as u32..self.n_classes as u32)
            .map(ClassId)
            .collect();
        for chunk in rest.chunks(self.session_size.max(1)) {
            reg.register_session(chunk.iter().copied())?;
        }
        Ok(reg)
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim);
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| radius * x / n).collect();
        }
    }
}

/// Class means in id order.
pub fn class_means(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let mut rng = rng_for(spec.seed, 0);
    (0..spec.n_classes)
        .map(|_| sphere(&mut rng, spec.dim, spec.mean_scale))
        .collect()
}

pub fn generate(spec: &SynthSpec) -> Result<(FeatureStore, EmbeddingTable, ClassRegistry)> {
    spec.validate()?;
    let registry = spec.registry()?;
    let means = class_means(spec);
    let offset = sphere(&mut rng_for(spec.seed, 3), spec.dim, spec.shared_offset);

    let mut store = FeatureStore::new(spec.dim)?;
    let mut rng = rng_for(spec.seed, 1);
    for (c, m) in means.iter().enumerate() {
        let support = if c < spec.base_classes {
            spec.base_support_per_class
        } else {
            spec.support_per_class
        };
        for (split, n) in [(Split::Support, support), (Split::Query, spec.query_per_class)] {
            for _ in 0..n {
                let x: Vec<f64> = gaussian(&mut rng, spec.dim)
                    .iter()
                    .zip(m)
                    .zip(&offset)
                    .map(|((z, mu), u)| mu + u + spec.stddev * z)
                    .collect();
                store.push(ClassId(c as u32), split, FeatureVector::new(x)?)?;
            }
        }
    }

    let mut embeddings = EmbeddingTable::new(spec.dim, EmbeddingSource::Label);
    let mut rng = rng_for(spec.seed, 2);
    for (c, m) in means.iter().enumerate() {
        let e = match spec.embedding_mode {
            EmbeddingMode::FromMeans => m.clone(),
            EmbeddingMode::Random => sphere(&mut rng, spec.dim, spec.mean_scale),
        };
        embeddings.insert(ClassId(c as u32), e)?;
    }
    Ok((store, embeddings, registry))
}
