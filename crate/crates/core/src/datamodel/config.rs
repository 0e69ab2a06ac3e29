//! Run configuration and the hyperparameter presets.
//!
//! A configuration file is a JSON object with the sections `data`,
//! `optimizer`, `regularizer`, `protocol` and `base_training`. Any field left
//! out is filled from the preset selected by the protocol kind, the shot
//! count and the regularizer kind; [`RunConfig::resolve`] performs that merge.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::EmbeddingSource;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    /// Cross-entropy with prior and old-class anchor only.
    #[default]
    #[serde(rename = "finetune")]
    FineTune,
    Subspace,
    Semantic,
    #[serde(rename = "linmap")]
    LinearMap,
    /// Semantic targets built from description embeddings.
    Description,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 5] = [
        RegularizerKind::FineTune,
        RegularizerKind::Subspace,
        RegularizerKind::Semantic,
        RegularizerKind::LinearMap,
        RegularizerKind::Description,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::FineTune => "finetune",
            RegularizerKind::Subspace => "subspace",
            RegularizerKind::Semantic => "semantic",
            RegularizerKind::LinearMap => "linmap",
            RegularizerKind::Description => "description",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(
            self,
            RegularizerKind::Semantic | RegularizerKind::LinearMap | RegularizerKind::Description
        )
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegularizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown regularizer {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    #[default]
    Multi,
    Single,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Multi => "multi",
            ProtocolKind::Single => "single",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub features: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    /// Base weights in the weight CSV format; trained in-engine when absent.
    pub base_weights: Option<PathBuf>,
    pub embedding_source: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the epoch loss changes by less than this...
    pub convergence_tolerance: f64,
    /// ...for this many consecutive epochs.
    pub patience_epochs: usize,
    /// Sets no larger than this are trained full-batch.
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.002,
            max_epochs: 1000,
            convergence_tolerance: 1e-4,
            patience_epochs: 10,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    pub alpha: f64,
    pub beta_base: f64,
    pub beta_prev_novel: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Ridge for the embedding-to-weight map; `None` picks a tiny
    /// trace-scaled value.
    pub ridge: Option<f64>,
    pub memory: bool,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig {
            kind: RegularizerKind::FineTune,
            alpha: 5e-3,
            beta_base: 0.2,
            beta_prev_novel: 0.1,
            gamma: 0.0,
            tau: 3.0,
            ridge: None,
            memory: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub shots: usize,
    pub n_way: usize,
    pub episodes: usize,
    pub queries_per_episode: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Multi,
            shots: 5,
            n_way: 5,
            episodes: 2000,
            queries_per_episode: 100,
            seed: 0,
        }
    }
}

/// Objective and optimizer used when base weights are fit in-engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseTrainConfig {
    pub alpha: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for BaseTrainConfig {
    fn default() -> Self {
        BaseTrainConfig {
            alpha: 5e-4,
            optimizer: OptimizerConfig {
                learning_rate: 0.05,
                max_epochs: 100,
                convergence_tolerance: 1e-6,
                patience_epochs: 10,
                batch_size: 64,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub optimizer: OptimizerConfig,
    pub regularizer: RegularizerConfig,
    pub protocol: ProtocolConfig,
    pub base_training: BaseTrainConfig,
}

impl RunConfig {
    /// Hyperparameters for a (protocol, shots, regularizer) combination.
    pub fn preset(protocol: ProtocolKind, shots: usize, kind: RegularizerKind) -> RunConfig {
        use RegularizerKind::*;

        let mut cfg = RunConfig::default();
        cfg.protocol.kind = protocol;
        cfg.protocol.shots = shots;
        let reg = &mut cfg.regularizer;
        reg.kind = kind;

        match protocol {
            ProtocolKind::Multi => {
                cfg.optimizer.learning_rate = 0.002;
                reg.beta_base = 0.2;
                reg.beta_prev_novel = 0.1;
                reg.tau = 3.0;
                (reg.alpha, reg.gamma) = match kind {
                    FineTune => (5e-3, 0.0),
                    Subspace | Semantic | Description => (5e-4, 1.0),
                    LinearMap => (5e-4, 0.1),
                };
            }
            ProtocolKind::Single if shots <= 1 => {
                cfg.optimizer.learning_rate = 0.003;
                reg.beta_base = 0.2;
                reg.tau = 1.5;
                (reg.alpha, reg.gamma) = match kind {
                    FineTune => (5e-3, 0.0),
                    Subspace => (5e-5, 0.005),
                    Semantic | Description | LinearMap => (5e-4, 0.005),
                };
            }
            ProtocolKind::Single => {
                cfg.optimizer.learning_rate = 0.002;
                reg.beta_base = 0.03;
                reg.tau = 1.5;
                reg.alpha = 5e-3;
                reg.gamma = match kind {
                    FineTune => 0.0,
                    Subspace | Semantic | LinearMap => 0.03,
                    Description => 0.01,
                };
            }
        }
        if kind == Description {
            cfg.data.embedding_source = EmbeddingSource::Description;
        }
        cfg
    }

    /// Builds a configuration from a partial JSON object: the preset chosen
    /// by the object's `protocol.kind`, `protocol.shots` and
    /// `regularizer.kind` supplies every value the object leaves out.
    pub fn resolve(partial: &Value) -> Result<RunConfig> {
        if !partial.is_object() && !partial.is_null() {
            return Err(Error::InvalidConfig("config must be a JSON object".into()));
        }
        let pick = |section: &str, key: &str| partial.get(section).and_then(|s| s.get(key));
        let protocol: ProtocolKind = match pick("protocol", "kind") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::InvalidConfig(format!("protocol.kind: {e}")))?,
            None => ProtocolKind::Multi,
        };
        let shots = match pick("protocol", "shots") {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| Error::InvalidConfig("protocol.shots must be an integer".into()))?
                as usize,
            None => 5,
        };
        let kind: RegularizerKind = match pick("regularizer", "kind") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::InvalidConfig(format!("regularizer.kind: {e}")))?,
            None => RegularizerKind::FineTune,
        };

        let mut merged = serde_json::to_value(RunConfig::preset(protocol, shots, kind))?;
        if !partial.is_null() {
            merge_json(&mut merged, partial);
        }
        let cfg: RunConfig = serde_json::from_value(merged)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let reg = &self.regularizer;
        let non_negative = [
            ("regularizer.alpha", reg.alpha),
            ("regularizer.beta_base", reg.beta_base),
            ("regularizer.beta_prev_novel", reg.beta_prev_novel),
            ("regularizer.gamma", reg.gamma),
            ("regularizer.tau", reg.tau),
            ("optimizer.learning_rate", self.optimizer.learning_rate),
            ("optimizer.convergence_tolerance", self.optimizer.convergence_tolerance),
            ("base_training.alpha", self.base_training.alpha),
            (
                "base_training.optimizer.learning_rate",
                self.base_training.optimizer.learning_rate,
            ),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if let Some(r) = reg.ridge {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {r}")));
            }
        }
        for opt in [&self.optimizer, &self.base_training.optimizer] {
            if opt.patience_epochs < 1 {
                return Err(Error::InvalidConfig("patience_epochs must be >= 1".into()));
            }
            if opt.batch_size < 1 {
                return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
            }
        }
        if matches!(reg.kind, RegularizerKind::Semantic | RegularizerKind::Description)
            && reg.tau <= 0.0
        {
            return Err(Error::InvalidConfig("tau must be > 0 for semantic targets".into()));
        }
        let p = &self.protocol;
        if p.shots < 1 || p.n_way < 1 {
            return Err(Error::InvalidConfig("shots and n_way must be >= 1".into()));
        }
        Ok(())
    }
}

/// Recursively overwrites `base` with the entries of `patch`.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => merge_maps(b, p),
        (b, p) => *b = p.clone(),
    }
}

fn merge_maps(base: &mut Map<String, Value>, patch: &Map<String, Value>) {
    for (k, v) in patch {
        match base.get_mut(k) {
            Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn multi_session_presets() {
        let ft = RunConfig::preset(ProtocolKind::Multi, 5, RegularizerKind::FineTune);
        assert_eq!(ft.optimizer.learning_rate, 0.002);
        assert_eq!(ft.regularizer.alpha, 5e-3);
        assert_eq!(ft.regularizer.beta_base, 0.2);
        assert_eq!(ft.regularizer.beta_prev_novel, 0.1);
        assert_eq!(ft.optimizer.max_epochs, 1000);
        assert_eq!(ft.optimizer.convergence_tolerance, 1e-4);
        assert_eq!(ft.optimizer.patience_epochs, 10);

        let sub = RunConfig::preset(ProtocolKind::Multi, 5, RegularizerKind::Subspace);
        assert_eq!((sub.regularizer.alpha, sub.regularizer.gamma), (5e-4, 1.0));
        let sem = RunConfig::preset(ProtocolKind::Multi, 5, RegularizerKind::Semantic);
        assert_eq!(sem.regularizer.tau, 3.0);
        let lin = RunConfig::preset(ProtocolKind::Multi, 5, RegularizerKind::LinearMap);
        assert_eq!(lin.regularizer.gamma, 0.1);
    }

    #[test]
    fn single_session_presets() {
        let one = RunConfig::preset(ProtocolKind::Single, 1, RegularizerKind::Subspace);
        assert_eq!(one.optimizer.learning_rate, 0.003);
        assert_eq!((one.regularizer.alpha, one.regularizer.gamma), (5e-5, 0.005));
        let five = RunConfig::preset(ProtocolKind::Single, 5, RegularizerKind::Description);
        assert_eq!(five.regularizer.gamma, 0.01);
        assert_eq!(five.regularizer.beta_base, 0.03);
        assert_eq!(five.data.embedding_source, EmbeddingSource::Description);
    }

    #[test]
    fn resolve_fills_missing_fields_from_preset() {
        let cfg = RunConfig::resolve(&json!({
            "regularizer": {"kind": "subspace", "gamma": 2.5},
            "protocol": {"seed": 9}
        }))
        .unwrap();
        assert_eq!(cfg.regularizer.kind, RegularizerKind::Subspace);
        assert_eq!(cfg.regularizer.gamma, 2.5);
        assert_eq!(cfg.regularizer.alpha, 5e-4);
        assert_eq!(cfg.protocol.seed, 9);
    }

    #[test]
    fn resolve_rejects_unknown_and_negative_fields() {
        assert!(RunConfig::resolve(&json!({"optimizer": {"momentum": 0.9}})).is_err());
        assert!(RunConfig::resolve(&json!({"regularizer": {"alpha": -1.0}})).is_err());
        assert!(RunConfig::resolve(&json!({"optimizer": {"patience_epochs": 0}})).is_err());
        assert!(RunConfig::resolve(&json!({"regularizer": {"kind": "ewc"}})).is_err());
        assert!(RunConfig::resolve(&json!([1, 2])).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::resolve(&Value::Null).unwrap();
        let again = RunConfig::resolve(&serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn kind_names_parse() {
        for k in RegularizerKind::ALL {
            assert_eq!(k.name().parse::<RegularizerKind>().unwrap(), k);
            let v = serde_json::to_value(k).unwrap();
            assert_eq!(v, json!(k.name()));
        }
    }
}
