use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense integer class label assigned at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for ClassId {
    fn from(id: u32) -> Self {
        ClassId(id)
    }
}

/// Which pool of a class an example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Support,
    Query,
}

impl Split {
    pub fn tag(self) -> u8 {
        match self {
            Split::Support => 0,
            Split::Query => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Split::Support),
            1 => Ok(Split::Query),
            other => Err(Error::Format(format!("unknown split tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Support => "support",
            Split::Query => "query",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "support" => Ok(Split::Support),
            "query" => Ok(Split::Query),
            other => Err(Error::Format(format!("unknown split {other:?}"))),
        }
    }
}

/// Output of the frozen feature extractor for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        super::ensure_finite(&values, || "feature vector".into())?;
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub class: ClassId,
    pub feature: FeatureVector,
}

impl LabeledExample {
    pub fn new(class: ClassId, feature: FeatureVector) -> Self {
        LabeledExample { class, feature }
    }

    pub fn features(&self) -> &[f64] {
        self.feature.as_slice()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_features() {
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(FeatureVector::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn split_tags_round_trip() {
        for split in [Split::Support, Split::Query] {
            assert_eq!(Split::from_tag(split.tag()).unwrap(), split);
            assert_eq!(split.name().parse::<Split>().unwrap(), split);
        }
        assert!(Split::from_tag(7).is_err());
    }
}
