//! Static regularization targets for new classes, built once per session
//! from class embeddings and the session-0 base weights.

use std::collections::BTreeMap;

use crate::datamodel::{ClassId, EmbeddingTable, WeightMatrix};
use crate::linalg::{axpy, default_ridge, dot, fit_least_squares, LinearMap};
use crate::{Error, Result};

pub type Targets = BTreeMap<ClassId, Vec<f64>>;

/// `softmax(scores / tau)` with the maximum subtracted first.
pub fn tempered_softmax(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("temperature must be > 0, got {tau}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Mixing weights over `base` for one novel embedding.
pub fn semantic_weights(
    novel_embedding: &[f64],
    embeddings: &EmbeddingTable,
    base: &[ClassId],
    tau: f64,
) -> Result<Vec<f64>> {
    let scores = base
        .iter()
        .map(|&j| Ok(dot(embeddings.get(j)?, novel_embedding)))
        .collect::<Result<Vec<_>>>()?;
    tempered_softmax(&scores, tau)
}

/// `l_c = sum_j softmax_j(e_j . e_c / tau) eta_j` over the base classes `j`.
pub fn semantic_targets(
    embeddings: &EmbeddingTable,
    novel: &[ClassId],
    base: &[ClassId],
    base_weights: &WeightMatrix,
    tau: f64,
) -> Result<Targets> {
    if base.is_empty() {
        return Err(Error::Insufficient("semantic targets need base classes".into()));
    }
    let rows = base
        .iter()
        .map(|&j| base_weights.row(j))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Targets::new();
    for &c in novel {
        let mix = semantic_weights(embeddings.get(c)?, embeddings, base, tau)?;
        let mut target = vec![0.0; base_weights.dim()];
        for (w, row) in mix.iter().zip(&rows) {
            axpy(*w, row, &mut target);
        }
        out.insert(c, target);
    }
    Ok(out)
}

/// Least-squares map from base-class embeddings to base weights.
pub fn fit_embedding_map(
    embeddings: &EmbeddingTable,
    base: &[ClassId],
    base_weights: &WeightMatrix,
    ridge: Option<f64>,
) -> Result<LinearMap> {
    let es = base
        .iter()
        .map(|&j| embeddings.get(j))
        .collect::<Result<Vec<_>>>()?;
    let ws = base
        .iter()
        .map(|&j| base_weights.row(j))
        .collect::<Result<Vec<_>>>()?;
    let ridge = ridge.unwrap_or_else(|| default_ridge(&es));
    fit_least_squares(&es, &ws, ridge)
}

/// `L*(e_c)` for each novel class.
pub fn linear_map_targets(
    embeddings: &EmbeddingTable,
    novel: &[ClassId],
    base: &[ClassId],
    base_weights: &WeightMatrix,
    ridge: Option<f64>,
) -> Result<Targets> {
    let map = fit_embedding_map(embeddings, base, base_weights, ridge)?;
    novel
        .iter()
        .map(|&c| Ok((c, map.apply(embeddings.get(c)?)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::EmbeddingSource;

    fn table(rows: &[(u32, &[f64])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(rows[0].1.len(), EmbeddingSource::Label);
        for (c, e) in rows {
            t.insert(ClassId(*c), e.to_vec()).unwrap();
        }
        t
    }

    fn base_weights() -> WeightMatrix {
        let mut w = WeightMatrix::new(2);
        w.insert(ClassId(0), vec![1.0, 0.0]).unwrap();
        w.insert(ClassId(1), vec![0.0, 3.0]).unwrap();
        w
    }

    #[test]
    fn single_base_class_is_its_own_target() {
        let t = table(&[(0, &[1.0, 0.0]), (9, &[0.2, 0.7])]);
        let out = semantic_targets(&t, &[ClassId(9)], &[ClassId(0)], &base_weights(), 3.0).unwrap();
        assert_eq!(out[&ClassId(9)], vec![1.0, 0.0]);
    }

    #[test]
    fn tied_similarities_average() {
        let t = table(&[(0, &[1.0, 0.0]), (1, &[0.0, 1.0]), (9, &[0.5, 0.5])]);
        let out = semantic_targets(&t, &[ClassId(9)], &[ClassId(0), ClassId(1)], &base_weights(), 0.7)
            .unwrap();
        assert!((out[&ClassId(9)][0] - 0.5).abs() < 1e-15);
        assert!((out[&ClassId(9)][1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn hand_softmax_weights() {
        // e^1 / (e^1 + e^0) = 0.731059, e^0 / (e + 1) = 0.268941
        let t = table(&[(0, &[1.0, 0.0]), (1, &[0.0, 1.0]), (9, &[1.0, 0.0])]);
        let w = semantic_weights(&[1.0, 0.0], &t, &[ClassId(0), ClassId(1)], 1.0).unwrap();
        assert!((w[0] - 0.7311).abs() < 1e-4);
        assert!((w[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let s = [0.3, -1.2, 4.0, 2.2];
        let a = tempered_softmax(&s, 0.5).unwrap();
        let shifted: Vec<f64> = s.iter().map(|v| v + 100.0).collect();
        let b = tempered_softmax(&shifted, 0.5).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(tempered_softmax(&s, 0.0).is_err());
        assert!(tempered_softmax(&s, -1.0).is_err());
    }

    #[test]
    fn low_temperature_picks_most_similar() {
        let t = table(&[(0, &[1.0, 0.0]), (1, &[0.0, 1.0]), (9, &[0.4, 0.6])]);
        let out = semantic_targets(&t, &[ClassId(9)], &[ClassId(0), ClassId(1)], &base_weights(), 1e-4)
            .unwrap();
        assert!((out[&ClassId(9)][0]).abs() < 1e-12);
        assert!((out[&ClassId(9)][1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_embedding_errors() {
        let t = table(&[(0, &[1.0, 0.0])]);
        assert!(matches!(
            semantic_targets(&t, &[ClassId(9)], &[ClassId(0)], &base_weights(), 1.0),
            Err(Error::MissingEmbedding(ClassId(9)))
        ));
    }

    #[test]
    fn linear_map_recovers_affine_relation() {
        // weights = 2 e + (1, -1) for base; novel target follows the same map
        let t = table(&[(0, &[0.0, 0.0]), (1, &[1.0, 0.0]), (2, &[0.0, 1.0]), (9, &[1.0, 1.0])]);
        let mut w = WeightMatrix::new(2);
        w.insert(ClassId(0), vec![1.0, -1.0]).unwrap();
        w.insert(ClassId(1), vec![3.0, -1.0]).unwrap();
        w.insert(ClassId(2), vec![1.0, 1.0]).unwrap();
        let out = linear_map_targets(&t, &[ClassId(9)], &[ClassId(0), ClassId(1), ClassId(2)], &w, Some(0.0))
            .unwrap();
        assert!((out[&ClassId(9)][0] - 3.0).abs() < 1e-10);
        assert!((out[&ClassId(9)][1] - 1.0).abs() < 1e-10);
    }
}
