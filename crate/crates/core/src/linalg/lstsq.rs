use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::{Error, Result};

/// Affine map `e -> A e + b` from embedding space (d_e) to weight space (d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub matrix: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LinearMap {
    pub fn input_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, e: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.matrix.matvec(e)?;
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        Ok(out)
    }

    /// `sum_j |t_j - (A e_j + b)|^2 + ridge |A|_F^2`
    pub fn objective<E: AsRef<[f64]>, T: AsRef<[f64]>>(
        &self,
        embeddings: &[E],
        targets: &[T],
        ridge: f64,
    ) -> Result<f64> {
        let mut total = 0.0;
        for (e, t) in embeddings.iter().zip(targets) {
            let p = self.apply(e.as_ref())?;
            total += p
                .iter()
                .zip(t.as_ref())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok(total + ridge * self.matrix.frobenius_norm().powi(2))
    }
}

/// Tiny ridge proportional to the mean per-coordinate variance of the
/// centered embeddings.
pub fn default_ridge<E: AsRef<[f64]>>(embeddings: &[E]) -> f64 {
    let n = embeddings.len();
    let Some(first) = embeddings.first() else {
        return 0.0;
    };
    let de = first.as_ref().len();
    if de == 0 {
        return 0.0;
    }
    let mut mean = vec![0.0; de];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e.as_ref()) {
            *m += v / n as f64;
        }
    }
    let trace: f64 = embeddings
        .iter()
        .flat_map(|e| e.as_ref().iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)))
        .sum();
    1e-8 * trace / de as f64
}

/// Minimizes `sum_j |targets_j - (A embeddings_j + b)|^2 + ridge |A|_F^2`
/// over `A` (d x d_e) and an unpenalized bias `b`.
///
/// The bias is eliminated by centering; the remaining ridge problem is
/// solved through the SVD of the centered embedding matrix, so a zero ridge
/// on an underdetermined system yields the minimum-norm `A`.
pub fn fit_least_squares<E: AsRef<[f64]>, T: AsRef<[f64]>>(
    embeddings: &[E],
    targets: &[T],
    ridge: f64,
) -> Result<LinearMap> {
    if embeddings.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.len(),
            got: targets.len(),
        });
    }
    if embeddings.is_empty() {
        return Err(Error::Insufficient("least squares needs at least one pair".into()));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
    }
    let n = embeddings.len();
    let de = embeddings[0].as_ref().len();
    let d = targets[0].as_ref().len();
    if de == 0 || d == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    for (e, t) in embeddings.iter().zip(targets) {
        let (e, t) = (e.as_ref(), t.as_ref());
        if e.len() != de {
            return Err(Error::DimensionMismatch {
                expected: de,
                got: e.len(),
            });
        }
        if t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: t.len(),
            });
        }
        crate::datamodel::ensure_finite(e, || "least-squares embedding".into())?;
        crate::datamodel::ensure_finite(t, || "least-squares target".into())?;
    }

    let mean_of = |rows: Vec<&[f64]>, width: usize| {
        let mut m = vec![0.0; width];
        for r in &rows {
            for (a, v) in m.iter_mut().zip(*r) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= n as f64);
        m
    };
    let e_mean = mean_of(embeddings.iter().map(|e| e.as_ref()).collect(), de);
    let t_mean = mean_of(targets.iter().map(|t| t.as_ref()).collect(), d);

    let x = DMatrix::from_fn(n, de, |i, j| embeddings[i].as_ref()[j] - e_mean[j]);
    let y = DMatrix::from_fn(n, d, |i, j| targets[i].as_ref()[j] - t_mean[j]);

    // X = U S V^T  =>  A^T = V diag(s / (s^2 + ridge)) U^T Y
    let svd = x.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = s_max * f64::EPSILON * n.max(de) as f64;
    let shrink = svd.singular_values.map(|s| {
        if s <= cutoff {
            0.0
        } else {
            s / (s * s + ridge)
        }
    });
    let uty = u.transpose() * &y;
    let scaled = DMatrix::from_fn(uty.nrows(), d, |i, j| shrink[i] * uty[(i, j)]);
    let a_t = v_t.transpose() * scaled; // d_e x d

    let mut matrix = DenseMatrix::zeros(d, de);
    for i in 0..d {
        for j in 0..de {
            matrix[(i, j)] = a_t[(j, i)];
        }
    }
    let bias = (0..d)
        .map(|i| t_mean[i] - (0..de).map(|j| matrix[(i, j)] * e_mean[j]).sum::<f64>())
        .collect();
    Ok(LinearMap { matrix, bias })
}
