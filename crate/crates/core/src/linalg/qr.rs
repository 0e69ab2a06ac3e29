use serde::{Deserialize, Serialize};

use super::{axpy, dot, norm, DenseMatrix};
use crate::{Error, Result};

/// Inputs whose residual falls below this fraction of the largest input norm
/// are treated as linearly dependent and contribute no column.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Orthonormal columns `P` (d rows, r columns) spanning a set of vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalBasis {
    dim: usize,
    columns: Vec<Vec<f64>>,
}

impl OrthonormalBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// `P` as a d x r matrix.
    pub fn to_matrix(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.dim, self.rank());
        for (j, col) in self.columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Subspace coordinates `P^T v`.
    pub fn coordinates(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        Ok(self.columns.iter().map(|p| dot(p, v)).collect())
    }

    /// `P P^T v`, the closest point of the span to `v`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let coords = self.coordinates(v)?;
        let mut out = vec![0.0; self.dim];
        for (p, c) in self.columns.iter().zip(coords) {
            axpy(c, p, &mut out);
        }
        Ok(out)
    }

    /// `(I - P P^T) v`
    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.project(v)?;
        Ok(v.iter().zip(&m).map(|(a, b)| a - b).collect())
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Free-function form of [`OrthonormalBasis::project`].
pub fn project(v: &[f64], basis: &OrthonormalBasis) -> Result<Vec<f64>> {
    basis.project(v)
}

/// Orthonormal basis for the span of `vectors` by Householder QR of the
/// d x n matrix whose columns are the inputs.
///
/// Columns are processed in input order. A column whose residual (after the
/// reflections built so far) is below `RANK_TOLERANCE` times the largest
/// input norm is skipped, so rank-deficient inputs give fewer columns. Each
/// returned column is signed so that it has a positive component along the
/// input it was built from.
pub fn orthonormal_basis<V: AsRef<[f64]>>(vectors: &[V]) -> Result<OrthonormalBasis> {
    let first = vectors
        .first()
        .ok_or(Error::DegenerateBasis("no input vectors"))?;
    let dim = first.as_ref().len();
    if dim == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        crate::datamodel::ensure_finite(v, || "basis input".into())?;
    }
    let largest = vectors.iter().map(|v| norm(v.as_ref())).fold(0.0, f64::max);
    if largest == 0.0 {
        return Err(Error::DegenerateBasis("all input vectors are zero"));
    }
    let tol = RANK_TOLERANCE * largest;

    // Unit Householder vectors; reflector k is zero above row k.
    let mut reflectors: Vec<Vec<f64>> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    for v in vectors {
        let k = reflectors.len();
        if k == dim {
            break;
        }
        let mut x = v.as_ref().to_vec();
        for h in &reflectors {
            reflect(h, &mut x);
        }
        let resid = norm(&x[k..]);
        if resid <= tol {
            continue;
        }
        // H x = alpha e_k with alpha = -sign(x_k) |x[k..]|
        let alpha = if x[k] >= 0.0 { -resid } else { resid };
        let mut h = vec![0.0; dim];
        h[k..].copy_from_slice(&x[k..]);
        h[k] -= alpha;
        let hn = norm(&h);
        for e in &mut h {
            *e /= hn;
        }
        reflectors.push(h);
        signs.push(alpha.signum());
    }

    // Q e_k = H_0 H_1 ... H_{r-1} e_k
    let columns = (0..reflectors.len())
        .map(|k| {
            let mut q = vec![0.0; dim];
            q[k] = signs[k];
            for h in reflectors.iter().rev() {
                reflect(h, &mut q);
            }
            q
        })
        .collect();
    Ok(OrthonormalBasis { dim, columns })
}

/// `x <- (I - 2 h h^T) x` for unit `h`.
fn reflect(h: &[f64], x: &mut [f64]) {
    let s = 2.0 * dot(h, x);
    axpy(-s, h, x);
}
