//! Dense linear algebra: orthonormal bases by Householder QR, orthogonal
//! projection, and least squares for the embedding-to-weight map.

mod lstsq;
mod matrix;
mod qr;

pub use lstsq::{default_ridge, fit_least_squares, LinearMap};
pub use matrix::DenseMatrix;
pub use qr::{orthonormal_basis, project, OrthonormalBasis, RANK_TOLERANCE};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
