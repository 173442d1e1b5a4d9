#![allow(dead_code)]

use m2align_core::linalg::{DenseMatrix, SpdMatrix};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    m2align_core::seed::rng(seed)
}

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Random SPD matrix `Q diag(lambda) Q^T` with eigenvalues log-uniform in
/// `[1, cond]`, endpoints included.
pub fn spd_with_condition(rng: &mut impl Rng, dim: usize, cond: f64) -> SpdMatrix {
    let g = DMatrix::from_row_slice(dim, dim, &gaussian(rng, dim * dim));
    let q = g.qr().q();
    let mut lambda: Vec<f64> = (0..dim)
        .map(|_| cond.powf(rng.random_range(0.0..1.0)))
        .collect();
    lambda[0] = 1.0;
    if dim > 1 {
        lambda[1] = cond;
    }
    let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambda)) * q.transpose();
    let sym = (&a + a.transpose()) * 0.5;
    SpdMatrix::new(from_na(&sym)).expect("constructed SPD")
}

/// Square root by symmetric eigendecomposition.
pub fn eigen_sqrt(a: &DenseMatrix) -> DMatrix<f64> {
    let e = to_na(a).symmetric_eigen();
    let s = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose()
}

pub fn min_eigenvalue(a: &DenseMatrix) -> f64 {
    to_na(a).symmetric_eigen().eigenvalues.min()
}
