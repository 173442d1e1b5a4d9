//! Dense row-major matrices and the SPD operations used by the moment
//! descriptors: uncentered second moments, coupled Newton–Schulz square
//! roots, upper-triangle vectorization and cosine similarity.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::{Error, Result};

/// Symmetry tolerance (absolute) accepted by [`SpdMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Most negative eigenvalue accepted by [`SpdMatrix::new`].
pub const PSD_TOL: f64 = 1e-6;
/// Newton–Schulz iteration count used by the descriptor pipeline.
pub const DEFAULT_NS_ITERATIONS: usize = 5;
/// Relative diagonal regularizer: `eps = REGULARIZER * trace / dim`.
pub const REGULARIZER: f64 = 1e-5;
/// Norms below this make a cosine undefined; such pairs score 0.
pub const COSINE_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .sum()
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max(libm::fabs(self[(i, j)] - self[(j, i)]));
            }
        }
        worst
    }

    fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg;
            }
        }
    }

    /// Frobenius inner product.
    pub fn frobenius_dot(&self, other: &Self) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

/// Symmetric positive semidefinite matrix (up to [`SYMMETRY_TOL`] and
/// [`PSD_TOL`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    inner: DenseMatrix,
}

impl SpdMatrix {
    /// Validates symmetry and semidefiniteness. Semidefiniteness is checked
    /// with a Cholesky factorization of `a + PSD_TOL * I`, which succeeds iff
    /// the smallest eigenvalue exceeds `-PSD_TOL`.
    pub fn new(m: DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!(
                "SPD matrix must be square, got {}x{}",
                m.rows, m.cols
            )));
        }
        let asym = m.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        if !cholesky_succeeds(&m, PSD_TOL) {
            return Err(Error::NotPositiveSemidefinite);
        }
        let mut m = m;
        m.symmetrize();
        Ok(Self { inner: m })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DenseMatrix::identity(n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            inner: DenseMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.rows
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.inner
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }
}

impl Index<(usize, usize)> for SpdMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.inner[idx]
    }
}

fn cholesky_succeeds(m: &DenseMatrix, shift: f64) -> bool {
    let n = m.rows;
    let scale = (0..n).map(|i| libm::fabs(m[(i, i)])).fold(1.0, f64::max);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m[(j, j)] + shift;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        // Pivots at rounding level of the shifted diagonal count as zero
        // eigenvalues of the shifted matrix, i.e. eigenvalue -shift.
        if d <= -1e-14 * scale {
            return false;
        }
        let d = libm::sqrt(d.max(0.0));
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
        }
    }
    true
}

/// Default diagonal regularizer for [`newton_schulz_sqrt`].
pub fn default_regularizer(a: &SpdMatrix) -> f64 {
    if a.dim() == 0 {
        return 0.0;
    }
    REGULARIZER * a.trace() / a.dim() as f64
}

/// Coupled Newton–Schulz square root of `a + eps * I`.
///
/// The shifted matrix is divided by its trace, iterated
/// `Y <- Y (3I - ZY) / 2`, `Z <- (3I - ZY) Z / 2` from `Y = A/tr, Z = I`,
/// and the result is rescaled by `sqrt(tr)`.
pub fn newton_schulz_sqrt(a: &SpdMatrix, iterations: usize, eps: f64) -> Result<SpdMatrix> {
    if iterations == 0 {
        return Err(Error::Config(
            "newton-schulz needs at least one iteration".into(),
        ));
    }
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::Config(format!(
            "regularizer must be >= 0, got {eps}"
        )));
    }
    if a.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("newton-schulz input"));
    }
    let n = a.dim();
    let mut shifted = a.inner.clone();
    for i in 0..n {
        shifted.data[i * n + i] += eps;
    }
    let trace = shifted.trace();
    if !(trace > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let mut y = shifted.scaled(1.0 / trace);
    let mut z = DenseMatrix::identity(n);
    for _ in 0..iterations {
        let zy = z.matmul(&y)?;
        let t = DenseMatrix::from_fn(n, n, |r, c| {
            let id = if r == c { 3.0 } else { 0.0 };
            0.5 * (id - zy[(r, c)])
        });
        y = y.matmul(&t)?;
        z = t.matmul(&z)?;
    }
    let mut out = y.scaled(libm::sqrt(trace));
    out.symmetrize();
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("newton-schulz output"));
    }
    Ok(SpdMatrix { inner: out })
}

/// `(1/M) * T * T^T` for a `C x M` feature matrix (no mean centering).
pub fn second_moment(features: &DenseMatrix) -> Result<SpdMatrix> {
    let (c, m) = (features.rows, features.cols);
    if m == 0 {
        return Err(Error::Empty("second moment needs at least one column"));
    }
    let inv = 1.0 / m as f64;
    let mut out = vec![0.0; c * c];
    for i in 0..c {
        let ri = features.row(i);
        for j in i..c {
            let rj = features.row(j);
            let s: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>() * inv;
            out[i * c + j] = s;
            out[j * c + i] = s;
        }
    }
    Ok(SpdMatrix {
        inner: DenseMatrix {
            rows: c,
            cols: c,
            data: out,
        },
    })
}

/// Flat descriptor vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector(pub Vec<f64>);

impl DescriptorVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }
}

impl From<Vec<f64>> for DescriptorVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Length of the upper-triangle vectorization of a `dim x dim` matrix.
pub const fn triangle_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Row-major upper triangle including the diagonal. Off-diagonal entries are
/// scaled by `sqrt(2)` so that vector dot products equal Frobenius inner
/// products of the matrices.
pub fn vectorize_spd(a: &SpdMatrix) -> DescriptorVector {
    upper_triangle(&a.inner)
}

/// Like [`vectorize_spd`] for an unvalidated matrix.
pub fn vectorize_symmetric(m: &DenseMatrix) -> Result<DescriptorVector> {
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(upper_triangle(m))
}

fn upper_triangle(m: &DenseMatrix) -> DescriptorVector {
    let n = m.rows;
    let mut out = Vec::with_capacity(triangle_len(n));
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in (i + 1)..n {
            out.push(core::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
    DescriptorVector(out)
}

pub fn dot(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "vector lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a * b).sum())
}

/// Cosine similarity, 0 when either norm is below [`COSINE_NORM_FLOOR`].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let d = dot(u, v)?;
    let nu = libm::sqrt(u.iter().map(|x| x * x).sum());
    let nv = libm::sqrt(v.iter().map(|x| x * x).sum());
    if nu < COSINE_NORM_FLOOR || nv < COSINE_NORM_FLOOR {
        return Ok(0.0);
    }
    Ok((d / (nu * nv)).clamp(-1.0, 1.0))
}
