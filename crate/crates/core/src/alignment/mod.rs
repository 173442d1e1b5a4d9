//! Adaptive alignment of two descriptor sequences.
//!
//! `SIM` is the cosine matrix between every query and support descriptor.
//! Marginal masses come from cross-referencing: each query descriptor is
//! weighted by its inner product with the support mean and vice versa. The
//! optimal plan `A*` minimizes `<1 - SIM, A>` under those marginals and the
//! score is `<SIM, A*>`.

mod transport;

use alloc::format;
use alloc::vec::Vec;

pub use transport::{solve_transport, TransportSolution};

use crate::descriptor::DescriptorSequence;
use crate::linalg::{cosine, dot};
use crate::{Error, Result};

/// Relative floor applied to raw cross-reference masses.
pub const MASS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "{} similarities for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity matrix"));
        }
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Config("similarities must lie in [-1, 1]".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, l: usize, lp: usize) -> f64 {
        self.values[l * self.cols + lp]
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                values.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Marginal masses for the query (`mu`) and support (`gamma`) sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Masses {
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    objective: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, l: usize, lp: usize) -> f64 {
        self.values[l * self.cols + lp]
    }

    /// Optimal `<1 - SIM, A>`.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values
            .chunks(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c)).sum())
            .collect()
    }
}

fn check_dims(q: &DescriptorSequence, s: &DescriptorSequence) -> Result<()> {
    if q.dim() != s.dim() {
        return Err(Error::Shape(format!(
            "descriptor lengths {} and {}",
            q.dim(),
            s.dim()
        )));
    }
    Ok(())
}

pub fn similarity_matrix(
    q: &DescriptorSequence,
    s: &DescriptorSequence,
) -> Result<SimilarityMatrix> {
    check_dims(q, s)?;
    let mut values = Vec::with_capacity(q.len() * s.len());
    for a in q.vectors() {
        for b in s.vectors() {
            values.push(cosine(a, b)?);
        }
    }
    SimilarityMatrix::new(q.len(), s.len(), values)
}

/// Raw cross-reference masses: `mu_l = <Q_l, mean(S)>`,
/// `gamma_l' = <S_l', mean(Q)>`.
pub fn raw_cross_reference(
    q: &DescriptorSequence,
    s: &DescriptorSequence,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(q, s)?;
    let (q_mean, s_mean) = (q.mean_vector(), s.mean_vector());
    let mu = q
        .vectors()
        .map(|v| dot(v, &s_mean))
        .collect::<Result<_>>()?;
    let gamma = s
        .vectors()
        .map(|v| dot(v, &q_mean))
        .collect::<Result<_>>()?;
    Ok((mu, gamma))
}

/// Floors raw masses at `MASS_FLOOR * max|raw|` and normalizes to unit sum.
/// The floor is relative so positive rescaling leaves the result unchanged;
/// an all-zero input becomes uniform.
pub fn floor_and_normalize(raw: &[f64]) -> Vec<f64> {
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    if !(peak > 0.0) {
        return alloc::vec![1.0 / raw.len() as f64; raw.len()];
    }
    let floor = MASS_FLOOR * peak;
    let clamped: Vec<f64> = raw.iter().map(|v| v.max(floor)).collect();
    let total: f64 = clamped.iter().sum();
    clamped.iter().map(|v| v / total).collect()
}

pub fn marginal_masses(q: &DescriptorSequence, s: &DescriptorSequence) -> Result<Masses> {
    let (mu, gamma) = raw_cross_reference(q, s)?;
    Ok(Masses {
        mu: floor_and_normalize(&mu),
        gamma: floor_and_normalize(&gamma),
    })
}

/// Exact EMD plan minimizing `<1 - SIM, A>` under the given marginals.
pub fn solve_emd(sim: &SimilarityMatrix, masses: &Masses) -> Result<TransportPlan> {
    if masses.mu.len() != sim.rows || masses.gamma.len() != sim.cols {
        return Err(Error::Shape(format!(
            "masses {}+{} for a {}x{} similarity matrix",
            masses.mu.len(),
            masses.gamma.len(),
            sim.rows,
            sim.cols
        )));
    }
    let cost: Vec<f64> = sim.values.iter().map(|v| 1.0 - v).collect();
    let sol = solve_transport(&cost, &masses.mu, &masses.gamma)?;
    Ok(TransportPlan {
        rows: sim.rows,
        cols: sim.cols,
        values: sol.plan,
        objective: sol.objective,
    })
}

/// `<SIM, A*>`.
pub fn alignment_score(sim: &SimilarityMatrix, plan: &TransportPlan) -> Result<f64> {
    if sim.rows != plan.rows || sim.cols != plan.cols {
        return Err(Error::Shape(format!(
            "{}x{} similarity vs {}x{} plan",
            sim.rows, sim.cols, plan.rows, plan.cols
        )));
    }
    Ok(sim
        .values
        .iter()
        .zip(&plan.values)
        .map(|(s, a)| s * a)
        .sum())
}

/// Everything computed by one adaptive alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub sim: SimilarityMatrix,
    pub masses: Masses,
    pub plan: TransportPlan,
    pub score: f64,
}

pub fn adaptive_alignment(q: &DescriptorSequence, s: &DescriptorSequence) -> Result<Alignment> {
    let sim = similarity_matrix(q, s)?;
    let masses = marginal_masses(q, s)?;
    let plan = solve_emd(&sim, &masses)?;
    let score = alignment_score(&sim, &plan)?;
    Ok(Alignment {
        sim,
        masses,
        plan,
        score,
    })
}

/// Mean cosine between descriptors at the same (scale, timestamp).
pub fn fixed_alignment_pp(q: &DescriptorSequence, s: &DescriptorSequence) -> Result<f64> {
    if !q.same_structure(s) {
        return Err(Error::Shape(
            "point-to-point alignment needs identical scale/timestamp structure".into(),
        ));
    }
    let mut total = 0.0;
    for (a, b) in q.vectors().zip(s.vectors()) {
        total += cosine(a, b)?;
    }
    Ok(total / q.len() as f64)
}

/// Uniform average of the full similarity matrix.
pub fn fixed_alignment_cross(q: &DescriptorSequence, s: &DescriptorSequence) -> Result<f64> {
    Ok(similarity_matrix(q, s)?.mean())
}

/// How two sequences are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    /// Exact EMD with cross-reference masses.
    Adaptive,
    PointToPoint,
    Cross,
}

impl Scoring {
    pub fn score(self, q: &DescriptorSequence, s: &DescriptorSequence) -> Result<f64> {
        match self {
            Scoring::Adaptive => Ok(adaptive_alignment(q, s)?.score),
            Scoring::PointToPoint => fixed_alignment_pp(q, s),
            Scoring::Cross => fixed_alignment_cross(q, s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seq(v: Vec<Vec<f64>>) -> DescriptorSequence {
        DescriptorSequence::from_vectors(v).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let q = seq(vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        let sim = similarity_matrix(&q, &q).unwrap();
        assert_eq!(sim.get(0, 0), 1.0);
        assert_eq!(sim.get(1, 1), 1.0);
        assert_eq!(sim.get(0, 1), 0.0);
        let other = seq(vec![vec![1.0, 0.0, 0.0]]);
        assert!(similarity_matrix(&q, &other).is_err());
        let orth = seq(vec![vec![0.0, 0.0, 1.0]]);
        let q3 = seq(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert!(similarity_matrix(&q3, &orth)
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn masses_hand_example() {
        let q = seq(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = seq(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let (mu, gamma) = raw_cross_reference(&q, &s).unwrap();
        assert_eq!(mu, vec![1.0, 0.0]);
        assert_eq!(gamma, vec![0.5, 0.5]);
        let m = marginal_masses(&q, &s).unwrap();
        assert!((m.mu[0] - (1.0 - MASS_FLOOR)).abs() < 1e-11);
        assert!((m.mu[1] - MASS_FLOOR).abs() < 1e-11);
        assert_eq!(m.gamma, vec![0.5, 0.5]);
    }

    #[test]
    fn masses_uniform_for_identical_orthonormal() {
        let q = seq(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let m = marginal_masses(&q, &q).unwrap();
        for v in m.mu.iter().chain(&m.gamma) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn emd_examples() {
        let sim = SimilarityMatrix::new(1, 1, vec![0.3]).unwrap();
        let masses = Masses {
            mu: vec![1.0],
            gamma: vec![1.0],
        };
        let plan = solve_emd(&sim, &masses).unwrap();
        assert_eq!(plan.values(), &[1.0]);
        assert!((plan.objective() - 0.7).abs() < 1e-15);

        let sim = SimilarityMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let masses = Masses {
            mu: vec![0.5, 0.5],
            gamma: vec![0.5, 0.5],
        };
        let plan = solve_emd(&sim, &masses).unwrap();
        assert_eq!(plan.values(), &[0.5, 0.0, 0.0, 0.5]);
        assert_eq!(plan.objective(), 0.0);
        assert_eq!(alignment_score(&sim, &plan).unwrap(), 1.0);

        let bad = Masses {
            mu: vec![0.5, 0.5],
            gamma: vec![0.5, 0.4],
        };
        assert!(matches!(
            solve_emd(&sim, &bad),
            Err(Error::Unbalanced { .. })
        ));
    }

    #[test]
    fn constant_similarity_scores_constant() {
        let sim = SimilarityMatrix::new(2, 3, vec![0.25; 6]).unwrap();
        let masses = Masses {
            mu: vec![0.3, 0.7],
            gamma: vec![0.2, 0.2, 0.6],
        };
        let plan = solve_emd(&sim, &masses).unwrap();
        assert!((alignment_score(&sim, &plan).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fixed_alignment_examples() {
        let q = seq(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(fixed_alignment_pp(&q, &q).unwrap(), 1.0);
        let r = seq(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(fixed_alignment_pp(&q, &r).unwrap(), 0.0);
        let short = seq(vec![vec![1.0, 0.0]]);
        assert!(fixed_alignment_pp(&q, &short).is_err());

        let rep = seq(vec![vec![2.0, 1.0]; 3]);
        assert!((fixed_alignment_cross(&rep, &rep).unwrap() - 1.0).abs() < 1e-15);
        let a = seq(vec![vec![1.0, 0.0]]);
        let b = seq(vec![vec![0.0, 1.0], vec![0.0, 3.0]]);
        assert_eq!(fixed_alignment_cross(&a, &b).unwrap(), 0.0);
    }
}
