//! Exact balanced transportation simplex.
//!
//! Northwest-corner start, MODI (u, v potential) pricing with Dantzig's rule
//! and lowest-index tie-breaking, and the classic supply perturbation
//! `a_i + e`, `b_n + m e` carried symbolically so no basic variable is ever
//! degenerate. The reported plan is recomputed from the optimal basis with
//! the unperturbed marginals.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Reduced costs above `-PRICE_TOL` count as optimal.
const PRICE_TOL: f64 = 1e-12;
/// Flow values closer than this compare by their perturbation coefficient.
const FLOW_TOL: f64 = 1e-13;

/// `value + eps * e` for an infinitesimal `e > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Lex {
    value: f64,
    eps: f64,
}

impl Lex {
    fn less(self, other: Lex) -> bool {
        let d = self.value - other.value;
        if libm::fabs(d) > FLOW_TOL {
            d < 0.0
        } else {
            self.eps < other.eps
        }
    }

    fn sub(self, o: Lex) -> Lex {
        Lex {
            value: self.value - o.value,
            eps: self.eps - o.eps,
        }
    }

    fn add(self, o: Lex) -> Lex {
        Lex {
            value: self.value + o.value,
            eps: self.eps + o.eps,
        }
    }

    fn min(self, o: Lex) -> Lex {
        if o.less(self) {
            o
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub rows: usize,
    pub cols: usize,
    /// Row-major plan.
    pub plan: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// Minimizes `sum cost_ij x_ij` subject to row sums `supply`, column sums
/// `demand` and `x >= 0`. `cost` is row-major `supply.len() x demand.len()`.
pub fn solve_transport(cost: &[f64], supply: &[f64], demand: &[f64]) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::Empty("transportation problem"));
    }
    if cost.len() != m * n {
        return Err(Error::Shape(format!(
            "{} costs for a {m}x{n} problem",
            cost.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("transport cost"));
    }
    if supply
        .iter()
        .chain(demand)
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(Error::Config(
            "marginals must be finite and non-negative".into(),
        ));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if libm::fabs(total_s - total_d) > 1e-9 {
        return Err(Error::Unbalanced {
            supply: total_s,
            demand: total_d,
        });
    }
    // Absorb rounding-level imbalance into the demands.
    let ratio = if total_d > 0.0 {
        total_s / total_d
    } else {
        1.0
    };
    let demand: Vec<f64> = demand.iter().map(|d| d * ratio).collect();

    let mut simplex = Simplex::new(cost, supply, &demand);
    let pivots = simplex.run()?;
    let plan = simplex.unperturbed_plan(supply, &demand);
    let objective = plan.iter().zip(cost).map(|(x, c)| x * c).sum();
    Ok(TransportSolution {
        rows: m,
        cols: n,
        plan,
        objective,
        pivots,
    })
}

struct Simplex<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    /// Basic cells `(i, j)` with their perturbed flows; always `m + n - 1`.
    basis: Vec<(usize, usize)>,
    flow: Vec<Lex>,
    /// `cell -> basis slot`.
    slot: Vec<Option<usize>>,
}

impl<'a> Simplex<'a> {
    fn new(cost: &'a [f64], supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut rem_s: Vec<Lex> = supply.iter().map(|&v| Lex { value: v, eps: 1.0 }).collect();
        let mut rem_d: Vec<Lex> = demand.iter().map(|&v| Lex { value: v, eps: 0.0 }).collect();
        rem_d[n - 1].eps = m as f64;
        let mut basis = Vec::with_capacity(m + n - 1);
        let mut flow = Vec::with_capacity(m + n - 1);
        let mut slot = vec![None; m * n];
        let (mut i, mut j) = (0, 0);
        while i < m && j < n {
            let x = rem_s[i].min(rem_d[j]);
            let row_exhausted = !rem_d[j].less(rem_s[i]);
            slot[i * n + j] = Some(basis.len());
            basis.push((i, j));
            flow.push(x);
            rem_s[i] = rem_s[i].sub(x);
            rem_d[j] = rem_d[j].sub(x);
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || row_exhausted {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(basis.len(), m + n - 1);
        Self {
            m,
            n,
            cost,
            basis,
            flow,
            slot,
        }
    }

    /// Tree adjacency over nodes `0..m` (rows) and `m..m+n` (columns); each
    /// edge carries its basis slot.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (s, &(i, j)) in self.basis.iter().enumerate() {
            adj[i].push((self.m + j, s));
            adj[self.m + j].push((i, s));
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.m + self.n];
        let mut stack = vec![0usize];
        pot[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &(next, s) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.basis[s];
                    let c = self.cost[i * self.n + j];
                    // u_i + v_j = c_ij on basic cells.
                    pot[next] = c - pot[node];
                    stack.push(next);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Basis slots on the tree path from row node `i` to column node `j`.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let target = self.m + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut visited = vec![false; self.m + self.n];
        let mut stack = vec![i];
        visited[i] = true;
        while let Some(node) = stack.pop() {
            if node == target {
                break;
            }
            for &(next, s) in &adj[node] {
                if !visited[next] {
                    visited[next] = true;
                    parent[next] = Some((node, s));
                    stack.push(next);
                }
            }
        }
        let mut slots = Vec::new();
        let mut node = target;
        while node != i {
            let (prev, s) = parent[node].expect("basis is a spanning tree");
            slots.push(s);
            node = prev;
        }
        slots.reverse();
        slots
    }

    fn run(&mut self) -> Result<usize> {
        let limit = 100 * (self.m * self.n + self.m + self.n) + 1000;
        for pivot in 0..limit {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..self.m {
                for j in 0..self.n {
                    if self.slot[i * self.n + j].is_some() {
                        continue;
                    }
                    let d = self.cost[i * self.n + j] - u[i] - v[j];
                    if d < -PRICE_TOL && best.is_none_or(|(_, _, bd)| d < bd) {
                        best = Some((i, j, d));
                    }
                }
            }
            let Some((ei, ej, _)) = best else {
                return Ok(pivot);
            };
            // Path cells alternate -, +, -, ... starting next to row `ei`.
            let path = self.path(&adj, ei, ej);
            let mut leave: Option<usize> = None;
            for &s in path.iter().step_by(2) {
                leave = match leave {
                    None => Some(s),
                    Some(l) => {
                        let (fs, fl) = (self.flow[s], self.flow[l]);
                        let (ci, cl) = (self.cell(s), self.cell(l));
                        if fs.less(fl) || (!fl.less(fs) && ci < cl) {
                            Some(s)
                        } else {
                            Some(l)
                        }
                    }
                };
            }
            let leave = leave.expect("cycle has a decreasing cell");
            let theta = self.flow[leave];
            for (k, &s) in path.iter().enumerate() {
                self.flow[s] = if k % 2 == 0 {
                    self.flow[s].sub(theta)
                } else {
                    self.flow[s].add(theta)
                };
            }
            let (li, lj) = self.basis[leave];
            self.slot[li * self.n + lj] = None;
            self.basis[leave] = (ei, ej);
            self.flow[leave] = theta;
            self.slot[ei * self.n + ej] = Some(leave);
        }
        Err(Error::NoConvergence(limit))
    }

    fn cell(&self, s: usize) -> usize {
        let (i, j) = self.basis[s];
        i * self.n + j
    }

    /// Basic flows for the given marginals, solved leaf by leaf on the tree.
    fn unperturbed_plan(&self, supply: &[f64], demand: &[f64]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let mut remaining: Vec<f64> = supply.iter().chain(demand).copied().collect();
        let mut degree = vec![0usize; m + n];
        let adj = self.adjacency();
        for (node, edges) in adj.iter().enumerate() {
            degree[node] = edges.len();
        }
        let mut used = vec![false; self.basis.len()];
        let mut plan = vec![0.0; m * n];
        let mut leaves: Vec<usize> = (0..m + n).filter(|&v| degree[v] == 1).collect();
        while let Some(leaf) = leaves.pop() {
            if degree[leaf] != 1 {
                continue;
            }
            let Some(&(other, s)) = adj[leaf].iter().find(|(_, s)| !used[*s]) else {
                continue;
            };
            used[s] = true;
            let x = remaining[leaf];
            let (i, j) = self.basis[s];
            plan[i * n + j] = x.max(0.0);
            remaining[other] -= x;
            degree[leaf] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                leaves.push(other);
            }
        }
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let s = solve_transport(&[0.25], &[1.0], &[1.0]).unwrap();
        assert_eq!(s.plan, vec![1.0]);
        assert_eq!(s.objective, 0.25);
    }

    #[test]
    fn diagonal_is_optimal() {
        let s = solve_transport(&[0.0, 1.0, 1.0, 0.0], &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(s.plan, vec![0.5, 0.0, 0.0, 0.5]);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn anti_diagonal_requires_pivot() {
        let s = solve_transport(&[1.0, 0.0, 0.0, 1.0], &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(s.plan, vec![0.0, 0.5, 0.5, 0.0]);
        assert!(s.pivots >= 1);
    }

    #[test]
    fn degenerate_equal_masses() {
        // Every partial sum coincides; the perturbation keeps pivots finite.
        let n = 5;
        let mass = vec![0.2; n];
        let cost: Vec<f64> = (0..n * n)
            .map(|k| if k / n == (n - 1 - k % n) { 0.0 } else { 1.0 })
            .collect();
        let s = solve_transport(&cost, &mass, &mass).unwrap();
        assert!(s.objective.abs() < 1e-15);
    }

    #[test]
    fn rejections() {
        assert!(matches!(
            solve_transport(&[0.0, 0.0], &[1.0], &[0.5, 0.4]),
            Err(Error::Unbalanced { .. })
        ));
        assert!(matches!(
            solve_transport(&[f64::NAN], &[1.0], &[1.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(solve_transport(&[], &[], &[1.0]).is_err());
    }

    #[test]
    fn rectangular_marginals_hold() {
        let cost = [0.3, 0.1, 0.7, 0.2, 0.9, 0.4];
        let supply = [0.6, 0.4];
        let demand = [0.1, 0.5, 0.4];
        let s = solve_transport(&cost, &supply, &demand).unwrap();
        for i in 0..2 {
            let r: f64 = s.plan[i * 3..(i + 1) * 3].iter().sum();
            assert!((r - supply[i]).abs() < 1e-12);
        }
        for j in 0..3 {
            let c: f64 = (0..2).map(|i| s.plan[i * 3 + j]).sum();
            assert!((c - demand[j]).abs() < 1e-12);
        }
    }
}
