//! Dense two-phase tableau simplex with Bland's rule, used as an
//! independent oracle for transportation problems.

const TOL: f64 = 1e-11;

struct Tableau {
    rows: usize,
    cols: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.at(pr, pc);
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f == 0.0 {
                continue;
            }
            for c in 0..w {
                self.t[r * w + c] -= f * self.t[pr * w + c];
            }
        }
        self.basis[pr] = pc;
    }

    fn reduced(&self, cost: &[f64], c: usize) -> f64 {
        let mut z = 0.0;
        for r in 0..self.rows {
            z += cost[self.basis[r]] * self.at(r, c);
        }
        cost[c] - z
    }

    /// Minimizes `cost` over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize) {
        loop {
            let Some(pc) = (0..allowed).find(|&c| self.reduced(cost, c) < -TOL) else {
                return;
            };
            let mut best: Option<(f64, usize)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > TOL {
                    let ratio = self.rhs(r) / a;
                    match best {
                        Some((b, br))
                            if ratio > b + TOL
                                || (ratio >= b - TOL && self.basis[r] > self.basis[br]) => {}
                        _ => best = Some((ratio, r)),
                    }
                }
            }
            let (_, pr) = best.expect("transportation problems are bounded");
            self.pivot(pr, pc);
        }
    }
}

/// `min c^T x` s.t. `A x = b`, `x >= 0`, with `b >= 0` and `A` of full row
/// rank.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
    let (m, n) = (a.len(), c.len());
    let cols = n + m;
    let mut t = vec![0.0; m * (cols + 1)];
    for r in 0..m {
        for j in 0..n {
            t[r * (cols + 1) + j] = a[r][j];
        }
        t[r * (cols + 1) + n + r] = 1.0;
        t[r * (cols + 1) + cols] = b[r];
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (n..n + m).collect(),
    };
    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    tab.optimize(&phase1, cols);
    let infeasibility: f64 = (0..m)
        .filter(|&r| tab.basis[r] >= n)
        .map(|r| tab.rhs(r))
        .sum();
    assert!(infeasibility < 1e-9, "infeasible: {infeasibility}");
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(pc) = (0..n).find(|&c| tab.at(r, c).abs() > 1e-9) {
                tab.pivot(r, pc);
            }
        }
    }
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat_n(0.0, m));
    tab.optimize(&phase2, n);
    (0..m).map(|r| phase2[tab.basis[r]] * tab.rhs(r)).sum()
}

/// Optimal objective of the balanced transportation problem with row-major
/// `cost` (`supply.len() x demand.len()`).
pub fn transport_objective(cost: &[f64], supply: &[f64], demand: &[f64]) -> f64 {
    let (rq, cs) = (supply.len(), demand.len());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..rq {
        let mut row = vec![0.0; rq * cs];
        (0..cs).for_each(|j| row[i * cs + j] = 1.0);
        a.push(row);
        b.push(supply[i]);
    }
    // The last demand row is implied by balance.
    for j in 0..cs - 1 {
        let mut row = vec![0.0; rq * cs];
        (0..rq).for_each(|i| row[i * cs + j] = 1.0);
        a.push(row);
        b.push(demand[j]);
    }
    minimize(cost, &a, &b)
}
