//! Dense two-phase simplex for `min cᵀλ  s.t.  Aλ = b, λ ≥ 0`.
//!
//! Bland's rule throughout: problems here have at most a few dozen columns,
//! so anti-cycling matters more than pivot efficiency.

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    /// Phase-1 optimum: sum of absolute equality residuals.
    Infeasible { residual: f64 },
    Unbounded,
}

const PIVOT_EPS: f64 = 1e-12;

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pr = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, &q) in row.iter_mut().zip(&pr) {
                        *v -= f * q;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` over columns `< allowed`; returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        let m = self.rows.len();
        let rhs = self.width;
        for _ in 0..10_000 {
            // reduced costs
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let z: f64 = (0..m).map(|i| cost[self.basis[i]] * self.rows[i][j]).sum();
                cost[j] - z < -1e-11
            });
            let Some(j) = entering else { return true };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..m {
                let a = self.rows[i][j];
                if a > PIVOT_EPS {
                    let ratio = self.rows[i][rhs] / a;
                    let better = match best {
                        None => true,
                        Some((br, bb, _)) => ratio < br - 1e-14 || ((ratio - br).abs() <= 1e-14 && self.basis[i] < bb),
                    };
                    if better {
                        best = Some((ratio, self.basis[i], i));
                    }
                }
            }
            let Some((_, _, r)) = best else { return false };
            self.pivot(r, j);
        }
        true
    }
}

/// Solves the LP; `feas_tol` bounds the phase-1 residual for feasibility.
pub fn solve(c: &[f64], a: &[Vec<f64>], b: &[f64], feas_tol: f64) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, row) in a.iter().enumerate() {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r = vec![0.0; width + 1];
        for j in 0..n {
            r[j] = s * row[j];
        }
        r[n + i] = 1.0;
        r[width] = s * b[i];
        rows.push(r);
    }
    let mut t = Tableau { rows, basis: (n..n + m).collect(), width };
    let mut phase1 = vec![0.0; width];
    for v in phase1[n..].iter_mut() {
        *v = 1.0;
    }
    t.optimize(&phase1, width);
    let residual: f64 = (0..m).filter(|&i| t.basis[i] >= n).map(|i| t.rows[i][width].abs()).sum();
    if residual > feas_tol {
        return LpOutcome::Infeasible { residual };
    }
    // drive remaining (zero-level) artificials out of the basis
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !t.basis.contains(&j) && t.rows[i][j].abs() > 1e-9) {
                t.pivot(i, j);
            } else {
                t.rows.remove(i);
                t.basis.remove(i);
                continue;
            }
        }
        i += 1;
    }
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat(0.0).take(m));
    if !t.optimize(&cost, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            x[bv] = t.rows[i][width];
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_min_and_max() {
        // min/max of (1, 3, 2)·λ over the simplex
        let a = vec![vec![1.0, 1.0, 1.0]];
        match solve(&[1.0, 3.0, 2.0], &a, &[1.0], 1e-9) {
            LpOutcome::Optimal { value, .. } => assert!((value - 1.0).abs() < 1e-12),
            o => panic!("{o:?}"),
        }
        match solve(&[-1.0, -3.0, -2.0], &a, &[1.0], 1e-9) {
            LpOutcome::Optimal { value, x } => {
                assert!((value + 3.0).abs() < 1e-12);
                assert!((x[1] - 1.0).abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn infeasible_detected() {
        // λ ≥ 0, Σλ = 1, λ₁ + λ₂ = 2 is infeasible
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(solve(&[0.0, 0.0], &a, &[1.0, 2.0], 1e-9), LpOutcome::Infeasible { .. }));
    }

    #[test]
    fn redundant_rows_and_equality() {
        // Σλ = 1, λ₁ − λ₂ = 0 (twice): λ = (½, ½, 0) or mix with λ₃
        let a = vec![vec![1.0, 1.0, 1.0], vec![1.0, -1.0, 0.0], vec![2.0, -2.0, 0.0]];
        match solve(&[0.0, 0.0, 1.0], &a, &[1.0, 0.0, 0.0], 1e-9) {
            LpOutcome::Optimal { x, value } => {
                assert!(value.abs() < 1e-12);
                assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let a = vec![vec![1.0, -1.0]];
        assert_eq!(solve(&[-1.0, 0.0], &a, &[0.0], 1e-9), LpOutcome::Unbounded);
    }
}
