//! Dense tableau simplex for `max c^T x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The slack basis is feasible, so no phase one is needed. Entering columns follow
//! Dantzig's rule with smallest-index tie-breaking; after a run of degenerate pivots the
//! solver switches to Bland's rule, which cannot cycle.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Indices of basic variables (structural `< n`, slack `>= n`).
    pub basis: Vec<usize>,
    pub pivots: usize,
}

/// Solves the LP; `a` is m×n, `b` has length m, `c` has length n.
pub fn solve_max(a: &DMatrix<f64>, b: &[f64], c: &[f64], max_pivots: usize) -> Result<LpSolution> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return Err(Error::Dimension("LP data shapes disagree".into()));
    }
    if b.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("right-hand side must be non-negative".into()));
    }
    let cols = n + m + 1;
    let rhs = n + m;
    // Rows 0..m are constraints; row m holds reduced costs (negated objective).
    let mut t = DMatrix::zeros(m + 1, cols);
    for i in 0..m {
        for j in 0..n {
            t[(i, j)] = a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, rhs)] = b[i];
    }
    for j in 0..n {
        t[(m, j)] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut pivots = 0;
    let mut degenerate_run = 0;
    loop {
        let bland = degenerate_run >= DEGENERATE_RUN;
        let mut enter = None;
        let mut best = -EPS;
        for j in 0..n + m {
            let r = t[(m, j)];
            if bland {
                if r < -EPS {
                    enter = Some(j);
                    break;
                }
            } else if r < best {
                best = r;
                enter = Some(j);
            }
        }
        let Some(e) = enter else { break };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let p = t[(i, e)];
            if p > EPS {
                let ratio = t[(i, rhs)] / p;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best_ratio - EPS || (ratio <= best_ratio + EPS && basis[i] < basis[l]),
                };
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(l) = leave else {
            return Err(Error::Degenerate("LP is unbounded".into()));
        };
        if pivots >= max_pivots {
            return Err(Error::IterationCap(max_pivots));
        }
        if best_ratio.abs() <= EPS {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        pivot(&mut t, l, e);
        basis[l] = e;
        pivots += 1;
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[(i, rhs)].max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpSolution { x, objective, basis, pivots })
}

fn pivot(t: &mut DMatrix<f64>, row: usize, col: usize) {
    let p = t[(row, col)];
    let cols = t.ncols();
    for j in 0..cols {
        t[(row, j)] /= p;
    }
    t[(row, col)] = 1.0;
    for i in 0..t.nrows() {
        if i == row {
            continue;
        }
        let f = t[(i, col)];
        if f != 0.0 {
            for j in 0..cols {
                let v = t[(row, j)];
                if v != 0.0 {
                    t[(i, j)] -= f * v;
                }
            }
            t[(i, col)] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 3.0, 2.0]);
        let s = solve_max(&a, &[4.0, 12.0, 18.0], &[3.0, 5.0], 100).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!(solve_max(&a, &[1.0], &[0.0, 1.0], 100).is_err());
    }

    #[test]
    fn iteration_cap() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 3.0, 2.0]);
        assert!(matches!(solve_max(&a, &[4.0, 12.0, 18.0], &[3.0, 5.0], 1), Err(Error::IterationCap(1))));
    }
}
