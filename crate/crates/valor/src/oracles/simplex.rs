//! Dense two-phase simplex for the tiny box-constrained programs solved by
//! the tabular linear-program path.
//!
//! Solves `max c.x  s.t.  A x <= b, 0 <= x <= u` with Bland's rule for
//! anti-cycling. Problem sizes here are a handful of variables and at most
//! a few hundred rows, so a dense tableau is the simplest correct choice.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpSolution {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// Maximize `objective . x` subject to `rows[i].0 . x <= rows[i].1`,
/// `0 <= x[j] <= upper[j]`.
pub fn maximize_box(objective: &[f64], rows: &[(Vec<f64>, f64)], upper: &[f64]) -> LpSolution {
    let n = objective.len();
    debug_assert_eq!(upper.len(), n);
    debug_assert!(rows.iter().all(|(a, _)| a.len() == n));

    // Fold upper bounds in as ordinary rows.
    let mut all_rows: Vec<(Vec<f64>, f64)> = rows.to_vec();
    for (j, &u) in upper.iter().enumerate() {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        all_rows.push((a, u));
    }
    let m = all_rows.len();

    // Columns: n structural, m slacks, then artificials for rows whose rhs
    // is negative after slack insertion.
    let art_rows: Vec<usize> = (0..m).filter(|&i| all_rows[i].1 < 0.0).collect();
    let n_art = art_rows.len();
    let total = n + m + n_art;

    let mut a = vec![vec![0.0; total + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art_of_row = vec![None; m];
    let mut next_art = 0usize;
    for i in 0..m {
        let (row, b) = &all_rows[i];
        let neg = *b < 0.0;
        let sign = if neg { -1.0 } else { 1.0 };
        for j in 0..n {
            a[i][j] = sign * row[j];
        }
        a[i][n + i] = sign; // slack
        a[i][total] = sign * *b;
        if neg {
            let col = n + m + next_art;
            next_art += 1;
            a[i][col] = 1.0;
            basis[i] = col;
            art_of_row[i] = Some(col);
        } else {
            basis[i] = n + i;
        }
    }

    let is_artificial = |j: usize| j >= n + m;

    if n_art > 0 {
        // Phase 1: maximize minus the sum of artificials.
        let mut obj = vec![0.0; total + 1];
        for i in 0..m {
            if art_of_row[i].is_some() {
                for j in 0..=total {
                    obj[j] += a[i][j];
                }
            }
        }
        for j in (n + m)..total {
            obj[j] = 0.0;
        }
        if !run_simplex(&mut a, &mut obj, &mut basis, &|_| true) {
            return LpSolution::Unbounded; // cannot happen in phase 1
        }
        if obj[total].abs() > 1e-7 {
            return LpSolution::Infeasible;
        }
        // Drive artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < a.len() {
            if is_artificial(basis[i]) {
                if let Some(col) = (0..n + m).find(|&j| a[i][j].abs() > EPS) {
                    pivot(&mut a, &mut basis, None, i, col);
                    i += 1;
                } else {
                    a.remove(i);
                    basis.remove(i);
                }
            } else {
                i += 1;
            }
        }
    }

    // Phase 2: the real objective, reduced against the current basis.
    let mut obj = vec![0.0; total + 1];
    obj[..n].copy_from_slice(objective);
    for i in 0..a.len() {
        let coeff = obj[basis[i]];
        if coeff != 0.0 {
            for j in 0..=total {
                obj[j] -= coeff * a[i][j];
            }
        }
    }
    if !run_simplex(&mut a, &mut obj, &mut basis, &|j| !is_artificial(j)) {
        return LpSolution::Unbounded;
    }

    let mut x = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = a[i][total].max(0.0);
        }
    }
    LpSolution::Optimal {
        x,
        objective: -obj[total],
    }
}

fn pivot(a: &mut [Vec<f64>], basis: &mut [usize], obj: Option<&mut Vec<f64>>, row: usize, col: usize) {
    let p = a[row][col];
    for v in a[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = a[row].clone();
    for (i, r) in a.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    if let Some(obj) = obj {
        let f = obj[col];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
    basis[row] = col;
}

/// Bland-rule simplex on a tableau in canonical form. Returns false on
/// unboundedness.
fn run_simplex(
    a: &mut Vec<Vec<f64>>,
    obj: &mut Vec<f64>,
    basis: &mut Vec<usize>,
    allowed: &dyn Fn(usize) -> bool,
) -> bool {
    let total = obj.len() - 1;
    loop {
        let Some(enter) = (0..total).find(|&j| allowed(j) && obj[j] > EPS) else {
            return true;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..a.len() {
            if a[i][enter] > EPS {
                let ratio = a[i][total] / a[i][enter];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best - EPS || (ratio < best + EPS && basis[i] < basis[l])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(l) = leave else {
            return false;
        };
        pivot(a, basis, Some(obj), l, enter);
    }
}
