//! Small dense two-phase simplex used by the pattern-enumeration oracle.
//!
//! Deliberately self-contained so the oracle shares no solving code with the
//! production backends it cross-checks. Sized for the oracle's per-pattern
//! programs (tens of rows); Bland's rule keeps it cycle-free.

use crate::error::{Error, Result};
use crate::milp::Sense;

/// One row: sparse terms, comparison sense, right-hand side.
pub(crate) type LpRow = (Vec<(usize, f64)>, Sense, f64);

#[derive(Debug, Clone)]
pub(crate) struct LpProblem {
    /// Per-variable bounds. Lower bounds must be finite; an infinite upper
    /// bound skips the bound row.
    pub bounds: Vec<(f64, f64)>,
    pub constraints: Vec<LpRow>,
    /// Maximized linear objective.
    pub objective: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome {
    Optimal { values: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

const FEAS_TOL: f64 = 1e-7;
const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

pub(crate) fn solve_lp(problem: &LpProblem) -> Result<LpOutcome> {
    let n = problem.bounds.len();
    for (i, &(lo, hi)) in problem.bounds.iter().enumerate() {
        if !lo.is_finite() {
            return Err(Error::Encoding(format!("variable {i} needs a finite lower bound")));
        }
        if hi < lo {
            return Ok(LpOutcome::Infeasible);
        }
    }

    // Shift every variable to y = x - lo >= 0 and collect rows.
    let lows: Vec<f64> = problem.bounds.iter().map(|b| b.0).collect();
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for (terms, sense, rhs) in &problem.constraints {
        let mut coeffs = vec![0.0; n];
        let mut shift = 0.0;
        for &(var, c) in terms {
            coeffs[var] += c;
            shift += c * lows[var];
        }
        rows.push((coeffs, *sense, rhs - shift));
    }
    for (i, &(lo, hi)) in problem.bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut coeffs = vec![0.0; n];
            coeffs[i] = 1.0;
            rows.push((coeffs, Sense::Le, hi - lo));
        }
    }

    // Normalize to nonnegative right-hand sides, then append slack/surplus
    // and artificial columns.
    let m = rows.len();
    let mut slack_cols = 0usize;
    for (coeffs, sense, rhs) in rows.iter_mut() {
        if *rhs < 0.0 {
            for c in coeffs.iter_mut() {
                *c = -*c;
            }
            *rhs = -*rhs;
            *sense = match *sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        if !matches!(sense, Sense::Eq) {
            slack_cols += 1;
        }
    }
    let art_cols = rows
        .iter()
        .filter(|(_, sense, _)| !matches!(sense, Sense::Le))
        .count();
    let total = n + slack_cols + art_cols;

    let mut tableau = vec![vec![0.0; total + 1]; m];
    let mut basis = vec![usize::MAX; m];
    let mut artificial_start = n + slack_cols;
    let mut next_slack = n;
    let mut next_art = artificial_start;
    for (r, (coeffs, sense, rhs)) in rows.iter().enumerate() {
        tableau[r][..n].copy_from_slice(coeffs);
        tableau[r][total] = *rhs;
        match sense {
            Sense::Le => {
                tableau[r][next_slack] = 1.0;
                basis[r] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                tableau[r][next_slack] = -1.0;
                next_slack += 1;
                tableau[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                tableau[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }
    }
    artificial_start = n + slack_cols;

    // Phase 1: minimize the sum of artificials.
    if art_cols > 0 {
        let mut cost = vec![0.0; total];
        for c in cost.iter_mut().skip(artificial_start) {
            *c = 1.0;
        }
        let value = run_simplex(&mut tableau, &mut basis, &cost, total, None)?;
        if value > FEAS_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // Pivot remaining artificials out where possible.
        for r in 0..m {
            if basis[r] >= artificial_start {
                if let Some(col) =
                    (0..artificial_start).find(|&j| tableau[r][j].abs() > PIVOT_TOL)
                {
                    pivot(&mut tableau, &mut basis, r, col);
                }
            }
        }
    }

    // Phase 2: minimize the negated objective over the original columns.
    let mut cost = vec![0.0; total];
    for &(var, c) in &problem.objective {
        cost[var] -= c;
    }
    let blocked = if art_cols > 0 { Some(artificial_start) } else { None };
    let value = run_simplex(&mut tableau, &mut basis, &cost, total, blocked)?;
    if !value.is_finite() {
        return Ok(LpOutcome::Unbounded);
    }

    let mut y = vec![0.0; total];
    for (r, &b) in basis.iter().enumerate() {
        if b < total {
            y[b] = tableau[r][total];
        }
    }
    let values: Vec<f64> = (0..n).map(|i| y[i] + lows[i]).collect();
    let objective = problem
        .objective
        .iter()
        .map(|&(var, c)| c * values[var])
        .sum();
    Ok(LpOutcome::Optimal { values, objective })
}

/// Runs the simplex on the tableau minimizing `cost`; returns the objective
/// value, or infinity when unbounded. Columns at or past `blocked` are never
/// entered.
fn run_simplex(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    total: usize,
    blocked: Option<usize>,
) -> Result<f64> {
    let m = tableau.len();
    let enterable = blocked.unwrap_or(total);

    // Reduced costs r_j = c_j - c_B^T (B^-1 A)_j from the current tableau.
    let mut reduced = cost.to_vec();
    let mut offset = 0.0;
    for r in 0..m {
        let cb = cost[basis[r]];
        if cb != 0.0 {
            offset += cb * tableau[r][total];
            for j in 0..total {
                reduced[j] -= cb * tableau[r][j];
            }
        }
    }

    for _ in 0..50_000 {
        // Bland: lowest-index column with a negative reduced cost.
        let Some(col) = (0..enterable).find(|&j| reduced[j] < -COST_TOL) else {
            return Ok(offset);
        };
        // Ratio test, lowest basis index on ties.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..m {
            if tableau[r][col] > PIVOT_TOL {
                let ratio = tableau[r][total] / tableau[r][col];
                if ratio < best - 1e-12
                    || (ratio < best + 1e-12
                        && leave.is_none_or(|lr| basis[r] < basis[lr]))
                {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(row) = leave else {
            return Ok(f64::INFINITY);
        };
        pivot(tableau, basis, row, col);
        // Update the reduced-cost row with the same elimination.
        let factor = reduced[col];
        if factor != 0.0 {
            for j in 0..total {
                reduced[j] -= factor * tableau[row][j];
            }
            offset += factor * tableau[row][total];
            reduced[col] = 0.0;
        }
    }
    Err(Error::Backend("simplex iteration limit reached".into()))
}

fn pivot(tableau: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let width = tableau[row].len();
    let p = tableau[row][col];
    for j in 0..width {
        tableau[row][j] /= p;
    }
    tableau[row][col] = 1.0;
    for r in 0..tableau.len() {
        if r != row {
            let factor = tableau[r][col];
            if factor != 0.0 {
                for j in 0..width {
                    tableau[r][j] -= factor * tableau[row][j];
                }
                tableau[r][col] = 0.0;
            }
        }
    }
    basis[row] = col;
}
