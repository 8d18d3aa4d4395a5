//! Exact optimum by rectifier-pattern enumeration.
//!
//! For every activity pattern the network restricted to that pattern is
//! affine, so the best point is found by a linear program over the factor
//! box, the pattern-consistency halfspaces and the trust region. The best
//! consistent pattern is the exact optimum of the mixed-integer program,
//! which makes this an independent test oracle for the backends.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::flux::AimVector;
use crate::milp::simplex::{solve_lp, LpOutcome, LpProblem, LpRow};
use crate::milp::{MilpSolution, Sense, SolveStatus, TrustRegion, VACUOUS_EPSILON};
use crate::surrogate::SurrogateModel;

/// Enumeration refuses above this many hidden neurons.
pub(crate) const MAX_ORACLE_NEURONS: usize = 15;

pub(crate) struct OracleOutcome {
    pub x_scaled: Vec<f64>,
    pub s: Vec<f64>,
    pub beta: Vec<f64>,
    pub pattern: Vec<Vec<bool>>,
    pub objective_scaled: f64,
}

/// Enumerates all rectifier patterns and maximizes each induced affine
/// objective over the feasible polytope; `None` when nothing is feasible.
pub(crate) fn enumerate_best(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    x_bounds: &[(f64, f64)],
    tr_points: &Array2<f64>,
    epsilon: f64,
) -> Result<Option<OracleOutcome>> {
    let hidden_widths: Vec<usize> =
        weights[..weights.len() - 1].iter().map(|w| w.nrows()).collect();
    let total_hidden: usize = hidden_widths.iter().sum();
    if total_hidden > MAX_ORACLE_NEURONS {
        return Err(Error::Encoding(format!(
            "enumeration oracle refuses {total_hidden} hidden neurons (limit {MAX_ORACLE_NEURONS})"
        )));
    }

    let n0 = x_bounds.len();
    let n_points = tr_points.nrows();
    let eps = epsilon.min(VACUOUS_EPSILON);

    // LP variable order: x, s, beta.
    let mut bounds: Vec<(f64, f64)> = Vec::with_capacity(n0 * 2 + n_points);
    bounds.extend_from_slice(x_bounds);
    bounds.extend(std::iter::repeat_n((-eps, eps), n0));
    bounds.extend(std::iter::repeat_n((0.0, f64::INFINITY), n_points));

    let mut base_constraints: Vec<LpRow> = Vec::new();
    for j in 0..n0 {
        let mut terms: Vec<(usize, f64)> = Vec::with_capacity(n_points + 2);
        for i in 0..n_points {
            let c = tr_points[[i, j]];
            if c != 0.0 {
                terms.push((2 * n0 + i, c));
            }
        }
        terms.push((j, -1.0));
        terms.push((n0 + j, -1.0));
        base_constraints.push((terms, Sense::Eq, 0.0));
    }
    base_constraints.push((
        (0..n_points).map(|i| (2 * n0 + i, 1.0)).collect(),
        Sense::Eq,
        1.0,
    ));

    let mut best: Option<OracleOutcome> = None;
    for mask in 0u32..(1u32 << total_hidden) {
        // Affine form of each layer under the pattern, plus its halfspaces.
        let mut coeff = weights[0].clone();
        let mut offset = biases[0].clone();
        let mut constraints = base_constraints.clone();
        let mut pattern: Vec<Vec<bool>> = Vec::with_capacity(hidden_widths.len());
        let mut bit = 0usize;
        for (l, &width) in hidden_widths.iter().enumerate() {
            let mut layer_pattern = Vec::with_capacity(width);
            for j in 0..width {
                let active = mask >> bit & 1 == 1;
                bit += 1;
                layer_pattern.push(active);
                let terms: Vec<(usize, f64)> = (0..n0)
                    .filter(|&i| coeff[[j, i]] != 0.0)
                    .map(|i| (i, coeff[[j, i]]))
                    .collect();
                let sense = if active { Sense::Ge } else { Sense::Le };
                constraints.push((terms, sense, -offset[j]));
            }
            // Mask inactive rows, then compose with the next layer.
            for (j, &active) in layer_pattern.iter().enumerate() {
                if !active {
                    coeff.row_mut(j).fill(0.0);
                    offset[j] = 0.0;
                }
            }
            coeff = weights[l + 1].dot(&coeff);
            offset = weights[l + 1].dot(&offset) + &biases[l + 1];
            pattern.push(layer_pattern);
        }

        let objective: Vec<(usize, f64)> = (0..n0)
            .filter(|&i| coeff[[0, i]] != 0.0)
            .map(|i| (i, coeff[[0, i]]))
            .collect();
        let lp = LpProblem { bounds: bounds.clone(), constraints, objective };
        match solve_lp(&lp)? {
            LpOutcome::Optimal { values, objective: lp_value } => {
                let total = lp_value + offset[0];
                if best.as_ref().is_none_or(|b| total > b.objective_scaled) {
                    best = Some(OracleOutcome {
                        x_scaled: values[..n0].to_vec(),
                        s: values[n0..2 * n0].to_vec(),
                        beta: values[2 * n0..].to_vec(),
                        pattern,
                        objective_scaled: total,
                    });
                }
            }
            LpOutcome::Infeasible => {}
            LpOutcome::Unbounded => {
                return Err(Error::Backend("pattern subproblem unbounded".into()));
            }
        }
    }
    Ok(best)
}

/// Exact optimum of the embedded program by full pattern enumeration.
///
/// Refuses models with more than [`MAX_ORACLE_NEURONS`] hidden neurons.
pub fn enumerate_oracle(
    model: &SurrogateModel,
    tr: &TrustRegion,
    k_bounds: (f64, f64),
) -> Result<MilpSolution> {
    if tr.points.ncols() != model.input_dim() {
        return Err(Error::Encoding(format!(
            "trust region has {} columns for a {}-input model",
            tr.points.ncols(),
            model.input_dim()
        )));
    }
    let x_bounds: Vec<(f64, f64)> = (0..model.input_dim())
        .map(|j| {
            (
                model.input_scaler.scale_dim(k_bounds.0, j),
                model.input_scaler.scale_dim(k_bounds.1, j),
            )
        })
        .collect();
    let best = enumerate_best(&model.weights, &model.biases, &x_bounds, &tr.points, tr.epsilon)?;
    Ok(match best {
        None => MilpSolution {
            status: SolveStatus::Infeasible,
            aim: None,
            objective: None,
            sigma: None,
            gap: None,
            raw_values: None,
        },
        Some(outcome) => MilpSolution {
            status: SolveStatus::Optimal,
            aim: Some(AimVector::new(model.input_scaler.unscale(&outcome.x_scaled))),
            objective: Some(model.target_scaler.unscale(outcome.objective_scaled)),
            sigma: Some(outcome.pattern),
            gap: Some(0.0),
            raw_values: None,
        },
    })
}
