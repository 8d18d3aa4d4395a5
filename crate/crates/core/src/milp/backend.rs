//! Solver backends: in-process branch & bound, an external LP-file solver
//! process, and the pattern-enumeration oracle.

use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::milp::lp_file::{parse_solution_text, write_lp};
use crate::milp::oracle::enumerate_best;
use crate::milp::{MilpModel, RawSolution, Sense, SolveStatus, SolverBackend};

/// Default relative optimality gap.
pub const DEFAULT_GAP: f64 = 1e-4;

/// In-process branch & bound over the model's binaries.
#[derive(Debug, Clone)]
pub struct InProcessBackend {
    /// Relative gap at which the search may stop with an incumbent.
    pub mip_gap: f64,
}

impl Default for InProcessBackend {
    fn default() -> Self {
        InProcessBackend { mip_gap: DEFAULT_GAP }
    }
}

impl SolverBackend for InProcessBackend {
    fn name(&self) -> &str {
        "in-process"
    }

    fn solve_raw(&self, model: &MilpModel, time_limit: Duration) -> Result<RawSolution> {
        let mut problem = microlp::Problem::new(microlp::OptimizationDirection::Maximize);
        let objective: std::collections::HashMap<usize, f64> =
            model.objective.iter().cloned().collect();
        let vars: Vec<microlp::Variable> = model
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let coeff = objective.get(&i).copied().unwrap_or(0.0);
                if v.binary {
                    problem.add_binary_var(coeff)
                } else {
                    problem.add_var(coeff, (v.lower, v.upper))
                }
            })
            .collect();
        for c in &model.constraints {
            let op = match c.sense {
                Sense::Eq => microlp::ComparisonOp::Eq,
                Sense::Le => microlp::ComparisonOp::Le,
                Sense::Ge => microlp::ComparisonOp::Ge,
            };
            let terms: Vec<(microlp::Variable, f64)> =
                c.terms.iter().map(|&(i, coeff)| (vars[i], coeff)).collect();
            problem.add_constraint(terms, op, c.rhs);
        }

        let mut options = microlp::SolveOptions::default();
        options.time_limit = Some(time_limit);
        options.mip_gap = self.mip_gap;
        let outcome = match problem.solve_with(options) {
            Ok(outcome) => outcome,
            Err(microlp::Error::Infeasible) => {
                return Ok(RawSolution {
                    status: SolveStatus::Infeasible,
                    values: None,
                    objective: None,
                    gap: None,
                })
            }
            Err(e) => return Err(Error::Backend(format!("in-process solver: {e}"))),
        };
        match outcome {
            microlp::SolveOutcome::Solution(solution) => {
                let status = match solution.status() {
                    microlp::SolutionStatus::Optimal => SolveStatus::Optimal,
                    microlp::SolutionStatus::Feasible => SolveStatus::Feasible,
                };
                let values = vars.iter().map(|&v| solution.var_value(v)).collect();
                Ok(RawSolution {
                    status,
                    values: Some(values),
                    objective: Some(solution.objective()),
                    gap: solution.gap(),
                })
            }
            microlp::SolveOutcome::Interrupted(_) => Ok(RawSolution {
                status: SolveStatus::Timeout,
                values: None,
                objective: None,
                gap: None,
            }),
        }
    }
}

/// Reference external backend: writes the model as an LP file, invokes a
/// solver executable as `<path> <model.lp> solve solu <solution file>` and
/// parses the written solution file.
#[derive(Debug, Clone)]
pub struct ExternalLpBackend {
    pub solver_path: PathBuf,
    /// Directory for the model/solution files; a fresh temporary directory
    /// per solve when unset.
    pub work_dir: Option<PathBuf>,
}

impl ExternalLpBackend {
    pub fn new(solver_path: impl Into<PathBuf>) -> Self {
        ExternalLpBackend { solver_path: solver_path.into(), work_dir: None }
    }
}

impl SolverBackend for ExternalLpBackend {
    fn name(&self) -> &str {
        "external-lp"
    }

    fn solve_raw(&self, model: &MilpModel, _time_limit: Duration) -> Result<RawSolution> {
        let dir = match &self.work_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                dir.clone()
            }
            None => {
                let dir = std::env::temp_dir().join(format!(
                    "helio-aim-solve-{}-{:x}",
                    std::process::id(),
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_nanos())
                        .unwrap_or(0)
                ));
                std::fs::create_dir_all(&dir)?;
                dir
            }
        };
        let lp_path = dir.join("model.lp");
        let sol_path = dir.join("solution.txt");
        {
            let mut file = std::io::BufWriter::new(std::fs::File::create(&lp_path)?);
            write_lp(model, &mut file)?;
        }

        let output = Command::new(&self.solver_path)
            .arg(&lp_path)
            .arg("solve")
            .arg("solu")
            .arg(&sol_path)
            .output()
            .map_err(|e| {
                Error::Backend(format!(
                    "cannot launch solver {:?}: {e}",
                    self.solver_path
                ))
            })?;
        if !output.status.success() && !sol_path.exists() {
            return Err(Error::Backend(format!(
                "solver {:?} exited with {}: {}",
                self.solver_path,
                output.status,
                String::from_utf8_lossy(&output.stderr)
            )));
        }
        let text = std::fs::read_to_string(&sol_path).map_err(|e| {
            Error::Backend(format!("solver wrote no solution file {sol_path:?}: {e}"))
        })?;
        parse_solution_text(&text, model)
    }
}

/// Oracle-backed reference backend for small models.
#[derive(Debug, Clone, Default)]
pub struct EnumerationBackend;

impl SolverBackend for EnumerationBackend {
    fn name(&self) -> &str {
        "enumeration"
    }

    fn solve_raw(&self, model: &MilpModel, _time_limit: Duration) -> Result<RawSolution> {
        let ctx = &model.context;
        let best = enumerate_best(
            &ctx.weights,
            &ctx.biases,
            &ctx.x_bounds,
            &ctx.trust_region.points,
            ctx.epsilon,
        )?;
        let Some(outcome) = best else {
            return Ok(RawSolution {
                status: SolveStatus::Infeasible,
                values: None,
                objective: None,
                gap: None,
            });
        };

        // Reconstruct the full assignment: the pattern fixes each layer's
        // affine response, activities follow the pattern.
        let layout = &model.layout;
        let mut values = vec![0.0; model.vars.len()];
        for (j, &idx) in layout.x.iter().enumerate() {
            values[idx] = outcome.x_scaled[j];
        }
        let mut activation = ndarray::Array1::from_vec(outcome.x_scaled.clone());
        let hidden = ctx.weights.len() - 1;
        for l in 0..hidden {
            let z = ctx.weights[l].dot(&activation) + &ctx.biases[l];
            let mut a = z.clone();
            for (j, &active) in outcome.pattern[l].iter().enumerate() {
                values[layout.z[l][j]] = z[j];
                values[layout.sigma[l][j]] = if active { 1.0 } else { 0.0 };
                if !active {
                    a[j] = 0.0;
                }
                values[layout.a[l][j]] = a[j];
            }
            activation = a;
        }
        let z_out = ctx.weights[hidden].dot(&activation) + &ctx.biases[hidden];
        values[layout.z[hidden][0]] = z_out[0];
        values[layout.qs] = z_out[0];
        for (i, &idx) in layout.beta.iter().enumerate() {
            values[idx] = outcome.beta[i];
        }
        for (j, &idx) in layout.s.iter().enumerate() {
            values[idx] = outcome.s[j];
        }

        Ok(RawSolution {
            status: SolveStatus::Optimal,
            values: Some(values),
            objective: Some(z_out[0]),
            gap: Some(0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{encode, solve, TrustRegion};
    use crate::surrogate::{InputScaler, SurrogateModel, TargetScaler};
    use ndarray::{array, Array2};

    fn tiny_encoded() -> MilpModel {
        let model = SurrogateModel::from_parts(
            vec![array![[1.0]], array![[1.0]]],
            vec![array![0.0], array![0.0]],
            InputScaler { min: vec![0.0], max: vec![1.0] },
            TargetScaler { mean: 0.0, std: 1.0 },
        )
        .unwrap();
        let mut points = Array2::zeros((1, 1));
        points[[0, 0]] = 0.4;
        let tr = TrustRegion::from_scaled_points(points, 0.0).unwrap();
        encode(&model, &tr, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn enumeration_backend_solves_the_hand_model() {
        let encoded = tiny_encoded();
        let sol = solve(&encoded, &EnumerationBackend, Duration::from_secs(5)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.aim.unwrap().k[0] - 0.4).abs() < 1e-8);
        assert!((sol.objective.unwrap() - 0.4).abs() < 1e-8);
    }

    #[test]
    fn in_process_matches_enumeration_on_hand_model() {
        let encoded = tiny_encoded();
        let a = solve(&encoded, &EnumerationBackend, Duration::from_secs(5)).unwrap();
        let b = solve(&encoded, &InProcessBackend::default(), Duration::from_secs(5)).unwrap();
        assert!((a.objective.unwrap() - b.objective.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn missing_external_solver_is_backend_error() {
        let encoded = tiny_encoded();
        let backend = ExternalLpBackend::new("/nonexistent/solver-binary");
        let err = backend.solve_raw(&encoded, Duration::from_secs(1));
        assert!(matches!(err, Err(Error::Backend(_))));
    }
}
