//! Exact mixed-integer embedding of the trained surrogate.
//!
//! The encoded program maximizes the (scaled) predicted score subject to:
//! the affine layer equations, a big-M linearization of each rectifier with
//! one binary per hidden neuron, box bounds on the scaled aiming factors,
//! and a trust region keeping the solution inside the convex hull of the
//! training inputs dilated by an infinity-norm ball of radius epsilon.
//!
//! Everything is encoded in scaled units; solutions are mapped back to
//! aiming-factor and score units when extracted.

mod backend;
mod lp_file;
mod oracle;
mod simplex;

pub use backend::{EnumerationBackend, ExternalLpBackend, InProcessBackend};
pub use lp_file::{parse_solution_text, write_lp};
pub use oracle::enumerate_oracle;

use std::time::Duration;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flux::AimVector;
use crate::surrogate::{Dataset, InputScaler, LayerBounds, SurrogateModel, TargetScaler};

/// Any deviation radius at or above this value leaves the trust region
/// vacuous for scaled inputs, so larger (or infinite) radii are clamped here
/// to keep the encoded coefficients finite.
pub const VACUOUS_EPSILON: f64 = 8.0;

/// Trust region: the convex hull of scaled training inputs, dilated by an
/// infinity-norm ball of radius `epsilon` (also in scaled units).
#[derive(Debug, Clone)]
pub struct TrustRegion {
    /// Scaled training inputs, one row per point.
    pub points: Array2<f64>,
    pub epsilon: f64,
}

impl TrustRegion {
    pub fn from_scaled_points(points: Array2<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::Encoding(format!("invalid trust region: epsilon = {epsilon}")));
        }
        if points.nrows() == 0 {
            return Err(Error::Encoding("trust region needs at least one point".into()));
        }
        Ok(TrustRegion { points, epsilon })
    }

    /// Builds the region from a dataset's scaled inputs.
    pub fn from_dataset(data: &Dataset, epsilon: f64) -> Result<Self> {
        Self::from_scaled_points(data.scaled_inputs(), epsilon)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::from_scaled_points(self.points.clone(), epsilon)
    }

    /// Deterministic random subsample of at most `max_rows` points, keeping
    /// the column count of the encoded program bounded for large datasets.
    /// The reduced hull is a subset of the full one, so the restriction is
    /// conservative.
    pub fn subsample(&self, max_rows: usize, seed: u64) -> Self {
        if self.len() <= max_rows || max_rows == 0 {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        idx.truncate(max_rows);
        idx.sort_unstable();
        let mut points = Array2::zeros((max_rows, self.points.ncols()));
        for (row, &i) in idx.iter().enumerate() {
            points.row_mut(row).assign(&self.points.row(i));
        }
        TrustRegion { points, epsilon: self.epsilon }
    }

    /// Whether a scaled point lies within the region, checked directly by
    /// solving for the nearest convex combination is not necessary: a point
    /// is feasible iff its distance to the hull in the infinity norm is at
    /// most epsilon. This helper only performs the cheap sufficient check
    /// against individual points and is used for sampling feasible starts.
    pub fn near_any_point(&self, x: &[f64]) -> bool {
        let eps = self.epsilon.min(VACUOUS_EPSILON);
        self.points.rows().into_iter().any(|row| {
            row.iter().zip(x).all(|(a, b)| (a - b).abs() <= eps)
        })
    }
}

/// Variable roles of the encoded program.
#[derive(Debug, Clone)]
pub struct VarLayout {
    /// Scaled aiming factors, one per input dimension.
    pub x: Vec<usize>,
    /// Rectifier outputs per hidden layer.
    pub a: Vec<Vec<usize>>,
    /// Preactivations per layer (hidden layers then the output layer).
    pub z: Vec<Vec<usize>>,
    /// Rectifier activity binaries per hidden layer.
    pub sigma: Vec<Vec<usize>>,
    /// Convex-combination weights, one per trust-region point.
    pub beta: Vec<usize>,
    /// Hull deviation per input dimension.
    pub s: Vec<usize>,
    /// Objective variable (the scaled score).
    pub qs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
pub struct MilpVar {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

#[derive(Debug, Clone)]
pub struct MilpConstraint {
    pub name: String,
    /// `(variable index, coefficient)` pairs, each variable at most once.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Context carried with the model so backends and extraction can reason
/// about the structure rather than the flat constraint list.
#[derive(Debug, Clone)]
pub struct EncodeContext {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<ndarray::Array1<f64>>,
    pub bounds: Vec<LayerBounds>,
    pub input_scaler: InputScaler,
    pub target_scaler: TargetScaler,
    pub trust_region: TrustRegion,
    /// Box on the scaled aiming factors.
    pub x_bounds: Vec<(f64, f64)>,
    /// Deviation radius after clamping vacuous values.
    pub epsilon: f64,
}

/// The encoded maximization program.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub vars: Vec<MilpVar>,
    pub constraints: Vec<MilpConstraint>,
    /// Maximized linear objective as `(variable index, coefficient)` pairs.
    pub objective: Vec<(usize, f64)>,
    pub layout: VarLayout,
    pub context: EncodeContext,
}

impl MilpModel {
    pub fn binary_count(&self) -> usize {
        self.vars.iter().filter(|v| v.binary).count()
    }
}

/// Solve status reported by a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
}

/// Raw backend result: a full variable assignment when one exists.
#[derive(Debug, Clone)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub gap: Option<f64>,
}

/// A solved aiming program in original units.
#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Optimal aiming factors (when a solution exists).
    pub aim: Option<AimVector>,
    /// Objective in score units.
    pub objective: Option<f64>,
    /// Rectifier activity pattern per hidden layer.
    pub sigma: Option<Vec<Vec<bool>>>,
    /// Relative optimality gap reported by the backend.
    pub gap: Option<f64>,
    /// Full scaled assignment in model variable order, for diagnostics.
    pub raw_values: Option<Vec<f64>>,
}

impl MilpSolution {
    fn empty(status: SolveStatus, gap: Option<f64>) -> Self {
        MilpSolution { status, aim: None, objective: None, sigma: None, gap, raw_values: None }
    }

    pub fn has_solution(&self) -> bool {
        self.aim.is_some()
    }
}

/// Backends accept the abstract model and return an assignment with a
/// status and optional optimality gap.
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve_raw(&self, model: &MilpModel, time_limit: Duration) -> Result<RawSolution>;
}

/// Encodes the surrogate, trust region and factor box into the program.
///
/// One binary and one big-M triple per hidden neuron; the network equations
/// tie the layers together; the hull constraints tie the scaled factors to a
/// convex combination of trust-region points up to the deviation `s` with
/// `|s_j| <= epsilon` written as two inequalities per dimension.
pub fn encode(
    model: &SurrogateModel,
    tr: &TrustRegion,
    k_bounds: (f64, f64),
) -> Result<MilpModel> {
    if model.bounds.len() != model.weights.len() {
        return Err(Error::Encoding("surrogate is missing preactivation bounds".into()));
    }
    if tr.points.ncols() != model.input_dim() {
        return Err(Error::Encoding(format!(
            "trust region has {} columns for a {}-input model",
            tr.points.ncols(),
            model.input_dim()
        )));
    }
    if !(tr.epsilon >= 0.0) {
        return Err(Error::Encoding(format!("invalid trust region: epsilon = {}", tr.epsilon)));
    }

    let n0 = model.input_dim();
    let hidden = model.hidden_layer_count();
    let n_points = tr.len();
    let epsilon = tr.epsilon.min(VACUOUS_EPSILON);
    let x_bounds: Vec<(f64, f64)> = (0..n0)
        .map(|j| {
            (
                model.input_scaler.scale_dim(k_bounds.0, j),
                model.input_scaler.scale_dim(k_bounds.1, j),
            )
        })
        .collect();

    let mut vars: Vec<MilpVar> = Vec::new();
    let push_var = |name: String, lower: f64, upper: f64, binary: bool, vars: &mut Vec<MilpVar>| {
        vars.push(MilpVar { name, lower, upper, binary });
        vars.len() - 1
    };

    let x: Vec<usize> = (0..n0)
        .map(|j| push_var(format!("x_{}", j + 1), x_bounds[j].0, x_bounds[j].1, false, &mut vars))
        .collect();

    let mut z: Vec<Vec<usize>> = Vec::with_capacity(hidden + 1);
    let mut a: Vec<Vec<usize>> = Vec::with_capacity(hidden);
    let mut sigma: Vec<Vec<usize>> = Vec::with_capacity(hidden);
    for l in 0..hidden {
        let widths = model.weights[l].nrows();
        let lb = &model.bounds[l];
        let z_l = (0..widths)
            .map(|j| {
                push_var(
                    format!("z_{}_{}", l + 1, j + 1),
                    lb.lower[j],
                    lb.upper[j],
                    false,
                    &mut vars,
                )
            })
            .collect();
        let a_l = (0..widths)
            .map(|j| {
                push_var(
                    format!("a_{}_{}", l + 1, j + 1),
                    0.0,
                    lb.upper[j].max(0.0),
                    false,
                    &mut vars,
                )
            })
            .collect();
        let s_l = (0..widths)
            .map(|j| push_var(format!("sig_{}_{}", l + 1, j + 1), 0.0, 1.0, true, &mut vars))
            .collect();
        z.push(z_l);
        a.push(a_l);
        sigma.push(s_l);
    }
    let out_bounds = &model.bounds[hidden];
    let z_out = vec![push_var(
        format!("z_{}_1", hidden + 1),
        out_bounds.lower[0],
        out_bounds.upper[0],
        false,
        &mut vars,
    )];
    z.push(z_out);
    let qs = push_var("qs".into(), out_bounds.lower[0], out_bounds.upper[0], false, &mut vars);
    let beta: Vec<usize> = (0..n_points)
        .map(|i| push_var(format!("beta_{}", i + 1), 0.0, 1.0, false, &mut vars))
        .collect();
    let s: Vec<usize> = (0..n0)
        .map(|j| {
            push_var(format!("s_{}", j + 1), f64::NEG_INFINITY, f64::INFINITY, false, &mut vars)
        })
        .collect();

    let mut constraints: Vec<MilpConstraint> = Vec::new();

    // Affine layer equations z^l = W^l a^{l-1} + b^l with a^0 = x.
    for l in 0..=hidden {
        let w = &model.weights[l];
        let b = &model.biases[l];
        let inputs: &[usize] = if l == 0 { &x } else { &a[l - 1] };
        for j in 0..w.nrows() {
            let mut terms = vec![(z[l][j], 1.0)];
            for (i, &input) in inputs.iter().enumerate() {
                let wij = w[[j, i]];
                if wij != 0.0 {
                    terms.push((input, -wij));
                }
            }
            constraints.push(MilpConstraint {
                name: format!("zdef_{}_{}", l + 1, j + 1),
                terms,
                sense: Sense::Eq,
                rhs: b[j],
            });
        }
    }

    // Objective tie.
    constraints.push(MilpConstraint {
        name: "out_tie".into(),
        terms: vec![(qs, 1.0), (z[hidden][0], -1.0)],
        sense: Sense::Eq,
        rhs: 0.0,
    });

    // Rectifier big-M triples.
    for l in 0..hidden {
        let lb = &model.bounds[l];
        for j in 0..model.weights[l].nrows() {
            let (m_minus, m_plus) = (lb.lower[j], lb.upper[j]);
            constraints.push(MilpConstraint {
                name: format!("relu_lb_{}_{}", l + 1, j + 1),
                terms: vec![(a[l][j], 1.0), (z[l][j], -1.0)],
                sense: Sense::Ge,
                rhs: 0.0,
            });
            constraints.push(MilpConstraint {
                name: format!("relu_ub_{}_{}", l + 1, j + 1),
                terms: vec![(a[l][j], 1.0), (z[l][j], -1.0), (sigma[l][j], -m_minus)],
                sense: Sense::Le,
                rhs: -m_minus,
            });
            constraints.push(MilpConstraint {
                name: format!("relu_cap_{}_{}", l + 1, j + 1),
                terms: vec![(a[l][j], 1.0), (sigma[l][j], -m_plus)],
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
    }

    // Convex-combination tie per input dimension.
    for j in 0..n0 {
        let mut terms: Vec<(usize, f64)> = Vec::with_capacity(n_points + 2);
        for (i, &b) in beta.iter().enumerate() {
            let coeff = tr.points[[i, j]];
            if coeff != 0.0 {
                terms.push((b, coeff));
            }
        }
        terms.push((x[j], -1.0));
        terms.push((s[j], -1.0));
        constraints.push(MilpConstraint {
            name: format!("hull_{}", j + 1),
            terms,
            sense: Sense::Eq,
            rhs: 0.0,
        });
    }

    // Simplex constraint on the combination weights.
    constraints.push(MilpConstraint {
        name: "simplex".into(),
        terms: beta.iter().map(|&b| (b, 1.0)).collect(),
        sense: Sense::Eq,
        rhs: 1.0,
    });

    // Infinity-norm relaxation as two inequalities per dimension.
    for j in 0..n0 {
        constraints.push(MilpConstraint {
            name: format!("eps_hi_{}", j + 1),
            terms: vec![(s[j], 1.0)],
            sense: Sense::Le,
            rhs: epsilon,
        });
        constraints.push(MilpConstraint {
            name: format!("eps_lo_{}", j + 1),
            terms: vec![(s[j], -1.0)],
            sense: Sense::Le,
            rhs: epsilon,
        });
    }

    let layout = VarLayout { x, a, z, sigma, beta, s, qs };
    let objective = vec![(qs, 1.0)];
    let context = EncodeContext {
        weights: model.weights.clone(),
        biases: model.biases.clone(),
        bounds: model.bounds.clone(),
        input_scaler: model.input_scaler.clone(),
        target_scaler: model.target_scaler.clone(),
        trust_region: tr.clone(),
        x_bounds,
        epsilon,
    };
    Ok(MilpModel { vars, constraints, objective, layout, context })
}

/// Solves the encoded program through a backend and maps the assignment
/// back to aiming-factor and score units.
///
/// Infeasibility is a status, not an error. The returned rectifier pattern
/// is verified against the preactivations: an active neuron must satisfy
/// `a = z >= 0`, an inactive one `a = 0, z <= 0`, within 1e-6.
pub fn solve(
    model: &MilpModel,
    backend: &dyn SolverBackend,
    time_limit: Duration,
) -> Result<MilpSolution> {
    let raw = backend.solve_raw(model, time_limit)?;
    let values = match (raw.status, raw.values) {
        (SolveStatus::Infeasible, _) => return Ok(MilpSolution::empty(SolveStatus::Infeasible, raw.gap)),
        (SolveStatus::Timeout, None) => return Ok(MilpSolution::empty(SolveStatus::Timeout, raw.gap)),
        (_, None) => {
            return Err(Error::Backend(format!(
                "{} reported {:?} without an assignment",
                backend.name(),
                raw.status
            )))
        }
        (_, Some(values)) => values,
    };
    if values.len() != model.vars.len() {
        return Err(Error::Backend(format!(
            "{} returned {} values for {} variables",
            backend.name(),
            values.len(),
            model.vars.len()
        )));
    }

    let layout = &model.layout;
    let mut sigma = Vec::with_capacity(layout.sigma.len());
    for (l, layer) in layout.sigma.iter().enumerate() {
        let mut pattern = Vec::with_capacity(layer.len());
        for (j, &idx) in layer.iter().enumerate() {
            let active = values[idx] > 0.5;
            let a = values[layout.a[l][j]];
            let z = values[layout.z[l][j]];
            let consistent = if active {
                (a - z).abs() <= 1e-6 && z >= -1e-6
            } else {
                a.abs() <= 1e-6 && z <= 1e-6
            };
            if !consistent {
                return Err(Error::Backend(format!(
                    "{}: rectifier pattern inconsistent at layer {} neuron {}: sigma={}, a={a}, z={z}",
                    backend.name(),
                    l + 1,
                    j + 1,
                    values[idx]
                )));
            }
            pattern.push(active);
        }
        sigma.push(pattern);
    }

    let scaler = &model.context.input_scaler;
    let aim: Vec<f64> = layout
        .x
        .iter()
        .enumerate()
        .map(|(j, &idx)| scaler.unscale_dim(values[idx], j))
        .collect();
    let objective = model.context.target_scaler.unscale(values[layout.qs]);

    Ok(MilpSolution {
        status: raw.status,
        aim: Some(AimVector::new(aim)),
        objective: Some(objective),
        sigma: Some(sigma),
        gap: raw.gap,
        raw_values: Some(values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn identity_model(weight: f64, bias: f64) -> SurrogateModel {
        SurrogateModel::from_parts(
            vec![array![[weight]], array![[1.0]]],
            vec![array![bias], array![0.0]],
            InputScaler { min: vec![0.0], max: vec![1.0] },
            TargetScaler { mean: 0.0, std: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn binary_and_constraint_counts_match_architecture() {
        let model = SurrogateModel::from_parts(
            vec![Array2::from_elem((50, 3), 0.1), Array2::from_elem((1, 50), 0.2)],
            vec![Array1::zeros(50), Array1::zeros(1)],
            InputScaler::from_box(3, 0.0, 3.0).unwrap(),
            TargetScaler { mean: 0.0, std: 1.0 },
        )
        .unwrap();
        let tr = TrustRegion::from_scaled_points(Array2::from_elem((4, 3), 0.5), 0.1).unwrap();
        let encoded = encode(&model, &tr, (0.0, 3.0)).unwrap();
        assert_eq!(encoded.binary_count(), 50);
        let relu_rows = encoded
            .constraints
            .iter()
            .filter(|c| c.name.starts_with("relu_"))
            .count();
        assert_eq!(relu_rows, 3 * 50);
        let hulls = encoded.constraints.iter().filter(|c| c.name.starts_with("hull_")).count();
        assert_eq!(hulls, 3);
    }

    #[test]
    fn zero_epsilon_pins_solution_to_the_hull() {
        let model = identity_model(1.0, 0.0);
        let mut points = Array2::zeros((1, 1));
        points[[0, 0]] = 0.4;
        let tr = TrustRegion::from_scaled_points(points, 0.0).unwrap();
        let encoded = encode(&model, &tr, (0.0, 1.0)).unwrap();
        let backend = InProcessBackend::default();
        let sol = solve(&encoded, &backend, Duration::from_secs(10)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let aim = sol.aim.unwrap();
        assert!((aim.k[0] - 0.4).abs() < 1e-7, "{:?}", aim);
        assert!((sol.objective.unwrap() - 0.4).abs() < 1e-7);
    }

    #[test]
    fn inverted_factor_box_is_infeasible_status() {
        let model = identity_model(1.0, 0.0);
        let mut points = Array2::zeros((1, 1));
        points[[0, 0]] = 0.4;
        let tr = TrustRegion::from_scaled_points(points, 1.0).unwrap();
        let encoded = encode(&model, &tr, (0.9, 0.1)).unwrap();
        let backend = InProcessBackend::default();
        let sol = solve(&encoded, &backend, Duration::from_secs(10)).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(!sol.has_solution());
    }

    #[test]
    fn negative_epsilon_is_rejected() {
        let points = Array2::zeros((1, 1));
        assert!(TrustRegion::from_scaled_points(points, -0.5).is_err());
    }

    #[test]
    fn subsample_is_deterministic_and_bounded() {
        let points = Array2::from_shape_fn((100, 2), |(i, j)| (i * 2 + j) as f64 / 200.0);
        let tr = TrustRegion::from_scaled_points(points, 0.1).unwrap();
        let a = tr.subsample(10, 5);
        let b = tr.subsample(10, 5);
        assert_eq!(a.len(), 10);
        assert_eq!(a.points, b.points);
        let full = tr.subsample(200, 5);
        assert_eq!(full.len(), 100);
    }
}
