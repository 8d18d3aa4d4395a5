//! Dataset generation: random aiming factors scored with the true flux model.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flux::AimVector;
use crate::optimizer::QsEvaluator;
use crate::surrogate::Dataset;

/// Distribution of the first iteration's samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    Uniform,
    Normal,
}

/// Sampling plan for the iterative procedure.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// First-iteration distribution.
    pub mode: SamplerMode,
    /// Uniform limits for the first iteration.
    pub uniform_range: (f64, f64),
    /// Normal mean for a normal first iteration.
    pub normal_mean: f64,
    /// Normal standard deviation; also the refinement spread around the
    /// incumbent in later iterations.
    pub normal_sigma: f64,
    /// Geometric decay of the refinement spread: iteration `t` samples with
    /// `normal_sigma * refine_decay^(t - 2)`, narrowing the search as the
    /// incumbent stabilizes. 1.0 keeps the spread constant.
    pub refine_decay: f64,
    /// Dataset size of the first iteration.
    pub size_base: usize,
    /// Dataset growth per iteration.
    pub size_step: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: SamplerMode::Uniform,
            uniform_range: (0.0, 3.0),
            normal_mean: 1.5,
            normal_sigma: 0.4,
            refine_decay: 0.65,
            size_base: 3000,
            size_step: 1000,
        }
    }
}

impl SamplerConfig {
    /// Dataset size of iteration `t` (1-based): non-decreasing in `t`.
    pub fn size_at(&self, t: usize) -> usize {
        self.size_base + self.size_step * (t - 1)
    }

    pub fn validate(&self, k_min: f64, k_max: f64) -> Result<()> {
        let (a, b) = self.uniform_range;
        if !(a < b && a >= k_min - 1e-12 && b <= k_max + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "uniform range [{a}, {b}] must sit inside [{k_min}, {k_max}]"
            )));
        }
        if !(self.normal_sigma >= 0.0) {
            return Err(Error::InvalidConfig("normal_sigma must be >= 0".into()));
        }
        if !(self.refine_decay > 0.0 && self.refine_decay <= 1.0) {
            return Err(Error::InvalidConfig("refine_decay must be in (0, 1]".into()));
        }
        if self.size_base == 0 {
            return Err(Error::InvalidConfig("size_base must be > 0".into()));
        }
        Ok(())
    }
}

/// Draws from a normal truncated to `[lo, hi]` by rejection, falling back to
/// clamping when the acceptance region is far in the tail.
fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    if sigma <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let normal = Normal::new(mean, sigma).expect("finite sigma");
    for _ in 0..100 {
        let x = normal.sample(rng);
        if x >= lo && x <= hi {
            return x;
        }
    }
    normal.sample(rng).clamp(lo, hi)
}

/// Generates and scores one iteration's dataset.
///
/// Iteration 1 samples the configured distribution over the factor box;
/// later iterations sample a truncated normal centered on the incumbent.
/// Every sample is scored with the true quality evaluator; the evaluations
/// fan out over threads and join in sample order, so the dataset is
/// deterministic for a fixed seed.
pub fn generate_data(
    t: usize,
    n: usize,
    incumbent: Option<&AimVector>,
    cfg: &SamplerConfig,
    evaluator: &QsEvaluator,
    seed: u64,
) -> Result<Dataset> {
    if t == 0 {
        return Err(Error::InvalidConfig("iteration index is 1-based".into()));
    }
    let (k_min, k_max) = evaluator.k_bounds();
    cfg.validate(k_min, k_max)?;
    let dims = evaluator.group_count();
    if dims == 0 {
        return Err(Error::InvalidConfig("field has no aiming groups".into()));
    }
    let incumbent = match (t, incumbent) {
        (1, _) => None,
        (_, Some(aim)) => {
            if aim.len() != dims {
                return Err(Error::Shape(format!(
                    "incumbent has {} entries, field has {dims} groups",
                    aim.len()
                )));
            }
            Some(aim)
        }
        (_, None) => {
            return Err(Error::InvalidConfig(
                "refinement iterations need the incumbent solution".into(),
            ))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Array2::zeros((n, dims));
    for mut row in inputs.rows_mut() {
        match incumbent {
            None => match cfg.mode {
                SamplerMode::Uniform => {
                    let (a, b) = cfg.uniform_range;
                    for v in row.iter_mut() {
                        *v = rng.random_range(a..=b);
                    }
                }
                SamplerMode::Normal => {
                    for v in row.iter_mut() {
                        *v = truncated_normal(&mut rng, cfg.normal_mean, cfg.normal_sigma, k_min, k_max);
                    }
                }
            },
            Some(center) => {
                let sigma = cfg.normal_sigma * cfg.refine_decay.powi(t as i32 - 2);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = truncated_normal(&mut rng, center.k[j], sigma, k_min, k_max);
                }
            }
        }
    }

    let targets: Result<Vec<f64>> = inputs
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|row| evaluator.quality(&AimVector::new(row.to_vec())))
        .collect();
    let targets = Array1::from_vec(targets?);
    Dataset::new(inputs, targets, k_min, k_max)
}
