//! Run configuration file: one strict TOML document per run.
//!
//! Unknown keys are rejected everywhere so a run is always exhaustively
//! described by its file. Most values have defaults; the plant section is
//! the only mandatory part.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use helio_aim::optimizer::{OptimizeConfig, SamplerConfig, SamplerMode};
use helio_aim::plant::PlantConfig;
use helio_aim::surrogate::Hyperparams;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSection,
    #[serde(default)]
    pub sun: SunSection,
    #[serde(default)]
    pub score: ScoreSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub receiver: ReceiverSection,
    pub field: FieldSection,
    pub errors: ErrorsSection,
    pub mesh: MeshSection,
    #[serde(default)]
    pub aiming: AimingSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    pub height: f64,
    pub diameter: f64,
    pub panels: usize,
    pub panel_width: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub tower_optical_height: f64,
    pub heliostat_mirror_area: f64,
    pub heliostat_count: usize,
    pub latitude: f64,
    #[serde(default)]
    pub layout_seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorsSection {
    pub sigma_sun_mrad: f64,
    pub sigma_slope_mrad: f64,
    #[serde(default)]
    pub sigma_tracking_mrad: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub vertical: usize,
    pub horizontal: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimingSection {
    #[serde(default = "default_k_min")]
    pub k_min: f64,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
}

impl Default for AimingSection {
    fn default() -> Self {
        AimingSection { k_min: default_k_min(), k_max: default_k_max() }
    }
}

fn default_k_min() -> f64 {
    0.0
}
fn default_k_max() -> f64 {
    3.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SunSection {
    #[serde(default = "default_day")]
    pub day_of_year: u32,
    #[serde(default = "default_hours")]
    pub hours: Vec<f64>,
}

impl Default for SunSection {
    fn default() -> Self {
        SunSection { day_of_year: default_day(), hours: default_hours() }
    }
}

fn default_day() -> u32 {
    helio_aim::plant::EQUINOX_DAY
}
fn default_hours() -> Vec<f64> {
    vec![8.0, 10.0, 12.0]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_central_fraction")]
    pub central_fraction: f64,
}

impl Default for ScoreSection {
    fn default() -> Self {
        ScoreSection { lambda: default_lambda(), central_fraction: default_central_fraction() }
    }
}

fn default_lambda() -> f64 {
    5000.0
}
fn default_central_fraction() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stop_rel")]
    pub stop_rel_improvement: f64,
    #[serde(default = "default_stop_patience")]
    pub stop_patience: usize,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub training: TrainingSection,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            iterations: default_iterations(),
            epsilons: default_epsilons(),
            seed: 0,
            stop_rel_improvement: default_stop_rel(),
            stop_patience: default_stop_patience(),
            sampler: SamplerSection::default(),
            training: TrainingSection::default(),
        }
    }
}

fn default_iterations() -> usize {
    6
}
fn default_epsilons() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2, 0.5]
}
fn default_stop_rel() -> f64 {
    0.005
}
fn default_stop_patience() -> usize {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default = "default_mode")]
    pub mode: SamplerMode,
    #[serde(default = "default_uniform_a")]
    pub uniform_a: f64,
    #[serde(default = "default_uniform_b")]
    pub uniform_b: f64,
    #[serde(default = "default_normal_mu")]
    pub normal_mu: f64,
    #[serde(default = "default_normal_sigma")]
    pub normal_sigma: f64,
    #[serde(default = "default_refine_decay")]
    pub refine_decay: f64,
    #[serde(default = "default_size_base")]
    pub size_base: usize,
    #[serde(default = "default_size_step")]
    pub size_step: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            mode: default_mode(),
            uniform_a: default_uniform_a(),
            uniform_b: default_uniform_b(),
            normal_mu: default_normal_mu(),
            normal_sigma: default_normal_sigma(),
            refine_decay: default_refine_decay(),
            size_base: default_size_base(),
            size_step: default_size_step(),
        }
    }
}

fn default_mode() -> SamplerMode {
    SamplerMode::Uniform
}
fn default_uniform_a() -> f64 {
    0.0
}
fn default_uniform_b() -> f64 {
    3.0
}
fn default_normal_mu() -> f64 {
    1.5
}
fn default_normal_sigma() -> f64 {
    0.4
}
fn default_refine_decay() -> f64 {
    0.65
}
fn default_size_base() -> usize {
    3000
}
fn default_size_step() -> usize {
    1000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            hidden_layers: default_hidden(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            validation_fraction: default_validation_fraction(),
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![50]
}
fn default_learning_rate() -> f64 {
    5e-4
}
fn default_batch_size() -> usize {
    512
}
fn default_max_epochs() -> usize {
    2000
}
fn default_patience() -> usize {
    100
}
fn default_validation_fraction() -> f64 {
    0.2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Solver executable path, or "internal" for the in-process backend.
    /// Overridden by the HELIO_SOLVER_PATH environment variable.
    #[serde(default = "default_solver_path")]
    pub path: String,
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default = "default_time_limit")]
    pub time_limit_seconds: f64,
    #[serde(default)]
    pub tr_max_points: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            path: default_solver_path(),
            gap: default_gap(),
            time_limit_seconds: default_time_limit(),
            tr_max_points: None,
        }
    }
}

fn default_solver_path() -> String {
    "internal".into()
}
fn default_gap() -> f64 {
    1e-4
}
fn default_time_limit() -> f64 {
    300.0
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub directory: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {path:?}: {e}"))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {path:?}: {e}"))
    }

    pub fn plant_config(&self) -> PlantConfig {
        PlantConfig {
            receiver_height: self.plant.receiver.height,
            receiver_diameter: self.plant.receiver.diameter,
            panel_count: self.plant.receiver.panels,
            panel_width: self.plant.receiver.panel_width,
            tower_optical_height: self.plant.field.tower_optical_height,
            heliostat_mirror_area: self.plant.field.heliostat_mirror_area,
            heliostat_count: self.plant.field.heliostat_count,
            latitude_deg: self.plant.field.latitude,
            sigma_sun_mrad: self.plant.errors.sigma_sun_mrad,
            sigma_slope_mrad: self.plant.errors.sigma_slope_mrad,
            sigma_tracking_mrad: self.plant.errors.sigma_tracking_mrad,
            mesh_vertical: self.plant.mesh.vertical,
            mesh_horizontal: self.plant.mesh.horizontal,
            k_min: self.plant.aiming.k_min,
            k_max: self.plant.aiming.k_max,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.optimizer.sampler;
        SamplerConfig {
            mode: s.mode,
            uniform_range: (s.uniform_a, s.uniform_b),
            normal_mean: s.normal_mu,
            normal_sigma: s.normal_sigma,
            refine_decay: s.refine_decay,
            size_base: s.size_base,
            size_step: s.size_step,
        }
    }

    pub fn hyperparams(&self, seed: u64) -> Hyperparams {
        let t = &self.optimizer.training;
        Hyperparams {
            hidden_layers: t.hidden_layers.clone(),
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
            seed,
        }
    }

    pub fn optimize_config(&self, seed_override: Option<u64>) -> OptimizeConfig {
        let seed = seed_override.unwrap_or(self.optimizer.seed);
        OptimizeConfig {
            lambda: self.score.lambda,
            central_fraction: self.score.central_fraction,
            iterations: self.optimizer.iterations,
            epsilons: self.optimizer.epsilons.clone(),
            sampler: self.sampler_config(),
            training: self.hyperparams(seed),
            seed,
            time_limit: Duration::from_secs_f64(self.solver.time_limit_seconds),
            tr_max_points: self.solver.tr_max_points,
            stop_rel_improvement: self.optimizer.stop_rel_improvement,
            stop_patience: self.optimizer.stop_patience,
        }
    }

    /// Solver path after applying the environment override.
    pub fn solver_path(&self) -> String {
        std::env::var("HELIO_SOLVER_PATH").unwrap_or_else(|_| self.solver.path.clone())
    }
}
