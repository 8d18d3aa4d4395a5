//! Iterative surrogate-refinement optimization of the aiming strategy.
//!
//! Each iteration generates scored samples (around the incumbent after the
//! first pass), trains the surrogate, embeds it and solves the program once
//! per trust-region radius, then evaluates every candidate with the true
//! flux model. The incumbent is always judged by the true score, so
//! surrogate error can never degrade it.

mod baselines;
mod datagen;

pub use baselines::{equatorial_baseline, is_bimodal, sweep_baseline, SweepOutcome};
pub use datagen::{generate_data, SamplerConfig, SamplerMode};

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{AimVector, FluxMap, FluxScene};
use crate::milp::{encode, solve, SolverBackend, TrustRegion};
use crate::plant::{sector_counts, Heliostat, PlantConfig, SunState};
use crate::scoring::{metrics, quality_score, MetricsReport};
use crate::surrogate::{train, Hyperparams};

/// True-score evaluator: one flux scene plus the scoring parameters.
pub struct QsEvaluator {
    scene: FluxScene,
    field: Vec<Heliostat>,
    sun: SunState,
    config: PlantConfig,
    panel_weights: Vec<usize>,
    lambda: f64,
    central_fraction: f64,
}

impl QsEvaluator {
    pub fn new(
        field: &[Heliostat],
        sun: &SunState,
        config: &PlantConfig,
        lambda: f64,
        central_fraction: f64,
    ) -> Result<Self> {
        let scene = FluxScene::new(field, sun, config)?;
        Ok(QsEvaluator {
            scene,
            field: field.to_vec(),
            sun: sun.clone(),
            config: config.clone(),
            panel_weights: sector_counts(field, config.panel_count),
            lambda,
            central_fraction,
        })
    }

    pub fn group_count(&self) -> usize {
        self.scene.group_count()
    }

    pub fn k_bounds(&self) -> (f64, f64) {
        (self.config.k_min, self.config.k_max)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn flux(&self, aims: &AimVector) -> Result<FluxMap> {
        self.scene.evaluate(aims)
    }

    /// True quality score of an aim vector.
    pub fn quality(&self, aims: &AimVector) -> Result<f64> {
        let flux = self.scene.evaluate(aims)?;
        Ok(quality_score(&flux, self.lambda, &self.panel_weights, self.central_fraction)?
            .quality_score)
    }

    /// Score and summary metrics derived from one flux evaluation.
    pub fn assess(&self, aims: &AimVector) -> Result<(f64, MetricsReport)> {
        let flux = self.scene.evaluate(aims)?;
        let score =
            quality_score(&flux, self.lambda, &self.panel_weights, self.central_fraction)?
                .quality_score;
        let report = metrics(&flux, &self.field, &self.sun, &self.config, self.central_fraction)?;
        Ok((score, report))
    }
}

/// Settings of the iterative run.
#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    /// Distribution-difference penalty weight.
    pub lambda: f64,
    pub central_fraction: f64,
    /// Maximum number of iterations.
    pub iterations: usize,
    /// Trust-region radii solved per iteration (scaled input units).
    pub epsilons: Vec<f64>,
    pub sampler: SamplerConfig,
    pub training: Hyperparams,
    pub seed: u64,
    /// Time limit per solve.
    pub time_limit: Duration,
    /// Optional cap on trust-region points per solve.
    pub tr_max_points: Option<usize>,
    /// Early stop once the relative incumbent improvement stays below this
    /// for `stop_patience` consecutive iterations.
    pub stop_rel_improvement: f64,
    pub stop_patience: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            lambda: 5000.0,
            central_fraction: 0.5,
            iterations: 6,
            epsilons: vec![0.0, 0.05, 0.1, 0.2, 0.5],
            sampler: SamplerConfig::default(),
            training: Hyperparams::default(),
            seed: 0,
            time_limit: Duration::from_secs(300),
            tr_max_points: None,
            stop_rel_improvement: 0.005,
            stop_patience: 2,
        }
    }
}

/// One solved candidate of an iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub epsilon: f64,
    pub aim: AimVector,
    /// True quality score (never the surrogate prediction).
    pub true_qs: f64,
}

/// Progress record of one iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub dataset_size: usize,
    pub candidates: Vec<CandidateRecord>,
    pub incumbent: Option<AimVector>,
    pub incumbent_qs: Option<f64>,
    pub metrics: Option<MetricsReport>,
    pub wall_seconds: f64,
    pub failed: bool,
}

/// Final solution with the iteration history.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub incumbent: AimVector,
    pub incumbent_qs: f64,
    pub metrics: MetricsReport,
    pub history: Vec<IterationRecord>,
}

fn iteration_seed(seed: u64, t: usize, salt: u64) -> u64 {
    seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt
}

/// Runs the sample/train/embed/solve refinement loop.
///
/// Candidates of an iteration are solved once per trust-region radius and
/// ranked by true score with ties broken toward the smaller radius. A fully
/// failed iteration keeps the previous incumbent; the run errors only when
/// every iteration fails.
pub fn run(
    field: &[Heliostat],
    sun: &SunState,
    config: &PlantConfig,
    opt: &OptimizeConfig,
    backend: &dyn SolverBackend,
) -> Result<RunResult> {
    if opt.iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be >= 1".into()));
    }
    if opt.epsilons.is_empty() {
        return Err(Error::InvalidConfig("epsilon list must be non-empty".into()));
    }
    let evaluator = QsEvaluator::new(field, sun, config, opt.lambda, opt.central_fraction)?;
    let k_bounds = evaluator.k_bounds();

    let mut incumbent: Option<(AimVector, f64, MetricsReport)> = None;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut stale = 0usize;
    let mut last_solve_error: Option<Error> = None;

    for t in 1..=opt.iterations {
        let started = Instant::now();
        let n_t = opt.sampler.size_at(t);
        let previous_qs = incumbent.as_ref().map(|(_, qs, _)| *qs);

        let data = generate_data(
            t,
            n_t,
            incumbent.as_ref().map(|(aim, _, _)| aim),
            &opt.sampler,
            &evaluator,
            iteration_seed(opt.seed, t, 0x01),
        )?;

        let mut hp = opt.training.clone();
        hp.seed = iteration_seed(opt.seed, t, 0x02);
        let surrogate = train(&data, &hp)?;

        let mut region = TrustRegion::from_dataset(&data, 0.0)?;
        if let Some(max_points) = opt.tr_max_points {
            region = region.subsample(max_points, iteration_seed(opt.seed, t, 0x03));
        }

        // One solve per radius; failures are skipped, not fatal.
        let solves: Vec<(f64, Result<Option<AimVector>>)> = opt
            .epsilons
            .par_iter()
            .map(|&eps| {
                let result = region
                    .with_epsilon(eps)
                    .and_then(|tr| encode(&surrogate, &tr, k_bounds))
                    .and_then(|model| solve(&model, backend, opt.time_limit))
                    .map(|sol| sol.aim);
                (eps, result)
            })
            .collect();

        // Score and metrics of each candidate come from one flux evaluation.
        let mut candidates: Vec<CandidateRecord> = Vec::new();
        let mut reports: Vec<MetricsReport> = Vec::new();
        for (eps, outcome) in solves {
            match outcome {
                Ok(Some(aim)) => {
                    let (true_qs, report) = evaluator.assess(&aim)?;
                    candidates.push(CandidateRecord { epsilon: eps, aim, true_qs });
                    reports.push(report);
                }
                Ok(None) => {}
                Err(err) => last_solve_error = Some(err),
            }
        }

        let failed = candidates.is_empty();
        // Best candidate by true score; ties prefer the smaller radius.
        let best_idx = (0..candidates.len()).max_by(|&i, &j| {
            let (a, b) = (&candidates[i], &candidates[j]);
            a.true_qs
                .partial_cmp(&b.true_qs)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.epsilon.partial_cmp(&a.epsilon).unwrap_or(std::cmp::Ordering::Equal))
        });
        if let Some(i) = best_idx {
            let improves =
                incumbent.as_ref().is_none_or(|(_, qs, _)| candidates[i].true_qs > *qs);
            if improves {
                incumbent = Some((
                    candidates[i].aim.clone(),
                    candidates[i].true_qs,
                    reports[i].clone(),
                ));
            }
        }

        history.push(IterationRecord {
            iteration: t,
            dataset_size: n_t,
            candidates,
            incumbent: incumbent.as_ref().map(|(aim, _, _)| aim.clone()),
            incumbent_qs: incumbent.as_ref().map(|(_, qs, _)| *qs),
            metrics: incumbent.as_ref().map(|(_, _, m)| m.clone()),
            wall_seconds: started.elapsed().as_secs_f64(),
            failed,
        });

        // Stopping rule on consecutive small relative improvements.
        if let (Some(prev), Some((_, now, _))) = (previous_qs, incumbent.as_ref()) {
            let rel = (now - prev) / prev.abs().max(1e-12);
            if rel < opt.stop_rel_improvement {
                stale += 1;
                if stale >= opt.stop_patience {
                    break;
                }
            } else {
                stale = 0;
            }
        }
    }

    match incumbent {
        Some((aim, qs, report)) => {
            Ok(RunResult { incumbent: aim, incumbent_qs: qs, metrics: report, history })
        }
        // Surface the underlying solver failure when nothing ever solved
        // (e.g. an unreachable external backend), not the generic run error.
        None => Err(last_solve_error
            .unwrap_or_else(|| Error::Run("every iteration failed to produce a candidate".into()))),
    }
}

/// Writes one iteration record per line as JSON.
pub fn write_run_log<W: Write>(history: &[IterationRecord], out: &mut W) -> Result<()> {
    for record in history {
        let line =
            serde_json::to_string(record).map_err(|e| Error::Serialization(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Writes an aim vector as `group,k` CSV.
pub fn write_aim_csv<W: Write>(aims: &AimVector, out: &mut W) -> Result<()> {
    writeln!(out, "group,k")?;
    for (g, k) in aims.k.iter().enumerate() {
        writeln!(out, "{g},{k}")?;
    }
    Ok(())
}

/// Reads an aim vector written by [`write_aim_csv`].
pub fn read_aim_csv<R: BufRead>(reader: R) -> Result<AimVector> {
    let mut k = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 0 && trimmed == "group,k") {
            continue;
        }
        let mut cells = trimmed.split(',');
        let group: usize = cells
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::Serialization(format!("bad aim row {trimmed:?}")))?;
        let value: f64 = cells
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::Serialization(format!("bad aim row {trimmed:?}")))?;
        if group != k.len() {
            return Err(Error::Serialization(format!(
                "aim rows must be dense and ordered; expected group {}, got {group}",
                k.len()
            )));
        }
        k.push(value);
    }
    if k.is_empty() {
        return Err(Error::Serialization("aim file has no rows".into()));
    }
    Ok(AimVector::new(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::InProcessBackend;
    use crate::plant::{generate_field, solar_position};

    fn tiny_plant() -> (Vec<Heliostat>, SunState, PlantConfig) {
        let mut cfg = PlantConfig::dunhuang();
        cfg.heliostat_count = 30;
        cfg.panel_count = 6;
        cfg.panel_width = 3.8;
        cfg.mesh_vertical = 13;
        cfg.mesh_horizontal = 3;
        let field = generate_field(&cfg, 0).unwrap();
        let sun = solar_position(cfg.latitude_deg, 81, 12.0);
        (field, sun, cfg)
    }

    fn quick_opt(seed: u64) -> OptimizeConfig {
        OptimizeConfig {
            iterations: 2,
            epsilons: vec![0.0, 0.2],
            sampler: SamplerConfig { size_base: 120, size_step: 40, ..Default::default() },
            training: Hyperparams {
                hidden_layers: vec![10],
                max_epochs: 60,
                batch_size: 64,
                ..Default::default()
            },
            seed,
            lambda: 500.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_iteration_produces_one_record() {
        let (field, sun, cfg) = tiny_plant();
        let mut opt = quick_opt(1);
        opt.iterations = 1;
        let backend = InProcessBackend::default();
        let result = run(&field, &sun, &cfg, &opt, &backend).unwrap();
        assert_eq!(result.history.len(), 1);
        assert!(!result.history[0].candidates.is_empty());
        let best = result.history[0]
            .candidates
            .iter()
            .map(|c| c.true_qs)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(result.incumbent_qs, best);
    }

    #[test]
    fn incumbent_quality_is_non_decreasing() {
        let (field, sun, cfg) = tiny_plant();
        let backend = InProcessBackend::default();
        let result = run(&field, &sun, &cfg, &quick_opt(3), &backend).unwrap();
        let mut last = f64::NEG_INFINITY;
        for record in &result.history {
            let qs = record.incumbent_qs.unwrap();
            assert!(qs >= last);
            last = qs;
        }
    }

    #[test]
    fn run_is_deterministic_for_a_seed() {
        let (field, sun, cfg) = tiny_plant();
        let backend = InProcessBackend::default();
        let a = run(&field, &sun, &cfg, &quick_opt(7), &backend).unwrap();
        let b = run(&field, &sun, &cfg, &quick_opt(7), &backend).unwrap();
        assert_eq!(a.incumbent.k, b.incumbent.k);
        assert_eq!(a.incumbent_qs, b.incumbent_qs);
    }

    /// With no uniformity penalty and a single aiming group, the optimum
    /// approaches equatorial aiming.
    #[test]
    fn zero_lambda_single_group_approaches_equatorial_energy() {
        let (field, sun, cfg) = tiny_plant();
        // Collapse all groups into one.
        let field: Vec<Heliostat> =
            field.into_iter().map(|h| Heliostat { group: 0, ..h }).collect();
        let mut opt = quick_opt(5);
        opt.lambda = 0.0;
        opt.iterations = 2;
        let backend = InProcessBackend::default();
        let result = run(&field, &sun, &cfg, &opt, &backend).unwrap();

        let evaluator = QsEvaluator::new(&field, &sun, &cfg, 0.0, 0.5).unwrap();
        let (equatorial_energy, _) =
            evaluator.assess(&equatorial_baseline(1, cfg.k_max)).unwrap();
        assert!(
            result.metrics.collected_energy >= 0.99 * equatorial_energy,
            "{} vs equatorial {}",
            result.metrics.collected_energy,
            equatorial_energy
        );
    }

    #[test]
    fn aim_csv_round_trip() {
        let aims = AimVector::new(vec![0.5, 1.25, 3.0]);
        let mut buf = Vec::new();
        write_aim_csv(&aims, &mut buf).unwrap();
        let back = read_aim_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, aims);
    }

    #[test]
    fn run_log_is_json_lines() {
        let record = IterationRecord {
            iteration: 1,
            dataset_size: 10,
            candidates: vec![],
            incumbent: Some(AimVector::new(vec![1.0])),
            incumbent_qs: Some(2.5),
            metrics: None,
            wall_seconds: 0.1,
            failed: false,
        };
        let mut buf = Vec::new();
        write_run_log(&[record.clone(), record], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["iteration"], 1);
        }
    }
}
