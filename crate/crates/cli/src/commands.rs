//! Command implementations and artifact writers.

use std::io::Write;
use std::path::{Path, PathBuf};

use helio_aim::flux::{AimVector, FluxMap};
use helio_aim::milp::{ExternalLpBackend, InProcessBackend, SolverBackend};
use helio_aim::optimizer::{
    equatorial_baseline, generate_data, read_aim_csv, run, sweep_baseline, write_aim_csv,
    write_run_log, QsEvaluator,
};
use helio_aim::plant::{generate_field, solar_position, Heliostat, PlantConfig, SunState};
use helio_aim::scoring::{metrics, MetricsReport};
use helio_aim::surrogate::{train_with_report, Dataset};

use crate::config::RunConfig;
use crate::CliError;

/// Everything a command needs: the parsed configuration, the generated
/// field, and the resolved output directory.
pub struct Context {
    pub run: RunConfig,
    pub plant: PlantConfig,
    pub field: Vec<Heliostat>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Context {
    pub fn new(
        run: RunConfig,
        out_override: Option<PathBuf>,
        seed_override: Option<u64>,
    ) -> Result<Self, CliError> {
        let plant = run.plant_config();
        plant.validate()?;
        let field = generate_field(&plant, run.plant.field.layout_seed)?;
        let out_dir = out_override.unwrap_or_else(|| run.output.directory.clone());
        let seed = seed_override.unwrap_or(run.optimizer.seed);
        Ok(Context { run, plant, field, out_dir, seed })
    }

    pub fn sun_at(&self, hour: Option<f64>) -> Result<SunState, CliError> {
        let hour = hour
            .or_else(|| self.run.sun.hours.first().copied())
            .ok_or_else(|| CliError::config("no solar hour configured"))?;
        let sun = solar_position(self.plant.latitude_deg, self.run.sun.day_of_year, hour);
        if !sun.is_above_horizon() {
            return Err(CliError {
                code: 3,
                message: format!(
                    "sun below horizon at hour {hour} (elevation {:.2} deg)",
                    sun.elevation_deg
                ),
            });
        }
        Ok(sun)
    }

    pub fn backend(&self) -> Result<Box<dyn SolverBackend>, CliError> {
        let path = self.run.solver_path();
        if path == "internal" || path.is_empty() {
            Ok(Box::new(InProcessBackend { mip_gap: self.run.solver.gap }))
        } else {
            Ok(Box::new(ExternalLpBackend::new(path)))
        }
    }

    fn ensure_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError { code: 1, message: format!("cannot create output dir: {e}") })
    }

    fn group_count(&self) -> usize {
        helio_aim::plant::group_count(&self.field)
    }

    /// Resolves an aim source: a named baseline or a `group,k` CSV path.
    fn resolve_aims(&self, source: &str, sun: &SunState) -> Result<AimVector, CliError> {
        let groups = self.group_count();
        match source {
            "equatorial" => Ok(equatorial_baseline(groups, self.plant.k_max)),
            "sweep" => {
                let outcome = sweep_baseline(&self.field, sun, &self.plant, 0.1)?;
                for sector in &outcome.never_bimodal {
                    eprintln!(
                        "warning: sector {sector} never produced a two-peak profile; using k_min"
                    );
                }
                Ok(outcome.aims)
            }
            path => {
                let file = std::fs::File::open(path).map_err(|e| {
                    CliError::config(format!("cannot open aim file {path:?}: {e}"))
                })?;
                let aims = read_aim_csv(std::io::BufReader::new(file))?;
                if aims.len() != groups {
                    return Err(CliError::config(format!(
                        "aim file has {} groups, field has {groups}",
                        aims.len()
                    )));
                }
                Ok(aims)
            }
        }
    }
}

type FileWriter = std::io::BufWriter<std::fs::File>;

fn write_file<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut FileWriter) -> helio_aim::Result<()>,
{
    let file = std::fs::File::create(path)
        .map_err(|e| CliError { code: 1, message: format!("cannot create {path:?}: {e}") })?;
    let mut buffered = std::io::BufWriter::new(file);
    write(&mut buffered)?;
    buffered
        .flush()
        .map_err(|e| CliError { code: 1, message: format!("cannot write {path:?}: {e}") })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError { code: 1, message: e.to_string() })?;
    std::fs::write(path, text)
        .map_err(|e| CliError { code: 1, message: format!("cannot write {path:?}: {e}") })
}

fn metrics_json(report: &MetricsReport) -> serde_json::Value {
    serde_json::to_value(report).expect("metrics serialize")
}

fn write_flux_artifacts(ctx: &Context, flux: &FluxMap, report: &MetricsReport) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    write_file(&ctx.out_dir.join("fluxmap.csv"), |w| flux.write_csv(w))?;
    write_json(&ctx.out_dir.join("fluxmap.json"), &flux.to_json())?;
    for p in 0..flux.mesh.panel_count {
        let profile = flux.vertical_profile(p);
        write_file(&ctx.out_dir.join(format!("profile_panel_{p:02}.csv")), |w| {
            writeln!(w, "v,height_offset,c_mean")?;
            for (v, c) in profile.iter().enumerate() {
                let offset = -ctx.plant.receiver_height / 2.0 + v as f64 * flux.mesh.dv;
                writeln!(w, "{v},{offset},{c}")?;
            }
            Ok(())
        })?;
    }
    write_json(&ctx.out_dir.join("metrics.json"), &metrics_json(report))
}

pub fn simulate(ctx: &Context, hour: Option<f64>, aim_source: &str) -> Result<(), CliError> {
    let sun = ctx.sun_at(hour)?;
    let aims = ctx.resolve_aims(aim_source, &sun)?;
    let evaluator = QsEvaluator::new(
        &ctx.field,
        &sun,
        &ctx.plant,
        ctx.run.score.lambda,
        ctx.run.score.central_fraction,
    )?;
    let flux = evaluator.flux(&aims)?;
    let report = metrics(&flux, &ctx.field, &sun, &ctx.plant, ctx.run.score.central_fraction)?;
    write_flux_artifacts(ctx, &flux, &report)?;
    let weights = helio_aim::plant::sector_counts(&ctx.field, ctx.plant.panel_count);
    let breakdown = helio_aim::scoring::quality_score(
        &flux,
        ctx.run.score.lambda,
        &weights,
        ctx.run.score.central_fraction,
    )?;
    write_json(
        &ctx.out_dir.join("score.json"),
        &serde_json::to_value(&breakdown).expect("score serializes"),
    )?;
    write_file(&ctx.out_dir.join("field.csv"), |w| {
        helio_aim::plant::write_field_csv(&ctx.field, w)
    })?;
    write_file(&ctx.out_dir.join("aim.csv"), |w| write_aim_csv(&aims, w))?;
    println!(
        "simulated {} heliostats: energy {:.3}, dd {:.4}, spl {:.4}, max {:.1} suns",
        ctx.field.len(),
        report.collected_energy,
        report.distribution_difference,
        report.spl,
        report.max_suns
    );
    Ok(())
}

pub fn baseline(ctx: &Context, hour: Option<f64>, equatorial: bool) -> Result<(), CliError> {
    let source = if equatorial { "equatorial" } else { "sweep" };
    simulate(ctx, hour, source)
}

pub fn datagen(
    ctx: &Context,
    hour: Option<f64>,
    iteration: usize,
    size: Option<usize>,
    incumbent: Option<&Path>,
) -> Result<(), CliError> {
    let sun = ctx.sun_at(hour)?;
    let sampler = ctx.run.sampler_config();
    let n = size.unwrap_or_else(|| sampler.size_at(iteration.max(1)));
    let incumbent = match incumbent {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::config(format!("cannot open incumbent {path:?}: {e}")))?;
            Some(read_aim_csv(std::io::BufReader::new(file))?)
        }
        None => None,
    };
    let evaluator = QsEvaluator::new(
        &ctx.field,
        &sun,
        &ctx.plant,
        ctx.run.score.lambda,
        ctx.run.score.central_fraction,
    )?;
    let data = generate_data(iteration, n, incumbent.as_ref(), &sampler, &evaluator, ctx.seed)?;
    ctx.ensure_out_dir()?;
    write_file(&ctx.out_dir.join("dataset.csv"), |w| data.write_csv(w))?;
    println!("wrote {} scored samples over {} groups", data.len(), data.input_dim());
    Ok(())
}

pub fn train(ctx: &Context, data_path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::open(data_path)
        .map_err(|e| CliError::config(format!("cannot open dataset {data_path:?}: {e}")))?;
    let data = Dataset::read_csv(
        std::io::BufReader::new(file),
        ctx.plant.k_min,
        ctx.plant.k_max,
    )?;
    let hp = ctx.run.hyperparams(ctx.seed);
    let (model, report) = train_with_report(&data, &hp)?;
    ctx.ensure_out_dir()?;
    model.save(&ctx.out_dir.join("model.json"))?;
    println!(
        "trained {:?} network in {} epochs: validation rmse {:.5} (from {:.5})",
        model.widths(),
        report.epochs_run,
        report.best_validation_rmse,
        report.initial_validation_rmse
    );
    Ok(())
}

pub fn optimize(ctx: &Context, hour: Option<f64>) -> Result<(), CliError> {
    let sun = ctx.sun_at(hour)?;
    let backend = ctx.backend()?;
    let opt = ctx.run.optimize_config(Some(ctx.seed));
    let result = run(&ctx.field, &sun, &ctx.plant, &opt, backend.as_ref())?;
    ctx.ensure_out_dir()?;
    write_file(&ctx.out_dir.join("run_log.jsonl"), |w| write_run_log(&result.history, w))?;
    write_file(&ctx.out_dir.join("aim.csv"), |w| write_aim_csv(&result.incumbent, w))?;
    write_json(&ctx.out_dir.join("metrics.json"), &metrics_json(&result.metrics))?;
    println!(
        "optimized in {} iterations: qs {:.3}, energy {:.3}, dd {:.4}, max {:.1} suns",
        result.history.len(),
        result.incumbent_qs,
        result.metrics.collected_energy,
        result.metrics.distribution_difference,
        result.metrics.max_suns
    );
    Ok(())
}

/// Comparison table of two metric reports with percentage deltas relative
/// to B, rounded to one decimal.
pub fn compare(a_dir: &Path, b_dir: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let load = |dir: &Path| -> Result<MetricsReport, CliError> {
        let path = dir.join("metrics.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::config(format!("cannot read {path:?}: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid metrics in {path:?}: {e}")))
    };
    let a = load(a_dir)?;
    let b = load(b_dir)?;

    let rows = [
        ("collected_energy", a.collected_energy, b.collected_energy),
        ("distribution_difference", a.distribution_difference, b.distribution_difference),
        ("spl", a.spl, b.spl),
        ("max_suns", a.max_suns, b.max_suns),
    ];
    let delta_pct = |a: f64, b: f64| -> Option<f64> {
        (b != 0.0).then(|| ((a - b) / b * 1000.0).round() / 10.0)
    };

    let out_dir = out.unwrap_or(a_dir);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError { code: 1, message: format!("cannot create output dir: {e}") })?;

    let mut csv = String::from("metric,a,b,delta_pct\n");
    let mut deltas = serde_json::Map::new();
    for (name, va, vb) in rows {
        let delta = delta_pct(va, vb);
        let cell = delta.map_or(String::new(), |d| format!("{d:.1}"));
        csv.push_str(&format!("{name},{va},{vb},{cell}\n"));
        deltas.insert(
            name.to_string(),
            delta.map_or(serde_json::Value::Null, |d| serde_json::json!(d)),
        );
        println!("{name}: {va} vs {vb} ({cell}%)");
    }
    std::fs::write(out_dir.join("comparison.csv"), &csv)
        .map_err(|e| CliError { code: 1, message: e.to_string() })?;
    let json = serde_json::json!({
        "a": metrics_json(&a),
        "b": metrics_json(&b),
        "delta_pct": serde_json::Value::Object(deltas),
    });
    write_json(&out_dir.join("comparison.json"), &json)
}
