//! Mini-batch Adam training of the score surrogate.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::surrogate::{InputScaler, SurrogateModel, TargetScaler};

/// Training samples with the scalers fitted to them.
///
/// Inputs are stored in raw aiming-factor units; the input scaler maps the
/// configured factor box onto the unit cube, the target scaler standardizes
/// the scores.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
    pub input_scaler: InputScaler,
    pub target_scaler: TargetScaler,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>, k_min: f64, k_max: f64) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::Shape(format!(
                "{} input rows vs {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::InvalidConfig("empty dataset".into()));
        }
        let input_scaler = InputScaler::from_box(inputs.ncols(), k_min, k_max)?;
        let target_scaler = TargetScaler::fit(targets.as_slice().expect("contiguous targets"));
        Ok(Dataset { inputs, targets, input_scaler, target_scaler })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// All inputs mapped to the unit cube.
    pub fn scaled_inputs(&self) -> Array2<f64> {
        let mut scaled = self.inputs.clone();
        for mut row in scaled.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.input_scaler.scale_dim(*v, j);
            }
        }
        scaled
    }

    /// Writes `k_0..k_{n-1},qs` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let header: Vec<String> = (0..self.input_dim()).map(|j| format!("k_{j}")).collect();
        writeln!(out, "{},qs", header.join(","))?;
        for (row, &y) in self.inputs.rows().into_iter().zip(self.targets.iter()) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{}", cells.join(","), y)?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`Dataset::write_csv`].
    pub fn read_csv<R: BufRead>(reader: R, k_min: f64, k_max: f64) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Serialization("empty dataset file".into()))??;
        let dims = header.split(',').count() - 1;
        if dims == 0 || !header.ends_with(",qs") {
            return Err(Error::Serialization(format!("unexpected dataset header {header:?}")));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != dims + 1 {
                return Err(Error::Serialization(format!("ragged dataset row {line:?}")));
            }
            for cell in &cells[..dims] {
                inputs.push(
                    cell.parse::<f64>()
                        .map_err(|e| Error::Serialization(format!("bad number {cell:?}: {e}")))?,
                );
            }
            targets.push(
                cells[dims]
                    .parse::<f64>()
                    .map_err(|e| Error::Serialization(format!("bad score: {e}")))?,
            );
        }
        let rows = targets.len();
        let inputs = Array2::from_shape_vec((rows, dims), inputs)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        Dataset::new(inputs, Array1::from_vec(targets), k_min, k_max)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct Hyperparams {
    /// Hidden layer widths.
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden_layers: vec![50],
            learning_rate: 5e-4,
            batch_size: 512,
            max_epochs: 2000,
            patience: 100,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Outcome summary of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Validation RMSE of the freshly initialized network, scaled units.
    pub initial_validation_rmse: f64,
    /// Validation RMSE of the returned weights, scaled units.
    pub best_validation_rmse: f64,
}

/// Trains a surrogate; see [`train_with_report`].
pub fn train(data: &Dataset, hp: &Hyperparams) -> Result<SurrogateModel> {
    train_with_report(data, hp).map(|(model, _)| model)
}

/// Trains a rectifier network on the dataset with mini-batch Adam.
///
/// A deterministic shuffle splits off the validation fraction; the weights
/// of the best-validation epoch are returned. Fully reproducible for a fixed
/// seed.
pub fn train_with_report(data: &Dataset, hp: &Hyperparams) -> Result<(SurrogateModel, TrainReport)> {
    if data.len() < 2 {
        return Err(Error::InvalidConfig("training needs at least 2 samples".into()));
    }
    if hp.hidden_layers.is_empty() || hp.hidden_layers.contains(&0) {
        return Err(Error::InvalidConfig("hidden layers must be non-empty".into()));
    }
    if !(hp.validation_fraction > 0.0 && hp.validation_fraction < 1.0) {
        return Err(Error::InvalidConfig("validation_fraction must be in (0, 1)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let x_all = data.scaled_inputs();
    let y_all: Array1<f64> =
        data.targets.iter().map(|&y| data.target_scaler.scale(y)).collect();

    // Deterministic split.
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let val_len = ((data.len() as f64 * hp.validation_fraction).round() as usize)
        .clamp(1, data.len() - 1);
    let (train_idx, val_idx) = order.split_at(data.len() - val_len);
    let mut train_idx = train_idx.to_vec();
    let x_val = select_rows(&x_all, val_idx);
    let y_val = select(&y_all, val_idx);

    // Fan-in uniform initialization.
    let mut widths = vec![data.input_dim()];
    widths.extend_from_slice(&hp.hidden_layers);
    widths.push(1);
    let mut weights: Vec<Array2<f64>> = Vec::new();
    let mut biases: Vec<Array1<f64>> = Vec::new();
    for l in 0..widths.len() - 1 {
        let bound = 1.0 / (widths[l] as f64).sqrt();
        weights.push(Array2::from_shape_fn((widths[l + 1], widths[l]), |_| {
            rng.random_range(-bound..bound)
        }));
        biases.push(Array1::from_shape_fn(widths[l + 1], |_| rng.random_range(-bound..bound)));
    }

    let mut adam = AdamState::new(&weights, &biases, hp.learning_rate);

    let initial_rmse = validation_rmse(&weights, &biases, &x_val, &y_val);
    if !initial_rmse.is_finite() {
        return Err(Error::TrainingDiverged("non-finite initial validation loss".into()));
    }
    let mut best_rmse = initial_rmse;
    let mut best_weights = weights.clone();
    let mut best_biases = biases.clone();
    let mut stale_epochs = 0;
    let mut epochs_run = 0;

    let batch = hp.batch_size.max(1);
    for _epoch in 0..hp.max_epochs {
        epochs_run += 1;
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(batch) {
            let xb = select_rows(&x_all, chunk);
            let yb = select(&y_all, chunk);
            let loss = adam.step(&mut weights, &mut biases, &xb, &yb);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!("loss became {loss}")));
            }
        }
        let rmse = validation_rmse(&weights, &biases, &x_val, &y_val);
        if !rmse.is_finite() {
            return Err(Error::TrainingDiverged("non-finite validation loss".into()));
        }
        if rmse < best_rmse {
            best_rmse = rmse;
            best_weights = weights.clone();
            best_biases = biases.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= hp.patience {
                break;
            }
        }
    }

    let model = SurrogateModel::from_parts(
        best_weights,
        best_biases,
        data.input_scaler.clone(),
        data.target_scaler.clone(),
    )?;
    Ok((
        model,
        TrainReport {
            epochs_run,
            initial_validation_rmse: initial_rmse,
            best_validation_rmse: best_rmse,
        },
    ))
}

fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&x.row(i));
    }
    out
}

fn select(y: &Array1<f64>, idx: &[usize]) -> Array1<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

/// Batched forward pass; returns preactivations and activations per layer.
fn forward_batch(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    x: &Array2<f64>,
) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let last = weights.len() - 1;
    let mut zs = Vec::with_capacity(weights.len());
    let mut activations = vec![x.clone()];
    for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
        let mut z = activations[l].dot(&w.t());
        z += b;
        zs.push(z.clone());
        let a = if l < last { z.mapv(|v| v.max(0.0)) } else { z };
        activations.push(a);
    }
    (zs, activations)
}

fn validation_rmse(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    x: &Array2<f64>,
    y: &Array1<f64>,
) -> f64 {
    let (_, activations) = forward_batch(weights, biases, x);
    let pred = activations.last().expect("output layer").column(0).to_owned();
    let mse = (&pred - y).mapv(|d| d * d).mean().unwrap_or(f64::NAN);
    mse.sqrt()
}

/// Adam optimizer state (first and second moments per parameter).
struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    fn new(weights: &[Array2<f64>], biases: &[Array1<f64>], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m_w: weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// One mini-batch step on the mean-squared error; returns the batch loss.
    fn step(
        &mut self,
        weights: &mut [Array2<f64>],
        biases: &mut [Array1<f64>],
        x: &Array2<f64>,
        y: &Array1<f64>,
    ) -> f64 {
        let n = x.nrows() as f64;
        let (zs, activations) = forward_batch(weights, biases, x);
        let pred = activations.last().expect("output").column(0).to_owned();
        let residual = &pred - y;
        let loss = residual.mapv(|d| d * d).mean().unwrap_or(f64::NAN);

        // dL/d(output) for the mean-squared error.
        let mut delta: Array2<f64> = residual
            .mapv(|d| 2.0 * d / n)
            .insert_axis(Axis(1));

        self.step += 1;
        let correction =
            (1.0 - self.beta2.powi(self.step)).sqrt() / (1.0 - self.beta1.powi(self.step));
        let rate = self.lr * correction;

        let layer_count = weights.len();
        let mut grads_w: Vec<Array2<f64>> = Vec::with_capacity(layer_count);
        let mut grads_b: Vec<Array1<f64>> = Vec::with_capacity(layer_count);
        for l in (0..layer_count).rev() {
            grads_w.push(delta.t().dot(&activations[l]));
            grads_b.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut back = delta.dot(&weights[l]);
                back.zip_mut_with(&zs[l - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads_w.reverse();
        grads_b.reverse();

        for l in 0..layer_count {
            update(&mut self.m_w[l], &mut self.v_w[l], &grads_w[l], &mut weights[l], rate, self.beta1, self.beta2, self.eps);
            update1(&mut self.m_b[l], &mut self.v_b[l], &grads_b[l], &mut biases[l], rate, self.beta1, self.beta2, self.eps);
        }
        loss
    }
}

#[allow(clippy::too_many_arguments)]
fn update(
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    p: &mut Array2<f64>,
    rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    ndarray::Zip::from(m).and(v).and(g).and(p).for_each(|m, v, &g, p| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= rate * *m / (v.sqrt() + eps);
    });
}

#[allow(clippy::too_many_arguments)]
fn update1(
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    g: &Array1<f64>,
    p: &mut Array1<f64>,
    rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    ndarray::Zip::from(m).and(v).and(g).and(p).for_each(|m, v, &g, p| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= rate * *m / (v.sqrt() + eps);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset<F: Fn(&[f64]) -> f64>(
        n: usize,
        dims: usize,
        seed: u64,
        f: F,
    ) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = Array2::from_shape_fn((n, dims), |_| rng.random_range(0.0..3.0));
        let targets = inputs.rows().into_iter().map(|r| f(r.as_slice().unwrap())).collect();
        Dataset::new(inputs, targets, 0.0, 3.0).unwrap()
    }

    fn quick_hp(seed: u64) -> Hyperparams {
        Hyperparams { max_epochs: 120, batch_size: 128, ..Default::default() }
            .with_seed(seed)
    }

    impl Hyperparams {
        fn with_seed(mut self, seed: u64) -> Self {
            self.seed = seed;
            self
        }
    }

    #[test]
    fn fits_constant_target() {
        let c = 37.5;
        let data = random_dataset(400, 3, 1, |_| c);
        let (model, report) = train_with_report(&data, &quick_hp(1)).unwrap();
        assert!(
            report.best_validation_rmse * data.target_scaler.std < 1e-3 * c.abs() + 1e-6,
            "rmse {}",
            report.best_validation_rmse
        );
        assert!((model.predict(&[1.0, 2.0, 0.5]).unwrap() - c).abs() < 0.05 * c);
    }

    #[test]
    fn fits_linear_target_out_of_sample() {
        let f = |x: &[f64]| 3.0 * x[0] - 2.0 * x[1] + 0.7 * x[2] + 5.0;
        let data = random_dataset(2000, 3, 2, f);
        let model = train(&data, &Hyperparams::default().with_seed(2)).unwrap();

        let test = random_dataset(500, 3, 99, f);
        let mean = test.targets.mean().unwrap();
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for (row, &y) in test.inputs.rows().into_iter().zip(test.targets.iter()) {
            let yhat = model.predict(row.as_slice().unwrap()).unwrap();
            ss_res += (y - yhat).powi(2);
            ss_tot += (y - mean).powi(2);
        }
        let r2 = 1.0 - ss_res / ss_tot;
        assert!(r2 > 0.99, "out-of-sample R^2 = {r2}");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = random_dataset(600, 4, 3, |x| x[0] * x[1] + x[2]);
        let a = train(&data, &quick_hp(7)).unwrap();
        let b = train(&data, &quick_hp(7)).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert_eq!(wa, wb);
        }
        for (ba, bb) in a.biases.iter().zip(&b.biases) {
            assert_eq!(ba, bb);
        }
    }

    #[test]
    fn training_improves_on_initial_model_across_seeds() {
        for seed in 0..5 {
            let data = random_dataset(800, 3, 100 + seed, |x| (x[0] - 1.5).powi(2) + x[1]);
            let (_, report) = train_with_report(&data, &quick_hp(seed)).unwrap();
            assert!(
                report.best_validation_rmse < report.initial_validation_rmse,
                "seed {seed}: {} !< {}",
                report.best_validation_rmse,
                report.initial_validation_rmse
            );
        }
    }

    #[test]
    fn prediction_is_locally_linear() {
        let data = random_dataset(800, 2, 5, |x| x[0].max(x[1]) + 0.3 * x[0]);
        let model = train(&data, &quick_hp(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 50 {
            let a: [f64; 2] = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            // A nearby point almost surely shares the activation pattern.
            let b = [a[0] + 1e-6, (a[1] + 1e-6).min(3.0)];
            let pattern = |p: &[f64]| {
                let x = model.input_scaler.scale(p).unwrap();
                model.preactivations_scaled(x.view())[0].mapv(|z| z > 0.0)
            };
            if pattern(&a) != pattern(&b) {
                continue;
            }
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let expected =
                (model.predict(&a).unwrap() + model.predict(&b).unwrap()) / 2.0;
            assert!((model.predict(&mid).unwrap() - expected).abs() < 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let data = random_dataset(25, 3, 9, |x| x.iter().sum());
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(std::io::Cursor::new(buf), 0.0, 3.0).unwrap();
        assert_eq!(back.len(), data.len());
        assert_eq!(back.inputs, data.inputs);
        assert_eq!(back.targets, data.targets);
    }

    #[test]
    fn rejects_tiny_dataset() {
        let data = Dataset::new(Array2::zeros((1, 2)), Array1::zeros(1), 0.0, 3.0).unwrap();
        assert!(train(&data, &Hyperparams::default()).is_err());
    }
}
