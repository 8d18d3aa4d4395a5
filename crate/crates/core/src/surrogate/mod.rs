//! Rectifier-network surrogate of the quality score.
//!
//! The network maps scaled aiming factors to a standardized score. Hidden
//! layers use the rectifier, the output is linear. Per-neuron preactivation
//! bounds are propagated by interval arithmetic over the scaled input box;
//! they are what makes the exact mixed-integer embedding possible.

mod train;

pub use train::{train, train_with_report, Dataset, Hyperparams, TrainReport};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension min-max scaling of the aiming factors onto [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl InputScaler {
    /// Scaler for a shared box `[lo, hi]` in every dimension.
    pub fn from_box(dims: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidConfig(format!("degenerate input box [{lo}, {hi}]")));
        }
        Ok(InputScaler { min: vec![lo; dims], max: vec![hi; dims] })
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    #[inline]
    pub fn scale_dim(&self, value: f64, dim: usize) -> f64 {
        (value - self.min[dim]) / (self.max[dim] - self.min[dim])
    }

    #[inline]
    pub fn unscale_dim(&self, value: f64, dim: usize) -> f64 {
        self.min[dim] + value * (self.max[dim] - self.min[dim])
    }

    pub fn scale(&self, raw: &[f64]) -> Result<Array1<f64>> {
        if raw.len() != self.dims() {
            return Err(Error::Shape(format!(
                "expected {} inputs, got {}",
                self.dims(),
                raw.len()
            )));
        }
        Ok(Array1::from_iter(raw.iter().enumerate().map(|(j, &v)| self.scale_dim(v, j))))
    }

    pub fn unscale(&self, scaled: &[f64]) -> Vec<f64> {
        scaled.iter().enumerate().map(|(j, &v)| self.unscale_dim(v, j)).collect()
    }
}

/// Standardization of the score targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    /// Mean/std of the targets. An (effectively) constant target column gets
    /// unit scale so the transform stays invertible and well conditioned.
    pub fn fit(targets: &[f64]) -> Self {
        let n = targets.len().max(1) as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let floor = mean.abs() * 1e-9 + 1e-12;
        TargetScaler { mean, std: if std > floor { std } else { 1.0 } }
    }

    #[inline]
    pub fn scale(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    #[inline]
    pub fn unscale(&self, y: f64) -> f64 {
        self.mean + y * self.std
    }
}

/// Valid preactivation interval per neuron of one layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// A trained feedforward rectifier network with its scalers and bounds.
///
/// `weights[l]` has shape `(n_{l+1}, n_l)`; the last layer has one output
/// row. Models are immutable once built and safe to share across threads.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input_scaler: InputScaler,
    pub target_scaler: TargetScaler,
    /// Preactivation bounds per layer over the scaled unit box.
    pub bounds: Vec<LayerBounds>,
}

impl SurrogateModel {
    /// Builds a model from explicit layer parameters, computing preactivation
    /// bounds over the scaled unit box.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        input_scaler: InputScaler,
        target_scaler: TargetScaler,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Shape("weights and biases must pair per layer".into()));
        }
        let mut expected_in = input_scaler.dims();
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != expected_in {
                return Err(Error::Shape(format!(
                    "layer {} expects {} inputs, matrix has {}",
                    l + 1,
                    expected_in,
                    w.ncols()
                )));
            }
            if w.nrows() != b.len() {
                return Err(Error::Shape(format!(
                    "layer {} has {} rows but {} biases",
                    l + 1,
                    w.nrows(),
                    b.len()
                )));
            }
            expected_in = w.nrows();
        }
        if weights.last().map(|w| w.nrows()) != Some(1) {
            return Err(Error::Shape("output layer must have exactly one neuron".into()));
        }

        let mut model = SurrogateModel {
            weights,
            biases,
            input_scaler,
            target_scaler,
            bounds: Vec::new(),
        };
        let unit_box = vec![(0.0, 1.0); model.input_scaler.dims()];
        model.bounds = model.compute_bounds(&unit_box);
        Ok(model)
    }

    /// Number of hidden layers.
    pub fn hidden_layer_count(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.input_scaler.dims()
    }

    /// Layer widths including input and output: `[n0, n1, ..., 1]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut widths = vec![self.input_dim()];
        widths.extend(self.weights.iter().map(|w| w.nrows()));
        widths
    }

    /// Total number of hidden neurons.
    pub fn hidden_neuron_count(&self) -> usize {
        self.weights[..self.weights.len() - 1].iter().map(|w| w.nrows()).sum()
    }

    /// Forward pass in scaled units.
    pub fn forward_scaled(&self, x: ArrayView1<f64>) -> f64 {
        let mut activation = x.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(&activation) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activation = z;
        }
        activation[0]
    }

    /// Preactivations of every layer in scaled units, `z^1 .. z^{L+1}`.
    pub fn preactivations_scaled(&self, x: ArrayView1<f64>) -> Vec<Array1<f64>> {
        let mut activation = x.to_owned();
        let last = self.weights.len() - 1;
        let mut zs = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = w.dot(&activation) + b;
            zs.push(z.clone());
            if l < last {
                activation = z.mapv(|v| v.max(0.0));
            }
        }
        zs
    }

    /// Predicts the score for raw aiming factors.
    pub fn predict(&self, aim: &[f64]) -> Result<f64> {
        let x = self.input_scaler.scale(aim)?;
        Ok(self.target_scaler.unscale(self.forward_scaled(x.view())))
    }

    /// Interval-arithmetic preactivation bounds over a scaled input box.
    ///
    /// Layer by layer: the lower end takes negative weights at the interval
    /// top and positive weights at the bottom, the upper end the reverse; the
    /// rectified interval `[max(0, lo), max(0, hi)]` feeds the next layer.
    pub fn compute_bounds(&self, input_box: &[(f64, f64)]) -> Vec<LayerBounds> {
        let mut lo: Vec<f64> = input_box.iter().map(|b| b.0).collect();
        let mut hi: Vec<f64> = input_box.iter().map(|b| b.1).collect();
        let last = self.weights.len() - 1;
        let mut all = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut lower = vec![0.0; w.nrows()];
            let mut upper = vec![0.0; w.nrows()];
            for j in 0..w.nrows() {
                let mut m_minus = b[j];
                let mut m_plus = b[j];
                for i in 0..w.ncols() {
                    let wij = w[[j, i]];
                    if wij >= 0.0 {
                        m_minus += lo[i] * wij;
                        m_plus += hi[i] * wij;
                    } else {
                        m_minus += hi[i] * wij;
                        m_plus += lo[i] * wij;
                    }
                }
                lower[j] = m_minus;
                upper[j] = m_plus;
            }
            if l < last {
                lo = lower.iter().map(|&v| v.max(0.0)).collect();
                hi = upper.iter().map(|&v| v.max(0.0)).collect();
            }
            all.push(LayerBounds { lower, upper });
        }
        all
    }

    /// Serializes the model to the `helio-aim-nn/1` JSON document.
    pub fn to_json(&self) -> serde_json::Value {
        let doc = ModelDocument {
            format: FORMAT_TAG.to_string(),
            widths: self.widths(),
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().cloned().collect())
                .collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
            input_scaler: self.input_scaler.clone(),
            target_scaler: self.target_scaler.clone(),
            bounds: self.bounds.clone(),
        };
        serde_json::to_value(doc).expect("model document serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_value(value.clone())
            .map_err(|e| Error::Serialization(format!("model document: {e}")))?;
        if doc.format != FORMAT_TAG {
            return Err(Error::Serialization(format!(
                "unsupported model format {:?}, expected {FORMAT_TAG:?}",
                doc.format
            )));
        }
        if doc.widths.len() < 2 {
            return Err(Error::Serialization("model needs at least one layer".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..doc.widths.len() - 1 {
            let (rows, cols) = (doc.widths[l + 1], doc.widths[l]);
            let flat = doc
                .weights
                .get(l)
                .ok_or_else(|| Error::Serialization(format!("missing weights for layer {l}")))?;
            if flat.len() != rows * cols {
                return Err(Error::Serialization(format!(
                    "layer {l} weight count {} does not match {rows}x{cols}",
                    flat.len()
                )));
            }
            weights.push(
                Array2::from_shape_vec((rows, cols), flat.clone())
                    .map_err(|e| Error::Serialization(e.to_string()))?,
            );
            let b = doc
                .biases
                .get(l)
                .ok_or_else(|| Error::Serialization(format!("missing biases for layer {l}")))?;
            biases.push(Array1::from_vec(b.clone()));
        }
        let mut model =
            Self::from_parts(weights, biases, doc.input_scaler, doc.target_scaler)?;
        // Trust the stored bounds only if shapes line up; otherwise keep the
        // freshly computed ones.
        if doc.bounds.len() == model.bounds.len()
            && doc
                .bounds
                .iter()
                .zip(&model.bounds)
                .all(|(a, b)| a.lower.len() == b.lower.len() && a.upper.len() == b.upper.len())
        {
            model.bounds = doc.bounds;
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())
            .map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
        Self::from_json(&value)
    }
}

const FORMAT_TAG: &str = "helio-aim-nn/1";

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    widths: Vec<usize>,
    /// Row-major entries per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_scaler: InputScaler,
    target_scaler: TargetScaler,
    bounds: Vec<LayerBounds>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_scalers(dims: usize) -> (InputScaler, TargetScaler) {
        (
            InputScaler { min: vec![0.0; dims], max: vec![1.0; dims] },
            TargetScaler { mean: 0.0, std: 1.0 },
        )
    }

    fn tiny_net() -> SurrogateModel {
        // 1-2-1: hidden weights [1, -1], output sums both units.
        let (input_scaler, target_scaler) = identity_scalers(1);
        SurrogateModel::from_parts(
            vec![array![[1.0], [-1.0]], array![[1.0, 1.0]]],
            vec![array![0.0, 0.0], array![0.0]],
            input_scaler,
            target_scaler,
        )
        .unwrap()
    }

    #[test]
    fn hand_forward_pass() {
        let net = tiny_net();
        assert_eq!(net.predict(&[0.5]).unwrap(), 0.5);
        assert_eq!(net.predict(&[-0.5]).unwrap(), 0.5);
        assert_eq!(net.predict(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_weights_predict_output_bias() {
        let (input_scaler, _) = identity_scalers(3);
        let target_scaler = TargetScaler { mean: 10.0, std: 2.0 };
        let net = SurrogateModel::from_parts(
            vec![Array2::zeros((4, 3)), Array2::zeros((1, 4))],
            vec![Array1::zeros(4), array![1.5]],
            input_scaler,
            target_scaler,
        )
        .unwrap();
        for x in [[0.0, 0.0, 0.0], [0.3, 0.9, 0.1], [1.0, 1.0, 1.0]] {
            assert_eq!(net.predict(&x).unwrap(), 10.0 + 1.5 * 2.0);
        }
    }

    #[test]
    fn bounds_match_hand_interval() {
        // Single neuron, W = [1, -1], b = 0 over the unit square.
        let (input_scaler, target_scaler) = identity_scalers(2);
        let net = SurrogateModel::from_parts(
            vec![array![[1.0, -1.0]], array![[1.0]]],
            vec![array![0.0], array![0.0]],
            input_scaler,
            target_scaler,
        )
        .unwrap();
        let b = &net.bounds[0];
        assert_eq!(b.lower[0], -1.0);
        assert_eq!(b.upper[0], 1.0);
    }

    #[test]
    fn bounds_of_monotone_net_hit_corners() {
        let (input_scaler, target_scaler) = identity_scalers(3);
        let net = SurrogateModel::from_parts(
            vec![array![[0.5, 1.0, 2.0]], array![[1.0]]],
            vec![array![0.25], array![0.0]],
            input_scaler,
            target_scaler,
        )
        .unwrap();
        let b = &net.bounds[0];
        assert_eq!(b.lower[0], 0.25);
        assert_eq!(b.upper[0], 0.5 + 1.0 + 2.0 + 0.25);
    }

    #[test]
    fn sampled_preactivations_respect_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (input_scaler, target_scaler) = identity_scalers(3);
        let mut weights = Array2::zeros((6, 3));
        let mut out = Array2::zeros((1, 6));
        for w in weights.iter_mut() {
            *w = rng.random_range(-1.5..1.5);
        }
        for w in out.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        let net = SurrogateModel::from_parts(
            vec![weights, out],
            vec![
                Array1::from_iter((0..6).map(|_| rng.random_range(-0.5..0.5))),
                array![0.3],
            ],
            input_scaler,
            target_scaler,
        )
        .unwrap();

        for _ in 0..10_000 {
            let x = Array1::from_iter((0..3).map(|_| rng.random_range(0.0..=1.0)));
            for (layer, zs) in net.preactivations_scaled(x.view()).iter().enumerate() {
                let b = &net.bounds[layer];
                for (j, &z) in zs.iter().enumerate() {
                    assert!(
                        z >= b.lower[j] - 1e-12 && z <= b.upper[j] + 1e-12,
                        "layer {layer} neuron {j}: {z} outside [{}, {}]",
                        b.lower[j],
                        b.upper[j]
                    );
                }
            }
        }
    }

    #[test]
    fn scaler_round_trip() {
        let scaler = InputScaler { min: vec![0.0, 1.0], max: vec![3.0, 2.5] };
        let raw = [2.2, 1.7];
        let scaled = scaler.scale(&raw).unwrap();
        let back = scaler.unscale(scaled.as_slice().unwrap());
        for (a, b) in raw.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let ts = TargetScaler::fit(&[5.0, 7.0, 9.0]);
        for y in [-3.0, 0.0, 7.7] {
            assert!((ts.unscale(ts.scale(y)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_targets_keep_invertible_scaler() {
        let ts = TargetScaler::fit(&[4.2; 10]);
        assert_eq!(ts.std, 1.0);
        assert_eq!(ts.unscale(ts.scale(4.2)), 4.2);
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let net = tiny_net();
        let json = net.to_json();
        assert_eq!(json["format"], "helio-aim-nn/1");
        let back = SurrogateModel::from_json(&json).unwrap();
        for x in [0.0, 0.25, 0.5, 1.0] {
            assert_eq!(net.predict(&[x]).unwrap(), back.predict(&[x]).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let net = tiny_net();
        assert!(net.predict(&[0.1, 0.2]).is_err());
    }
}
