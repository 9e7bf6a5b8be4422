//! Multinomial logistic regression trained with mini-batch SGD.
//!
//! The objective on a batch `B` is
//!
//! ```text
//! L(W, b) = (1/|B|) Σ_{i ∈ B} −log softmax(W x_i + b)[y_i]  +  (λ/2) ‖W‖²
//! ```
//!
//! with the bias left unregularized. Parameters and accumulations are f64.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::FeatureDataset;
use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub n_classes: usize,
    pub dim: usize,
    /// Row-major `n_classes × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub config: TrainConfig,
}

/// Gradient of the regularized objective plus the batch loss it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub loss: f64,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.weights.iter().chain(&self.bias).map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// `ln Σ exp(z)` evaluated stably.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

impl SoftmaxModel {
    pub fn zeros(n_classes: usize, dim: usize, config: TrainConfig) -> Self {
        SoftmaxModel {
            n_classes,
            dim,
            weights: vec![0.0; n_classes * dim],
            bias: vec![0.0; n_classes],
            config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let m: SoftmaxModel = serde_json::from_str(json)?;
        if m.weights.len() != m.n_classes * m.dim || m.bias.len() != m.n_classes {
            return Err(Error::Format("model parameter shapes disagree with header".into()));
        }
        Ok(m)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    pub(crate) fn logits_into(&self, x: &[f32], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + w.iter().zip(x).map(|(&w, &v)| w * f64::from(v)).sum::<f64>();
        }
    }

    /// Turns logits into probabilities in place.
    fn softmax_in_place(z: &mut [f64]) {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in z.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        z.iter_mut().for_each(|v| *v /= total);
    }

    pub(crate) fn proba_into(&self, x: &[f32], out: &mut [f64]) {
        self.logits_into(x, out);
        Self::softmax_in_place(out);
    }

    pub fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let mut p = vec![0.0; self.n_classes];
        self.proba_into(x, &mut p);
        Ok(p)
    }

    /// Argmax class, lowest index on ties.
    pub fn predict(&self, x: &[f32]) -> Result<usize> {
        let p = self.predict_proba(x)?;
        Ok(argmax(&p))
    }

    fn l2_penalty(&self) -> f64 {
        0.5 * self.config.l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Regularized mean cross-entropy over `batch`.
    pub fn objective(&self, data: &FeatureDataset, batch: &[usize]) -> Result<f64> {
        self.check_dim(data.dim())?;
        if batch.is_empty() {
            return Err(Error::domain("objective over an empty batch"));
        }
        let mut z = vec![0.0; self.n_classes];
        let mut total = 0.0;
        for &i in batch {
            self.logits_into(data.row(i), &mut z);
            total += log_sum_exp(&z) - z[data.label(i)];
        }
        Ok(total / batch.len() as f64 + self.l2_penalty())
    }

    /// Exact gradient of [`SoftmaxModel::objective`].
    pub fn gradient(&self, data: &FeatureDataset, batch: &[usize]) -> Result<Gradient> {
        self.check_dim(data.dim())?;
        if batch.is_empty() {
            return Err(Error::domain("gradient over an empty batch"));
        }
        let mut g = Gradient {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.n_classes],
            loss: 0.0,
        };
        let mut z = vec![0.0; self.n_classes];
        self.accumulate(data, batch, &mut g, &mut z);
        Ok(g)
    }

    fn accumulate(&self, data: &FeatureDataset, batch: &[usize], g: &mut Gradient, z: &mut [f64]) {
        g.weights.iter_mut().for_each(|v| *v = 0.0);
        g.bias.iter_mut().for_each(|v| *v = 0.0);
        let mut loss = 0.0;
        for &i in batch {
            let x = data.row(i);
            let y = data.label(i);
            self.logits_into(x, z);
            loss += log_sum_exp(z) - z[y];
            Self::softmax_in_place(z);
            z[y] -= 1.0;
            for (c, &r) in z.iter().enumerate() {
                g.bias[c] += r;
                let gw = &mut g.weights[c * self.dim..(c + 1) * self.dim];
                for (gw, &v) in gw.iter_mut().zip(x) {
                    *gw += r * f64::from(v);
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for (gw, &w) in g.weights.iter_mut().zip(&self.weights) {
            *gw = *gw * inv + self.config.l2 * w;
        }
        g.bias.iter_mut().for_each(|b| *b *= inv);
        g.loss = loss * inv + self.l2_penalty();
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = c;
        }
    }
    best
}

/// Trains on `subset` (order-insensitive), from zeros or from `warm_start`.
pub fn train(
    data: &FeatureDataset,
    subset: &[usize],
    config: &TrainConfig,
    warm_start: Option<&SoftmaxModel>,
) -> Result<SoftmaxModel> {
    config.validate()?;
    if subset.is_empty() {
        return Err(Error::domain("cannot train on an empty subset"));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= data.n_samples()) {
        return Err(Error::domain(format!("training index {bad} out of range")));
    }
    let mut model = match warm_start {
        Some(m) => {
            m.check_dim(data.dim())?;
            if m.n_classes != data.n_classes() {
                return Err(Error::DimensionMismatch {
                    expected: data.n_classes(),
                    got: m.n_classes,
                });
            }
            SoftmaxModel {
                config: config.clone(),
                ..m.clone()
            }
        }
        None => SoftmaxModel::zeros(data.n_classes(), data.dim(), config.clone()),
    };

    let mut order = subset.to_vec();
    order.sort_unstable();
    let root = RngState::new(config.seed).derive("sgd");
    let mut grad = Gradient {
        weights: vec![0.0; model.weights.len()],
        bias: vec![0.0; model.n_classes],
        loss: 0.0,
    };
    let mut z = vec![0.0; model.n_classes];
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut epoch_order = order.clone();
        epoch_order.shuffle(&mut root.derive_index("epoch", epoch as u64).rng());
        for batch in epoch_order.chunks(config.batch_size) {
            model.accumulate(data, batch, &mut grad, &mut z);
            if !grad.loss.is_finite() {
                return Err(Error::Training { step, loss: grad.loss });
            }
            let lr = config.learning_rate;
            for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                *w -= lr * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * g;
            }
            step += 1;
        }
    }
    if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
        return Err(Error::Training {
            step,
            loss: f64::NAN,
        });
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracyReport {
    pub per_class: Vec<f64>,
    pub overall: f64,
    /// Mean cross-entropy (no regularization term).
    pub loss: f64,
    pub class_counts: Vec<usize>,
}

pub fn evaluate(model: &SoftmaxModel, data: &FeatureDataset) -> Result<ClassAccuracyReport> {
    let all: Vec<usize> = (0..data.n_samples()).collect();
    evaluate_indices(model, data, &all)
}

/// Accuracy and loss restricted to `indices` of `data`.
pub fn evaluate_indices(model: &SoftmaxModel, data: &FeatureDataset, indices: &[usize]) -> Result<ClassAccuracyReport> {
    model.check_dim(data.dim())?;
    if indices.is_empty() {
        return Err(Error::domain("evaluation set is empty"));
    }
    let c = data.n_classes();
    let mut correct = vec![0usize; c];
    let mut counts = vec![0usize; c];
    let mut loss = 0.0;
    let mut z = vec![0.0; model.n_classes];
    for &i in indices {
        let y = data.label(i);
        model.logits_into(data.row(i), &mut z);
        loss += log_sum_exp(&z) - z[y];
        counts[y] += 1;
        if argmax(&z) == y {
            correct[y] += 1;
        }
    }
    let per_class = correct
        .iter()
        .zip(&counts)
        .map(|(&k, &n)| if n == 0 { 0.0 } else { k as f64 / n as f64 })
        .collect();
    Ok(ClassAccuracyReport {
        per_class,
        overall: correct.iter().sum::<usize>() as f64 / indices.len() as f64,
        loss: loss / indices.len() as f64,
        class_counts: counts,
    })
}
