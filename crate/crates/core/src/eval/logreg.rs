//! Binary logistic regression trained by SGD on standardized features.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.05,
            l2: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LogRegModel {
    /// Linear score; monotone in the predicted probability.
    pub fn decision(&self, x: &[f32]) -> f64 {
        let mut z = self.bias;
        for (i, &xi) in x.iter().enumerate() {
            z += self.weights[i] * (xi as f64 - self.mean[i]) * self.inv_std[i];
        }
        z
    }

    pub fn probability(&self, x: &[f32]) -> f64 {
        1.0 / (1.0 + (-self.decision(x)).exp())
    }

    /// Weights expressed on the raw (unstandardized) feature scale.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.inv_std).map(|(w, s)| w * s).collect()
    }
}

/// Fits a model on the rows of the row-major `features` (`dim` columns).
pub fn train_logreg(features: &[f32], dim: usize, labels: &[bool], cfg: &LogRegConfig) -> Result<LogRegModel> {
    let n = labels.len();
    if dim == 0 || features.len() != n * dim {
        return Err(Error::Training(format!(
            "{} feature values for {n} rows of dimension {dim}",
            features.len()
        )));
    }
    let positives = labels.iter().filter(|&&b| b).count();
    if positives == 0 || positives == n {
        return Err(Error::Training("both classes must be present".into()));
    }

    let mut mean = vec![0f64; dim];
    let mut var = vec![0f64; dim];
    for row in features.chunks_exact(dim) {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in features.chunks_exact(dim) {
        for ((v, &x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x as f64 - m).powi(2);
        }
    }
    let inv_std: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = (v / n as f64).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();

    let mut model = LogRegModel {
        weights: vec![0.0; dim],
        bias: 0.0,
        mean,
        inv_std,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(cfg.seed, 0);
    let mut z = vec![0f64; dim];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate / (1.0 + epoch as f64);
        for &i in &order {
            let row = &features[i * dim..(i + 1) * dim];
            let mut dot = model.bias;
            for k in 0..dim {
                z[k] = (row[k] as f64 - model.mean[k]) * model.inv_std[k];
                dot += model.weights[k] * z[k];
            }
            let p = 1.0 / (1.0 + (-dot).exp());
            let g = f64::from(u8::from(labels[i])) - p;
            for k in 0..dim {
                model.weights[k] += lr * (g * z[k] - cfg.l2 * model.weights[k]);
            }
            model.bias += lr * g;
        }
    }
    if !model.weights.iter().all(|w| w.is_finite()) || !model.bias.is_finite() {
        return Err(Error::Training("logistic regression diverged".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_pair() {
        let model = train_logreg(&[-1.0, 1.0], 1, &[false, true], &LogRegConfig::default()).unwrap();
        assert!(model.probability(&[-1.0]) < 0.5);
        assert!(model.probability(&[1.0]) > 0.5);
    }

    #[test]
    fn sign_of_threshold_feature() {
        let xs: Vec<f32> = (-50..50).map(|i| i as f32 / 10.0 + 0.05).collect();
        let ys: Vec<bool> = xs.iter().map(|&x| x > 0.0).collect();
        let model = train_logreg(&xs, 1, &ys, &LogRegConfig::default()).unwrap();
        assert!(model.raw_weights()[0] > 0.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let r = train_logreg(&[1.0, 2.0], 1, &[true, true], &LogRegConfig::default());
        assert!(matches!(r, Err(Error::Training(_))));
    }

    #[test]
    fn deterministic() {
        let xs: Vec<f32> = (0..200).map(|i| ((i * 37) % 101) as f32 / 50.0 - 1.0).collect();
        let ys: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
        let cfg = LogRegConfig { seed: 9, ..Default::default() };
        assert_eq!(train_logreg(&xs, 2, &ys, &cfg).unwrap(), train_logreg(&xs, 2, &ys, &cfg).unwrap());
    }
}
