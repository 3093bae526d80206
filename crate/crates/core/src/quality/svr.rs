//! Linear epsilon-insensitive support-vector regression trained by
//! stochastic subgradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub epsilon: f64,
    /// L2 penalty on the weights (the bias is not penalized).
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            lambda: 1e-3,
            epochs: 300,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Weights followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvr {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvr {
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Objective: `mean(max(0, |w.x + b - y| - eps)) + lambda |w|^2`.
///
/// Step size decays as `lr / sqrt(1 + epoch)`; the returned model is the
/// average of the iterates over the second half of training.
pub fn train_svr(x: &[Vec<f64>], y: &[f64], config: &SvrConfig) -> Result<LinearSvr> {
    if x.is_empty() {
        return Err(Error::Empty("quality training set"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows vs {} targets",
            x.len(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite quality target".into()));
    }
    let dim = x[0].len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let mut averaged = 0usize;
    let average_from = config.epochs / 2;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let eta = config.learning_rate / (1.0 + epoch as f64).sqrt();
        for &i in &order {
            let residual = dot(&w, &x[i]) + b - y[i];
            let g = if residual > config.epsilon {
                1.0
            } else if residual < -config.epsilon {
                -1.0
            } else {
                0.0
            };
            for (wj, xj) in w.iter_mut().zip(&x[i]) {
                *wj -= eta * (g * xj + 2.0 * config.lambda * *wj);
            }
            b -= eta * g;
        }
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("SVR weights at epoch {epoch}")));
        }
        if epoch >= average_from {
            averaged += 1;
            let t = averaged as f64;
            for (a, wj) in avg_w.iter_mut().zip(&w) {
                *a += (wj - *a) / t;
            }
            avg_b += (b - avg_b) / t;
        }
    }
    if averaged == 0 {
        return Ok(LinearSvr {
            weights: w,
            bias: b,
        });
    }
    Ok(LinearSvr {
        weights: avg_w,
        bias: avg_b,
    })
}
