//! One-hidden-layer perceptron: 16 inputs, 32 ReLU units, one sigmoid output,
//! trained on mean squared error with Adam.
//!
//! Parameters live in one flat vector:
//! `W1` (32x16, row per hidden unit) at `0..512`, `b1` at `512..544`,
//! `w2` at `544..576`, `b2` at `576`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::standardize::StandardizerParams;
use crate::error::{Error, Result};
use crate::features::{ActivityLabel, FeatureRow, N_FEATURES};
use crate::seed;

pub const N_INPUT: usize = N_FEATURES;
pub const N_HIDDEN: usize = 32;
pub const N_PARAMS: usize = N_HIDDEN * N_INPUT + N_HIDDEN + N_HIDDEN + 1;
const B1: usize = N_HIDDEN * N_INPUT;
const W2: usize = B1 + N_HIDDEN;
const B2: usize = W2 + N_HIDDEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            epochs: 200,
            batch: 32,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Network output for an already standardized input.
pub fn forward(params: &[f64], x: &FeatureRow) -> f64 {
    let mut z2 = params[B2];
    for h in 0..N_HIDDEN {
        let w = &params[h * N_INPUT..(h + 1) * N_INPUT];
        let mut z = params[B1 + h];
        for i in 0..N_INPUT {
            z += w[i] * x[i];
        }
        if z > 0.0 {
            z2 += params[W2 + h] * z;
        }
    }
    sigmoid(z2)
}

/// Mean squared error over the batch; the gradient is written to `grad`.
pub fn loss_and_grad(params: &[f64], xs: &[FeatureRow], ts: &[f64], grad: &mut [f64]) -> f64 {
    debug_assert_eq!(params.len(), N_PARAMS);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / xs.len() as f64;
    let mut loss = 0.0;
    let mut z1 = [0.0f64; N_HIDDEN];
    for (x, &t) in xs.iter().zip(ts) {
        let mut z2 = params[B2];
        for h in 0..N_HIDDEN {
            let w = &params[h * N_INPUT..(h + 1) * N_INPUT];
            let mut z = params[B1 + h];
            for i in 0..N_INPUT {
                z += w[i] * x[i];
            }
            z1[h] = z;
            if z > 0.0 {
                z2 += params[W2 + h] * z;
            }
        }
        let y = sigmoid(z2);
        let err = y - t;
        loss += err * err;
        let dz2 = 2.0 * err * scale * y * (1.0 - y);
        grad[B2] += dz2;
        for h in 0..N_HIDDEN {
            if z1[h] > 0.0 {
                grad[W2 + h] += dz2 * z1[h];
                let dz1 = dz2 * params[W2 + h];
                grad[B1 + h] += dz1;
                let g = &mut grad[h * N_INPUT..(h + 1) * N_INPUT];
                for i in 0..N_INPUT {
                    g[i] += dz1 * x[i];
                }
            }
        }
    }
    loss * scale
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub standardizer: StandardizerParams,
    pub params: Vec<f64>,
}

impl MlpModel {
    /// Sigmoid output for a raw feature row; above 0.5 means video watching.
    pub fn score(&self, x: &FeatureRow) -> f64 {
        forward(&self.params, &self.standardizer.transform(x))
    }

    pub fn predict(&self, x: &FeatureRow) -> ActivityLabel {
        if self.score(x) > 0.5 {
            ActivityLabel::VideoWatching
        } else {
            ActivityLabel::Reading
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.params.len() != N_PARAMS {
            return Err(Error::Training(format!("expected {N_PARAMS} parameters, found {}", self.params.len())));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite network parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFit {
    pub model: MlpModel,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Uniform in +-1/sqrt(fan_in) for every weight and bias.
pub fn init_params(seed: u64) -> Vec<f64> {
    let mut rng = seed::derived_rng(seed, "mlp-init", 0);
    let mut p = vec![0.0; N_PARAMS];
    let a1 = 1.0 / (N_INPUT as f64).sqrt();
    let a2 = 1.0 / (N_HIDDEN as f64).sqrt();
    for (k, v) in p.iter_mut().enumerate() {
        let a = if k < W2 { a1 } else { a2 };
        *v = rng.random_range(-a..a);
    }
    p
}

pub fn train_mlp(x: &[FeatureRow], y: &[ActivityLabel], hp: &MlpParams, seed: u64) -> Result<MlpFit> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Training(format!("{} rows with {} labels", x.len(), y.len())));
    }
    if hp.batch == 0 || hp.epochs == 0 {
        return Err(Error::Config("MLP batch size and epochs must be positive".into()));
    }
    let standardizer = StandardizerParams::fit(x)?;
    let xs: Vec<FeatureRow> = x.iter().map(|r| standardizer.transform(r)).collect();
    let ts: Vec<f64> = y.iter().map(|l| l.target()).collect();
    let mut params = init_params(seed);
    let mut adam = Adam::new(N_PARAMS, hp.lr, hp.beta1, hp.beta2, hp.eps);
    let mut grad = vec![0.0; N_PARAMS];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut bx: Vec<FeatureRow> = Vec::with_capacity(hp.batch);
    let mut bt: Vec<f64> = Vec::with_capacity(hp.batch);
    let mut loss_curve = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut seed::derived_rng(seed, "mlp-epoch", epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(hp.batch) {
            bx.clear();
            bt.clear();
            bx.extend(chunk.iter().map(|&i| xs[i]));
            bt.extend(chunk.iter().map(|&i| ts[i]));
            let loss = loss_and_grad(&params, &bx, &bt, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite MLP loss at epoch {epoch}")));
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut params, &grad);
        }
        loss_curve.push(total / xs.len() as f64);
    }
    let model = MlpModel { standardizer, params };
    model.check()?;
    Ok(MlpFit { model, loss_curve })
}
