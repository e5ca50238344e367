use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, LogRegParams, SvmParams};

/// Per-feature centering and scaling fitted on training rows.
///
/// A column with zero spread is flagged constant and scaled by 1, so it
/// standardizes to 0 everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            constant: vec![false; dim],
        }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let mut scale = Vec::with_capacity(dim);
        let mut constant = Vec::with_capacity(dim);
        for (j, v) in var.iter().enumerate() {
            let sd = (v / n).sqrt();
            if sd > 0.0 {
                scale.push(sd);
                constant.push(false);
            } else {
                log::debug!("feature {j} is constant across the training rows");
                scale.push(1.0);
                constant.push(true);
            }
        }
        Self {
            mean,
            scale,
            constant,
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

/// Affine classifier on standardized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn new(standardizer: Standardizer, weights: Vec<f64>, bias: f64) -> Self {
        assert_eq!(standardizer.mean.len(), weights.len());
        Self {
            standardizer,
            weights,
            bias,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Signed score; positive means malicious.
    pub fn decision(&self, row: &[f64]) -> f64 {
        dot(&self.weights, &self.standardizer.apply(row)) + self.bias
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn signs(data: &LabeledDataset) -> Vec<f64> {
    data.labels()
        .iter()
        .map(|l| if l.is_malicious() { 1.0 } else { -1.0 })
        .collect()
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mean log loss plus `l2 / 2 * |w|^2` (bias unpenalized), with its
/// gradient. Labels are `+1` malicious, `-1` benign.
pub fn logreg_objective(
    weights: &[f64],
    bias: f64,
    rows: &[Vec<f64>],
    signs: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_bias = 0.0;
    for (row, &y) in rows.iter().zip(signs) {
        let margin = y * (dot(weights, row) + bias);
        loss += softplus(-margin);
        // d/dz softplus(-y z) = -y * sigmoid(-y z)
        let coeff = -y * sigmoid(-margin);
        for (g, x) in grad.iter_mut().zip(row) {
            *g += coeff * x;
        }
        grad_bias += coeff;
    }
    loss /= n;
    grad_bias /= n;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * dot(weights, weights);
    (loss, grad, grad_bias)
}

pub struct LogisticFit {
    pub model: LinearModel,
    /// Objective before each update, then after the last one.
    pub losses: Vec<f64>,
}

pub(crate) fn fit_logreg(data: &LabeledDataset, params: &LogRegParams) -> LogisticFit {
    let standardizer = Standardizer::fit(data.rows());
    let rows: Vec<Vec<f64>> = data.rows().iter().map(|r| standardizer.apply(r)).collect();
    let y = signs(data);
    let mut weights = vec![0.0; data.dim()];
    let mut bias = 0.0;
    let mut losses = Vec::with_capacity(params.epochs + 1);
    for _ in 0..params.epochs {
        let (loss, grad, grad_bias) = logreg_objective(&weights, bias, &rows, &y, params.l2);
        losses.push(loss);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= params.learning_rate * g;
        }
        bias -= params.learning_rate * grad_bias;
    }
    losses.push(logreg_objective(&weights, bias, &rows, &y, params.l2).0);
    LogisticFit {
        model: LinearModel::new(standardizer, weights, bias),
        losses,
    }
}

/// Pegasos with the bias folded in as a weight on a constant feature.
///
/// Step `t` uses rate `1 / (lambda t)` and is followed by projection onto
/// the ball of radius `1 / sqrt(lambda)`. Each pass visits every row once
/// in a freshly shuffled order.
pub(crate) fn fit_svm(data: &LabeledDataset, params: &SvmParams, seed: u64) -> LinearModel {
    let standardizer = Standardizer::fit(data.rows());
    let rows: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|r| {
            let mut z = standardizer.apply(r);
            z.push(1.0);
            z
        })
        .collect();
    let y = signs(data);
    let n = rows.len();
    let passes = params.passes.max(params.min_steps.div_ceil(n));
    let lambda = params.lambda;
    let radius = 1.0 / lambda.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; data.dim() + 1];
    let mut t = 0u64;
    for _ in 0..passes {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let violated = y[i] * dot(&w, &rows[i]) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if violated {
                for (v, x) in w.iter_mut().zip(&rows[i]) {
                    *v += eta * y[i] * x;
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    let bias = w.pop().expect("bias weight");
    LinearModel::new(standardizer, w, bias)
}
