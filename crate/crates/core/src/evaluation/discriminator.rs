//! Real-vs-synthetic discriminator: an L2-regularized logistic regression
//! trained with a fixed full-batch gradient-descent budget, scored by k-fold
//! cross-validation on class-balanced folds.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encode::OneHotEncoder;
use super::EvalError;
use crate::dataset::Table;
use crate::sampler::record_rng;

pub const FOLDS: usize = 5;
const ITERATIONS: usize = 300;
const L2: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorReport {
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub fold_accuracy: Vec<f64>,
    /// Rows per class after balancing.
    pub rows_per_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    /// Standardizes with the training statistics, then runs gradient descent
    /// with step `1 / L`, `L` the smoothness bound of the logistic loss.
    pub fn fit(x: &[Vec<f64>], y: &[bool]) -> Self {
        let n = x.len() as f64;
        let d = x.first().map_or(0, Vec::len);
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| (0..d).map(|j| (r[j] - mean[j]) / scale[j]).collect())
            .collect();
        let step = 1.0 / (0.25 * (d as f64 + 1.0) + L2);
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..ITERATIONS {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (row, &label) in z.iter().zip(y) {
                let p = sigmoid(b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>());
                let err = p - f64::from(u8::from(label));
                gb += err;
                for (g, a) in gw.iter_mut().zip(row) {
                    *g += err * a;
                }
            }
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj -= step * (gj / n + L2 * *wj);
            }
            b -= step * gb / n;
        }
        Self {
            mean,
            scale,
            weights: w,
            bias: b,
        }
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        let z: f64 = row
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.scale[j] * self.weights[j])
            .sum::<f64>()
            + self.bias;
        z > 0.0
    }
}

/// Fold boundaries splitting `n` items into `k` near-equal consecutive runs.
fn fold_bounds(n: usize, k: usize) -> Vec<usize> {
    (0..=k).map(|j| j * n / k).collect()
}

/// K-fold accuracy with folds stratified by label. When both classes have the
/// same size every fold is exactly balanced.
pub fn cross_validated_accuracy(x: &[Vec<f64>], y: &[bool], folds: usize, seed: u64) -> Vec<f64> {
    let mut rng = record_rng(seed, 0);
    let mut fold_of = vec![0usize; x.len()];
    for class in [false, true] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(&mut rng);
        let bounds = fold_bounds(members.len(), folds);
        for j in 0..folds {
            for &i in &members[bounds[j]..bounds[j + 1]] {
                fold_of[i] = j;
            }
        }
    }
    (0..folds)
        .map(|j| {
            let (mut tx, mut ty) = (Vec::new(), Vec::new());
            let mut test = Vec::new();
            for i in 0..x.len() {
                if fold_of[i] == j {
                    test.push(i);
                } else {
                    tx.push(x[i].clone());
                    ty.push(y[i]);
                }
            }
            let model = LogisticModel::fit(&tx, &ty);
            let correct = test.iter().filter(|&&i| model.predict(&x[i]) == y[i]).count();
            correct as f64 / test.len().max(1) as f64
        })
        .collect()
}

/// Balanced real-vs-synthetic cross-validation; lower accuracy means the
/// synthetic rows are harder to tell apart from real ones.
pub fn eval_discriminator(synthetic: &Table, real: &Table, seed: u64) -> Result<DiscriminatorReport, EvalError> {
    let m = synthetic.len().min(real.len());
    if m < FOLDS {
        return Err(EvalError::TooFewRows { needed: FOLDS, found: m });
    }
    let mut rng = record_rng(seed, 1);
    let mut pick = |t: &Table| {
        let mut idx: Vec<usize> = (0..t.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(m);
        idx.sort_unstable();
        t.select(&idx)
    };
    let real_b = pick(real);
    let synth_b = pick(synthetic);
    let encoder = OneHotEncoder::fit(&[&real_b, &synth_b], None);
    let mut x = encoder.transform(&real_b);
    x.extend(encoder.transform(&synth_b));
    let y: Vec<bool> = (0..2 * m).map(|i| i >= m).collect();
    let fold_accuracy = cross_validated_accuracy(&x, &y, FOLDS, seed);
    let mean = fold_accuracy.iter().sum::<f64>() / FOLDS as f64;
    let var = fold_accuracy.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (FOLDS - 1) as f64;
    Ok(DiscriminatorReport {
        mean_accuracy: mean,
        sd_accuracy: var.sqrt(),
        fold_accuracy,
        rows_per_class: m,
    })
}
