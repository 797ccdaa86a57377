//! Softmax cross-entropy (classification) and sigmoid cross-entropy
//! (intensity regression), both mean-reduced, with analytic gradients.
//!
//! Values are accumulated in `f64` whatever the tensor type.

use thiserror::Error;

use crate::nn::{Real, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("target class {index} out of range for {classes} logits")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("regression target {0} outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("logits {logits:?} do not match targets {targets:?}")]
    ShapeMismatch {
        logits: Vec<usize>,
        targets: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<T> {
    /// Mean loss over the batch.
    pub value: f64,
    pub dlogits: Tensor<T>,
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-(1/N) sum_i log softmax(z_i)[t_i]`; gradient `(softmax(z_i) - onehot(t_i)) / N`.
pub fn softmax_ce<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<LossValue<T>, LossError> {
    let (n, k) = logits.dims2().map_err(|_| LossError::ShapeMismatch {
        logits: logits.shape().to_vec(),
        targets: vec![targets.len()],
    })?;
    if n != targets.len() {
        return Err(LossError::ShapeMismatch {
            logits: logits.shape().to_vec(),
            targets: vec![targets.len()],
        });
    }
    if let Some(&index) = targets.iter().find(|&&t| t >= k) {
        return Err(LossError::IndexOutOfRange { index, classes: k });
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    for (i, &t) in targets.iter().enumerate() {
        let row: Vec<f64> = logits.row(i).iter().map(|v| v.as_f64()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
        total += log_sum - row[t];
        for (j, &z) in row.iter().enumerate() {
            let p = (z - log_sum).exp();
            let onehot = if j == t { 1.0 } else { 0.0 };
            grad.push(T::lit((p - onehot) / n as f64));
        }
    }
    Ok(LossValue {
        value: total / n as f64,
        dlogits: Tensor::from_vec(logits.shape().to_vec(), grad).expect("same shape"),
    })
}

/// Mean over all elements of `max(z, 0) - z t + log(1 + e^-|z|)`;
/// gradient `(sigmoid(z) - t) / (N * K)`.
pub fn sigmoid_ce<T: Real>(logits: &Tensor<T>, targets: &Tensor<T>) -> Result<LossValue<T>, LossError> {
    if logits.shape() != targets.shape() || logits.dims2().is_err() {
        return Err(LossError::ShapeMismatch {
            logits: logits.shape().to_vec(),
            targets: targets.shape().to_vec(),
        });
    }
    if let Some(t) = targets
        .data()
        .iter()
        .map(|t| t.as_f64())
        .find(|t| !(0.0..=1.0).contains(t))
    {
        return Err(LossError::TargetOutOfRange(t));
    }
    let count = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.data().iter().zip(targets.data()) {
        let (z, t) = (z.as_f64(), t.as_f64());
        total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push(T::lit((sigmoid(z) - t) / count));
    }
    Ok(LossValue {
        value: total / count,
        dlogits: Tensor::from_vec(logits.shape().to_vec(), grad).expect("same shape"),
    })
}
