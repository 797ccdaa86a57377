//! Analytic vs central-difference gradient comparison.
//!
//! Both sides run in `f64` on a cast copy of the parameters. Coordinates
//! whose `±eps` probes change the ReLU/max-pool activation pattern straddle
//! a kink, where the one-sided derivatives differ and central differences
//! are meaningless; they are counted and excluded.

use rand::seq::index::sample;

use super::TrainError;
use crate::dataset::{Batch, TaskMode};
use crate::exec::Exec;
use crate::loss::{sigmoid_ce, softmax_ce};
use crate::nn::{backward, forward, Caches, ForwardMode, ModelParams, Tensor};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Coordinates sampled per parameter tensor (all of them if the tensor is smaller).
    pub coords_per_tensor: usize,
    pub tolerance: f64,
    /// Below this `|analytic| + |numeric|` the absolute error is used instead.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            coords_per_tensor: 200,
            tolerance: 1e-3,
            abs_floor: 1e-8,
            seed: 0,
        }
    }
}

/// Parameter coordinate: tensor position in `ModelParams::tensors()` order
/// plus flat element index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coordinate {
    pub tensor: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<Coordinate>,
    pub worst_pair: (f64, f64),
    pub checked: usize,
    pub skipped_kinks: usize,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|)`, or `|a - n|` when both are negligible.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if analytic.abs() + numeric.abs() < abs_floor {
        diff
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

fn loss_and_caches(
    params: &ModelParams<f64>,
    inputs: &Tensor<f64>,
    batch: &Batch,
    mode: TaskMode,
    dropout_seed: u64,
) -> Result<(f64, Tensor<f64>, Caches<f64>), TrainError> {
    let pass = forward(
        params,
        inputs,
        ForwardMode::Train { dropout_seed },
        Exec::Sequential,
    )?;
    let loss = match mode {
        TaskMode::Classification => softmax_ce(&pass.logits, &batch.class_targets)?,
        TaskMode::Regression => {
            let t = batch
                .intensity_targets
                .as_ref()
                .ok_or(TrainError::ModeMismatch)?
                .cast::<f64>();
            sigmoid_ce(&pass.logits, &t)?
        }
    };
    Ok((loss.value, loss.dlogits, pass.caches.expect("train pass keeps caches")))
}

pub fn gradient_check(
    params: &ModelParams<f32>,
    batch: &Batch,
    mode: TaskMode,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, TrainError> {
    let mut p = params.cast::<f64>();
    let inputs = batch.inputs.cast::<f64>();
    let dropout_seed = opts.seed;
    let (_, dlogits, caches) = loss_and_caches(&p, &inputs, batch, mode, dropout_seed)?;
    let base_pattern = caches.activation_pattern();
    let grads = backward(&p, &caches, &dlogits, Exec::Sequential)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().map(|t| t.data().to_vec()).collect();

    let mut r = rng::derived(opts.seed, rng::stream::GRADCHECK, 0);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_pair: (0.0, 0.0),
        checked: 0,
        skipped_kinks: 0,
        passed: true,
    };
    let n_tensors = analytic.len();
    for ti in 0..n_tensors {
        let len = analytic[ti].len();
        let picks: Vec<usize> = if len <= opts.coords_per_tensor {
            (0..len).collect()
        } else {
            let mut v = sample(&mut r, len, opts.coords_per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        for idx in picks {
            let original = tensor_mut(&mut p, ti).data_mut()[idx];
            tensor_mut(&mut p, ti).data_mut()[idx] = original + opts.epsilon;
            let (plus, _, c_plus) = loss_and_caches(&p, &inputs, batch, mode, dropout_seed)?;
            tensor_mut(&mut p, ti).data_mut()[idx] = original - opts.epsilon;
            let (minus, _, c_minus) = loss_and_caches(&p, &inputs, batch, mode, dropout_seed)?;
            tensor_mut(&mut p, ti).data_mut()[idx] = original;
            if c_plus.activation_pattern() != base_pattern
                || c_minus.activation_pattern() != base_pattern
            {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let a = analytic[ti][idx];
            let err = relative_error(a, numeric, opts.abs_floor);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(Coordinate { tensor: ti, index: idx });
                report.worst_pair = (a, numeric);
            }
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    Ok(report)
}

fn tensor_mut(p: &mut ModelParams<f64>, i: usize) -> &mut Tensor<f64> {
    p.tensors_mut().nth(i).expect("tensor index in range")
}
