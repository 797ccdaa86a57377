//! Confusion matrices, accuracy, RMSE and latency accounting.

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::dataset::{input_tensor, Batch, DatasetError, EmotionClass, LabeledImage, TaskMode, NUM_CLASSES};
use crate::exec::Exec;
use crate::loss::{sigmoid, sigmoid_ce, softmax, softmax_ce, LossError};
use crate::nn::{infer, ModelParams, NnError, Real, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("nothing to evaluate")]
    Empty,
    #[error("regression evaluation needs intensity labels on every sample")]
    MissingIntensity,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("{0}")]
    Dataset(String),
}

impl From<DatasetError> for EvalError {
    fn from(e: DatasetError) -> Self {
        EvalError::Dataset(e.to_string())
    }
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    /// Elementwise sum, for merging partial results.
    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>10}", "true\\pred")?;
        for c in EmotionClass::ALL {
            write!(f, " {:>8}", c.name())?;
        }
        writeln!(f)?;
        for (c, row) in EmotionClass::ALL.iter().zip(&self.counts) {
            write!(f, "{:>10}", c.name())?;
            for v in row {
                write!(f, " {v:>8}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn confusion(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= NUM_CLASSES || t >= NUM_CLASSES {
            return Err(EvalError::IndexOutOfRange(p.max(t)));
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}

/// `sqrt(mean((p - t)^2))` over every element.
pub fn rmse<T: Real>(preds: &Tensor<T>, targets: &Tensor<T>) -> Result<f64, EvalError> {
    if preds.shape() != targets.shape() {
        return Err(EvalError::ShapeMismatch(
            preds.shape().to_vec(),
            targets.shape().to_vec(),
        ));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let sse: f64 = preds
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, t)| (p.as_f64() - t.as_f64()).powi(2))
        .sum();
    Ok((sse / preds.len() as f64).sqrt())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise argmax of `(N, 7)` intensities.
pub fn regression_to_class<T: Real>(intensities: &Tensor<T>) -> Vec<usize> {
    let n = intensities.shape().first().copied().unwrap_or(0);
    (0..n)
        .map(|i| {
            let row: Vec<f64> = intensities.row(i).iter().map(|v| v.as_f64()).collect();
            argmax(&row)
        })
        .collect()
}

/// Per-sample model output after the head's squashing function:
/// softmax probabilities in classification mode, sigmoid intensities in
/// regression mode.
pub fn head_output(logits: &[f64], mode: TaskMode) -> Vec<f64> {
    match mode {
        TaskMode::Classification => softmax(logits),
        TaskMode::Regression => logits.iter().map(|&z| sigmoid(z)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean loss over the whole set.
    pub loss: f64,
    pub confusion: ConfusionMatrix,
    /// Regression mode only: RMSE of sigmoid outputs against the intensity labels.
    pub rmse: Option<f64>,
}

const EVAL_CHUNK: usize = 32;

/// Loss, confusion matrix and (in regression mode) RMSE over `set`.
pub fn evaluate(
    params: &ModelParams<f32>,
    set: &[LabeledImage],
    mode: TaskMode,
    exec: Exec,
) -> Result<Evaluation, EvalError> {
    if set.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut loss_sum = 0.0;
    let mut preds = Vec::with_capacity(set.len());
    let mut outputs = Vec::with_capacity(set.len() * NUM_CLASSES);
    let mut targets = Vec::with_capacity(set.len() * NUM_CLASSES);
    for chunk in set.chunks(EVAL_CHUNK) {
        let batch = Batch::from_items(chunk)?;
        let logits = infer(params, &batch.inputs, exec)?;
        let value = match mode {
            TaskMode::Classification => softmax_ce(&logits, &batch.class_targets)?.value,
            TaskMode::Regression => {
                let t = batch
                    .intensity_targets
                    .as_ref()
                    .ok_or(EvalError::MissingIntensity)?;
                targets.extend(t.data().iter().map(|&v| v as f64));
                sigmoid_ce(&logits, t)?.value
            }
        };
        loss_sum += value * chunk.len() as f64;
        for i in 0..chunk.len() {
            let row: Vec<f64> = logits.row(i).iter().map(|v| v.as_f64()).collect();
            let out = head_output(&row, mode);
            preds.push(argmax(&out));
            outputs.extend(out);
        }
    }
    let labels: Vec<usize> = set.iter().map(|s| s.label.index()).collect();
    let rmse = match mode {
        TaskMode::Classification => None,
        TaskMode::Regression => {
            let shape = vec![set.len(), NUM_CLASSES];
            Some(rmse(
                &Tensor::from_vec(shape.clone(), outputs)?,
                &Tensor::from_vec(shape, targets)?,
            )?)
        }
    };
    Ok(Evaluation {
        loss: loss_sum / set.len() as f64,
        confusion: confusion(&preds, &labels)?,
        rmse,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyReport {
    pub total_seconds: f64,
    pub images: usize,
    pub seconds_per_image: f64,
}

impl fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} images in {:.4e} s ({:.4e} s/image)",
            self.images, self.total_seconds, self.seconds_per_image
        )
    }
}

/// Times single-threaded, one-image-at-a-time inference on already aligned inputs.
pub fn latency_report(
    params: &ModelParams<f32>,
    samples: &[LabeledImage],
) -> Result<LatencyReport, NnError> {
    let start = Instant::now();
    for s in samples {
        infer(params, &input_tensor(&s.image), Exec::Sequential)?;
    }
    let total_seconds = start.elapsed().as_secs_f64();
    let images = samples.len();
    Ok(LatencyReport {
        total_seconds,
        images,
        seconds_per_image: if images == 0 {
            0.0
        } else {
            total_seconds / images as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::intensity_label;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictor() {
        let labels = [0, 3, 3, 6, 4, 1];
        let m = confusion(&labels, &labels).unwrap();
        assert_eq!(m.accuracy(), 1.0);
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    assert_eq!(m.counts[i][j], 0);
                }
            }
        }
    }

    #[test]
    fn hand_counted_case() {
        let m = confusion(&[0, 1, 1], &[0, 0, 1]).unwrap();
        assert_eq!(m.counts[0][0], 1);
        assert_eq!(m.counts[0][1], 1);
        assert_eq!(m.counts[1][1], 1);
        assert_eq!(m.total(), 3);
        assert!((m.accuracy() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.row_sums()[0], 2);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion(&[0], &[0, 1]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert_eq!(confusion(&[7], &[0]), Err(EvalError::IndexOutOfRange(7)));
        assert_eq!(confusion(&[], &[]), Err(EvalError::Empty));
    }

    #[test]
    fn rmse_cases() {
        let t = Tensor::from_vec(vec![2, 7], (0..14).map(|i| i as f64 / 14.0).collect()).unwrap();
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let shifted = t.map(|v| v + 0.1);
        assert!((rmse(&shifted, &t).unwrap() - 0.1).abs() < 1e-12);
        let p = Tensor::from_vec(vec![1, 7], vec![0.1, -0.2, 0.0, 0.0, 0.0, 0.0, 0.2]).unwrap();
        let z = Tensor::zeros(&[1, 7]);
        assert!((rmse(&p, &z).unwrap() - (0.09f64 / 7.0).sqrt()).abs() < 1e-12);
        assert!(rmse(&p, &Tensor::zeros(&[7, 1])).is_err());
    }

    #[test]
    fn argmax_rules() {
        let t = Tensor::from_vec(vec![2, 7], vec![
            0.1, 0.05, 0.02, 0.9, 0.3, 0.1, 0.2, //
            0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
        ])
        .unwrap();
        assert_eq!(regression_to_class(&t), vec![3, 0]);
        let sad = intensity_label(EmotionClass::Sad, 0.8).unwrap();
        assert_eq!(argmax(sad.as_array()), EmotionClass::Sad.index());
    }

    #[test]
    fn display_has_all_classes() {
        let m = confusion(&[0, 6], &[0, 5]).unwrap();
        let s = m.to_string();
        assert!(s.contains("surprise") && s.contains("angry"));
        assert_eq!(s.lines().count(), 8);
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_monotone_map(row in proptest::collection::vec(-5.0f64..5.0, 7)) {
            let mapped: Vec<f64> = row.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(argmax(&row), argmax(&mapped));
        }

        #[test]
        fn rmse_symmetric(a in proptest::collection::vec(0.0f64..1.0, 14), b in proptest::collection::vec(0.0f64..1.0, 14)) {
            let ta = Tensor::from_vec(vec![2, 7], a).unwrap();
            let tb = Tensor::from_vec(vec![2, 7], b).unwrap();
            prop_assert_eq!(rmse(&ta, &tb).unwrap(), rmse(&tb, &ta).unwrap());
        }

        #[test]
        fn row_sums_are_class_counts(labels in proptest::collection::vec(0usize..7, 1..50), seed in any::<u64>()) {
            let preds: Vec<usize> = labels.iter().enumerate().map(|(i, _)| ((seed as usize).wrapping_add(i * 31)) % 7).collect();
            let m = confusion(&preds, &labels).unwrap();
            for c in 0..7 {
                prop_assert_eq!(m.row_sums()[c], labels.iter().filter(|&&l| l == c).count() as u64);
            }
        }
    }
}
