//! SGD with momentum, the training loop, checkpoints and model files.

mod gradcheck;
mod model_file;

pub use gradcheck::{gradient_check, relative_error, Coordinate, GradCheckOptions, GradCheckReport};
pub use model_file::{
    decode_model, encode_model, encoded_len, load_model, save_model, ModelFileError,
    FORMAT_VERSION, MAGIC,
};

use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{batches_per_epoch, epoch_order, Batch, DatasetError, LabeledImage, TaskMode};
use crate::eval::{evaluate, EvalError};
use crate::exec::Exec;
use crate::loss::{sigmoid_ce, softmax_ce, LossError, LossValue};
use crate::nn::{backward, forward, init_params, Architecture, ForwardMode, ModelParams, NnError, Real};
use crate::rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite loss {value} at iteration {iteration}")]
    NonFiniteLoss { iteration: u64, value: f64 },
    #[error("regression training needs intensity labels on every sample")]
    ModeMismatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint encoding: {0}")]
    Encoding(#[from] bincode::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub seed: u64,
    /// Validation and checkpoint period in iterations.
    pub checkpoint_every: u64,
    pub mode: TaskMode,
    /// The learning rate is multiplied by `lr_decay` every `lr_decay_every` iterations.
    pub lr_decay: f64,
    pub lr_decay_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            max_iterations: 50_000,
            seed: 0,
            checkpoint_every: 1_000,
            mode: TaskMode::Classification,
            lr_decay: 0.1,
            lr_decay_every: 20_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max iterations must be at least 1");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint period must be at least 1");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) || self.lr_decay_every == 0 {
            return bad("learning-rate decay must be positive with a non-zero period");
        }
        Ok(())
    }

    /// Step-decayed learning rate for `iteration` (0-based).
    pub fn lr_at(&self, iteration: u64) -> f64 {
        self.learning_rate * self.lr_decay.powi((iteration / self.lr_decay_every) as i32)
    }
}

/// Classic momentum: `v <- m v - lr g`, `p <- p + v`.
pub fn sgd_step<T: Real>(
    params: &mut ModelParams<T>,
    velocities: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    lr: f64,
    momentum: f64,
) -> Result<(), TrainError> {
    let (lr, m) = (T::lit(lr), T::lit(momentum));
    let shapes_ok = params.tensors().count() == velocities.tensors().count()
        && params.tensors().count() == grads.tensors().count()
        && params
            .tensors()
            .zip(velocities.tensors())
            .zip(grads.tensors())
            .all(|((p, v), g)| p.shape() == v.shape() && p.shape() == g.shape());
    if !shapes_ok {
        return Err(TrainError::ShapeMismatch(
            "parameters, velocities and gradients disagree".into(),
        ));
    }
    for ((p, v), g) in params
        .tensors_mut()
        .zip(velocities.tensors_mut())
        .zip(grads.tensors())
    {
        for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vv = m * *vv - lr * gv;
            *pv += *vv;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub iteration: u64,
    pub loss: f64,
    pub accuracy: f64,
    pub rmse: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Training loss of every iteration, in order.
    pub train_loss: Vec<f64>,
    pub validation: Vec<ValidationRecord>,
}

impl History {
    /// `iteration,loss` lines, iterations counted from 1.
    pub fn loss_log(&self) -> String {
        self.train_loss
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{},{l}\n", i + 1))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Completed iterations.
    pub iteration: u64,
    pub params: ModelParams<f32>,
    pub velocities: ModelParams<f32>,
    pub config: TrainConfig,
    pub history: History,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        bincode::serialize_into(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ckpt: Checkpoint = bincode::deserialize_from(file)?;
        ckpt.params.check()?;
        ckpt.velocities.check()?;
        if ckpt.params.arch != ckpt.velocities.arch {
            return Err(TrainError::ShapeMismatch(
                "checkpoint velocities do not match parameters".into(),
            ));
        }
        Ok(ckpt)
    }
}

/// Stateful trainer. Batch order depends only on `(seed, epoch)` and dropout
/// masks only on `(seed, iteration)`, so a trainer restored from a
/// checkpoint continues exactly as the uninterrupted run would.
pub struct Trainer {
    config: TrainConfig,
    params: ModelParams<f32>,
    velocities: ModelParams<f32>,
    iteration: u64,
    history: History,
    exec: Exec,
    order_cache: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    pub fn new(config: TrainConfig, arch: &Architecture) -> Result<Self, TrainError> {
        config.validate()?;
        arch.validate()?;
        let params = init_params(arch, config.seed);
        Ok(Self {
            velocities: params.zeros_like(),
            params,
            config,
            iteration: 0,
            history: History::default(),
            exec: Exec::default(),
            order_cache: None,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, TrainError> {
        ckpt.config.validate()?;
        Ok(Self {
            config: ckpt.config,
            params: ckpt.params,
            velocities: ckpt.velocities,
            iteration: ckpt.iteration,
            history: ckpt.history,
            exec: Exec::default(),
            order_cache: None,
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            params: self.params.clone(),
            velocities: self.velocities.clone(),
            config: self.config.clone(),
            history: self.history.clone(),
        }
    }

    fn batch_for(&mut self, train: &[LabeledImage]) -> Result<Batch, TrainError> {
        let per_epoch = batches_per_epoch(train.len(), self.config.batch_size) as u64;
        let epoch = self.iteration / per_epoch;
        let slot = (self.iteration % per_epoch) as usize;
        if self.order_cache.as_ref().map(|(e, _)| *e) != Some(epoch) {
            self.order_cache = Some((epoch, epoch_order(train.len(), self.config.seed, epoch)));
        }
        let order = &self.order_cache.as_ref().expect("filled above").1;
        let start = slot * self.config.batch_size;
        let end = (start + self.config.batch_size).min(order.len());
        Ok(Batch::from_items(order[start..end].iter().map(|&i| &train[i]))?)
    }

    /// One SGD iteration; returns the batch loss.
    pub fn step(&mut self, train: &[LabeledImage]) -> Result<f64, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let batch = self.batch_for(train)?;
        let dropout_seed =
            rng::derived(self.config.seed, rng::stream::DROPOUT, self.iteration).next_u64();
        let pass = forward(
            &self.params,
            &batch.inputs,
            ForwardMode::Train { dropout_seed },
            self.exec,
        )?;
        let loss = batch_loss(&pass.logits, &batch, self.config.mode)?;
        if !loss.value.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                iteration: self.iteration,
                value: loss.value,
            });
        }
        let caches = pass.caches.expect("train pass keeps caches");
        let grads = backward(&self.params, &caches, &loss.dlogits, self.exec)?;
        let lr = self.config.lr_at(self.iteration);
        sgd_step(
            &mut self.params,
            &mut self.velocities,
            &grads,
            lr,
            self.config.momentum,
        )?;
        self.iteration += 1;
        self.history.train_loss.push(loss.value);
        Ok(loss.value)
    }

    /// Trains until `until` iterations have completed (capped at
    /// `max_iterations`). Every `checkpoint_every` iterations, and at the
    /// end, validation metrics are recorded and `on_checkpoint` is called.
    pub fn run_until(
        &mut self,
        until: u64,
        train: &[LabeledImage],
        val: &[LabeledImage],
        mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<(), TrainError>,
    ) -> Result<(), TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        if self.config.mode == TaskMode::Regression
            && train.iter().chain(val).any(|s| s.intensity.is_none())
        {
            return Err(TrainError::ModeMismatch);
        }
        let until = until.min(self.config.max_iterations);
        while self.iteration < until {
            self.step(train)?;
            if self.iteration.is_multiple_of(self.config.checkpoint_every) || self.iteration == until {
                if !val.is_empty() {
                    let e = evaluate(&self.params, val, self.config.mode, self.exec)?;
                    self.history.validation.push(ValidationRecord {
                        iteration: self.iteration,
                        loss: e.loss,
                        accuracy: e.confusion.accuracy(),
                        rmse: e.rmse,
                    });
                }
                on_checkpoint(&self.checkpoint())?;
            }
        }
        Ok(())
    }
}

pub(crate) fn batch_loss<T: Real>(
    logits: &crate::nn::Tensor<T>,
    batch: &Batch,
    mode: TaskMode,
) -> Result<LossValue<T>, TrainError> {
    Ok(match mode {
        TaskMode::Classification => softmax_ce(logits, &batch.class_targets)?,
        TaskMode::Regression => {
            let t = batch
                .intensity_targets
                .as_ref()
                .ok_or(TrainError::ModeMismatch)?;
            sigmoid_ce(logits, &t.cast::<T>())?
        }
    })
}

/// Runs a fresh training job to `config.max_iterations`.
pub fn train_loop(
    config: TrainConfig,
    arch: &Architecture,
    train: &[LabeledImage],
    val: &[LabeledImage],
) -> Result<(Checkpoint, History), TrainError> {
    let mut trainer = Trainer::new(config, arch)?;
    let end = trainer.config.max_iterations;
    trainer.run_until(end, train, val, |_| Ok(()))?;
    let ckpt = trainer.checkpoint();
    let history = ckpt.history.clone();
    Ok((ckpt, history))
}
