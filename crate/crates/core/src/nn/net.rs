//! Layer stack description, parameters, and whole-network passes.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::conv::{conv2d_backward, conv2d_forward, conv_output_len, ConvGeometry};
use super::layers::{
    dropout_backward, dropout_forward, dropout_mask, fc_backward, fc_forward, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward,
};
use super::tensor::{Real, Tensor};
use super::NnError;
use crate::dataset::NUM_CLASSES;
use crate::exec::Exec;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    /// Inverted dropout, active only in training passes.
    Dropout {
        p: f64,
    },
    /// Flattens rank-4 input implicitly.
    Fc {
        in_dim: usize,
        out_dim: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Fc { .. } => "fc",
        }
    }

    /// `(weight shape, bias shape)` for parametric layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kh,
                kw,
                ..
            } => Some((vec![out_ch, in_ch, kh, kw], vec![out_ch])),
            LayerSpec::Fc { in_dim, out_dim } => Some((vec![out_dim, in_dim], vec![out_dim])),
            _ => None,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_ch, kh, kw, .. } => in_ch * kh * kw,
            LayerSpec::Fc { in_dim, .. } => in_dim,
            _ => 0,
        }
    }

    /// Output shape (without the batch axis) for input `shape`.
    fn output_shape(&self, shape: &[usize]) -> Result<Vec<usize>, NnError> {
        let bad = |m: String| Err(NnError::InvalidArchitecture(m));
        match (*self, shape) {
            (
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kh,
                    kw,
                    stride,
                    pad,
                },
                &[c, h, w],
            ) => {
                if c != in_ch {
                    return bad(format!("conv expects {in_ch} channels, gets {c}"));
                }
                match (
                    conv_output_len(h, kh, stride, pad),
                    conv_output_len(w, kw, stride, pad),
                ) {
                    (Some(oh), Some(ow)) => Ok(vec![out_ch, oh, ow]),
                    _ => bad(format!("conv kernel does not fit {h}x{w}")),
                }
            }
            (LayerSpec::MaxPool { size, stride }, &[c, h, w]) => {
                if size == 0 || stride == 0 || h < size || w < size {
                    return bad(format!("pool {size}/{stride} does not fit {h}x{w}"));
                }
                Ok(vec![c, (h - size) / stride + 1, (w - size) / stride + 1])
            }
            (LayerSpec::Relu, s) => Ok(s.to_vec()),
            (LayerSpec::Dropout { p }, s) => {
                if !(0.0..1.0).contains(&p) {
                    return bad(format!("dropout probability {p} outside [0, 1)"));
                }
                Ok(s.to_vec())
            }
            (LayerSpec::Fc { in_dim, out_dim }, s) => {
                let flat: usize = s.iter().product();
                if flat != in_dim {
                    return bad(format!("fc expects {in_dim} inputs, gets {s:?}"));
                }
                Ok(vec![out_dim])
            }
            (layer, s) => bad(format!("{} cannot take input {s:?}", layer.kind())),
        }
    }
}

/// Input geometry plus the ordered layer stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// `(channels, height, width)`
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// The 128x128 grayscale classifier.
    pub fn emo_net() -> Self {
        Self::emo_net_with_side(128)
    }

    /// EMO-NET for a square input of `side` pixels (a multiple of 16).
    ///
    /// conv 5x5x32 /2 - relu - pool - conv 3x3x64 - relu - pool -
    /// conv 3x3x128 - relu - pool - fc 256 - relu - dropout 0.5 - fc 7
    pub fn emo_net_with_side(side: usize) -> Self {
        let conv = |in_ch, out_ch, k, stride, pad| LayerSpec::Conv {
            in_ch,
            out_ch,
            kh: k,
            kw: k,
            stride,
            pad,
        };
        let pool = LayerSpec::MaxPool { size: 2, stride: 2 };
        let last = side / 16;
        Self {
            input: [1, side, side],
            layers: vec![
                conv(1, 32, 5, 2, 2),
                LayerSpec::Relu,
                pool,
                conv(32, 64, 3, 1, 1),
                LayerSpec::Relu,
                pool,
                conv(64, 128, 3, 1, 1),
                LayerSpec::Relu,
                pool,
                LayerSpec::Fc {
                    in_dim: 128 * last * last,
                    out_dim: 256,
                },
                LayerSpec::Relu,
                LayerSpec::Dropout { p: 0.5 },
                LayerSpec::Fc {
                    in_dim: 256,
                    out_dim: NUM_CLASSES,
                },
            ],
        }
    }

    /// Per-layer output shapes (batch axis omitted); fails on incompatible stacks.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shape = self.input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
            out.push(shape.clone());
        }
        if out.is_empty() {
            return Err(NnError::InvalidArchitecture("no layers".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let shapes = self.output_shapes()?;
        match shapes.last().map(Vec::len) {
            Some(1) => Ok(()),
            _ => Err(NnError::InvalidArchitecture(
                "network must end in a flat output".into(),
            )),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_shapes()
            .ok()
            .and_then(|s| s.last().map(|v| v.iter().product()))
            .unwrap_or(0)
    }

    /// Recovers the square input size of a layer stack (the model file does
    /// not store it).
    pub fn infer_input(layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        let channels = match layers.first() {
            Some(LayerSpec::Conv { in_ch, .. }) => *in_ch,
            Some(LayerSpec::Fc { in_dim, .. }) => {
                let arch = Self {
                    input: [1, 1, *in_dim],
                    layers,
                };
                arch.validate()?;
                return Ok(arch);
            }
            _ => return Err(NnError::InvalidArchitecture("unsupported first layer".into())),
        };
        // Floor division makes several sides fit; prefer one the total
        // stride divides exactly, else the smallest.
        let total_stride: usize = layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Conv { stride, .. } | LayerSpec::MaxPool { stride, .. } => stride,
                _ => 1,
            })
            .product();
        let mut fallback = None;
        for side in 1..=4096 {
            let arch = Self {
                input: [channels, side, side],
                layers: layers.clone(),
            };
            if arch.validate().is_ok() {
                if side % total_stride.max(1) == 0 {
                    return Ok(arch);
                }
                fallback.get_or_insert(arch);
            }
        }
        fallback.ok_or_else(|| {
            NnError::InvalidArchitecture("no square input size fits this layer stack".into())
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(LayerSpec::param_shapes)
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum()
    }
}

/// Weights and biases of every parametric layer, in stack order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T = f32> {
    pub arch: Architecture,
    pub weights: Vec<Tensor<T>>,
    pub biases: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(arch: &Architecture) -> Self {
        let (weights, biases) = arch
            .layers
            .iter()
            .filter_map(LayerSpec::param_shapes)
            .map(|(w, b)| (Tensor::zeros(&w), Tensor::zeros(&b)))
            .unzip();
        Self {
            arch: arch.clone(),
            weights,
            biases,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// All weight tensors, then all bias tensors.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.weights.iter().chain(&self.biases)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.weights.iter_mut().chain(&mut self.biases)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch.clone(),
            weights: self.weights.iter().map(Tensor::cast).collect(),
            biases: self.biases.iter().map(Tensor::cast).collect(),
        }
    }

    /// Checks tensor shapes against the architecture.
    pub fn check(&self) -> Result<(), NnError> {
        self.arch.validate()?;
        let shapes: Vec<_> = self
            .arch
            .layers
            .iter()
            .filter_map(LayerSpec::param_shapes)
            .collect();
        if shapes.len() != self.weights.len() || shapes.len() != self.biases.len() {
            return Err(NnError::ShapeMismatch(
                "parameter tensor count does not match the architecture".into(),
            ));
        }
        for ((ws, bs), (w, b)) in shapes.iter().zip(self.weights.iter().zip(&self.biases)) {
            if w.shape() != ws.as_slice() || b.shape() != bs.as_slice() {
                return Err(NnError::ShapeMismatch(format!(
                    "parameters {:?}/{:?}, expected {ws:?}/{bs:?}",
                    w.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            a.add_assign(b);
        }
    }
}

/// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
pub fn init_params(arch: &Architecture, seed: u64) -> ModelParams<f32> {
    let mut params = ModelParams::zeros(arch);
    let mut r = rng::derived(seed, rng::stream::INIT, 0);
    let fans = arch
        .layers
        .iter()
        .filter(|l| l.param_shapes().is_some())
        .map(LayerSpec::fan_in);
    for (w, fan_in) in params.weights.iter_mut().zip(fans) {
        let std = (2.0 / fan_in as f64).sqrt();
        for v in w.data_mut() {
            let z: f64 = StandardNormal.sample(&mut r);
            *v = (z * std) as f32;
        }
    }
    params
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// Keeps caches; dropout masks come from `dropout_seed`.
    Train { dropout_seed: u64 },
    Infer,
}

#[derive(Clone, Debug)]
enum LayerCache<T> {
    Conv { input: Tensor<T> },
    Relu { input: Tensor<T> },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Dropout { mask: Tensor<T> },
    Fc { input: Tensor<T>, input_shape: Vec<usize> },
}

/// Activations retained by a training pass.
#[derive(Clone, Debug)]
pub struct Caches<T> {
    batch: usize,
    layers: Vec<LayerCache<T>>,
}

impl<T: Real> Caches<T> {
    pub fn batch_len(&self) -> usize {
        self.batch
    }

    /// Fingerprint of every ReLU on/off state and pooling winner. Two passes
    /// with equal fingerprints lie on the same linear piece of the network.
    pub fn activation_pattern(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for layer in &self.layers {
            match layer {
                LayerCache::Relu { input } => {
                    for chunk in input.data().chunks(64) {
                        let bits = chunk
                            .iter()
                            .enumerate()
                            .fold(0u64, |acc, (i, &v)| acc | (((v > T::zero()) as u64) << i));
                        bits.hash(&mut h);
                    }
                }
                LayerCache::Pool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}

pub struct ForwardPass<T> {
    pub logits: Tensor<T>,
    pub caches: Option<Caches<T>>,
}

/// Runs the layer stack on `input` of shape `(N, C, H, W)`.
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    input: &Tensor<T>,
    mode: ForwardMode,
    exec: Exec,
) -> Result<ForwardPass<T>, NnError> {
    let arch = &params.arch;
    let (n, c, h, w) = input.dims4()?;
    if [c, h, w] != arch.input || n == 0 {
        return Err(NnError::ShapeMismatch(format!(
            "input {:?} does not match architecture input {:?}",
            input.shape(),
            arch.input
        )));
    }
    let train = matches!(mode, ForwardMode::Train { .. });
    let mut caches = Vec::with_capacity(if train { arch.layers.len() } else { 0 });
    let mut act = input.clone();
    let mut pi = 0;
    for (li, layer) in arch.layers.iter().enumerate() {
        let (next, cache) = match *layer {
            LayerSpec::Conv { stride, pad, .. } => {
                let g = ConvGeometry { stride, pad };
                let out = conv2d_forward(&act, &params.weights[pi], &params.biases[pi], g, exec)?;
                pi += 1;
                (out, LayerCache::Conv { input: act })
            }
            LayerSpec::Relu => (relu_forward(&act), LayerCache::Relu { input: act }),
            LayerSpec::MaxPool { size, stride } => {
                let pooled = maxpool_forward(&act, size, stride, exec)?;
                (
                    pooled.output,
                    LayerCache::Pool {
                        input_shape: act.shape().to_vec(),
                        argmax: pooled.argmax,
                    },
                )
            }
            LayerSpec::Dropout { p } => match mode {
                ForwardMode::Train { dropout_seed } => {
                    let mask = dropout_mask(act.shape(), p, dropout_seed, li as u64);
                    (dropout_forward(&act, &mask)?, LayerCache::Dropout { mask })
                }
                ForwardMode::Infer => {
                    let shape = act.shape().to_vec();
                    (act, LayerCache::Pool { input_shape: shape, argmax: vec![] })
                }
            },
            LayerSpec::Fc { .. } => {
                let input_shape = act.shape().to_vec();
                let flat = act.reshape(&[n, input_shape[1..].iter().product()])?;
                let out = fc_forward(&flat, &params.weights[pi], &params.biases[pi], exec)?;
                pi += 1;
                (
                    out,
                    LayerCache::Fc {
                        input: flat,
                        input_shape,
                    },
                )
            }
        };
        if !next.all_finite() {
            return Err(NnError::NonFiniteActivation {
                layer: li,
                kind: layer.kind(),
            });
        }
        if train {
            caches.push(cache);
        }
        act = next;
    }
    Ok(ForwardPass {
        logits: act,
        caches: train.then_some(Caches {
            batch: n,
            layers: caches,
        }),
    })
}

/// Inference-mode logits.
pub fn infer<T: Real>(
    params: &ModelParams<T>,
    input: &Tensor<T>,
    exec: Exec,
) -> Result<Tensor<T>, NnError> {
    Ok(forward(params, input, ForwardMode::Infer, exec)?.logits)
}

/// Parameter gradients given the loss gradient w.r.t. the logits.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    caches: &Caches<T>,
    dlogits: &Tensor<T>,
    exec: Exec,
) -> Result<ModelParams<T>, NnError> {
    let arch = &params.arch;
    let out_dim = arch.output_dim();
    if dlogits.shape() != [caches.batch, out_dim] {
        return Err(NnError::StaleCache(format!(
            "gradient {:?} vs cached batch of {} with {out_dim} outputs",
            dlogits.shape(),
            caches.batch
        )));
    }
    if caches.layers.len() != arch.layers.len() {
        return Err(NnError::StaleCache(format!(
            "{} cached layers for a {}-layer network",
            caches.layers.len(),
            arch.layers.len()
        )));
    }
    let mut grads = params.zeros_like();
    let mut pi = params.weights.len();
    let mut up = dlogits.clone();
    for (li, (layer, cache)) in arch.layers.iter().zip(&caches.layers).enumerate().rev() {
        let stale = || NnError::StaleCache(format!("layer {li} cache does not match its spec"));
        up = match (*layer, cache) {
            (LayerSpec::Conv { stride, pad, .. }, LayerCache::Conv { input }) => {
                pi -= 1;
                let g = ConvGeometry { stride, pad };
                let (dx, dw, db) =
                    conv2d_backward(input, &params.weights[pi], &up, g, li > 0, exec)?;
                grads.weights[pi] = dw;
                grads.biases[pi] = db;
                match dx {
                    Some(dx) => dx,
                    None => break,
                }
            }
            (LayerSpec::Relu, LayerCache::Relu { input }) => relu_backward(input, &up)?,
            (LayerSpec::MaxPool { .. }, LayerCache::Pool { input_shape, argmax }) => {
                maxpool_backward(input_shape, argmax, &up)?
            }
            (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
                dropout_backward(mask, &up)?
            }
            (LayerSpec::Fc { .. }, LayerCache::Fc { input, input_shape }) => {
                pi -= 1;
                let (dx, dw, db) = fc_backward(input, &params.weights[pi], &up, exec)?;
                grads.weights[pi] = dw;
                grads.biases[pi] = db;
                dx.reshape(input_shape)?
            }
            _ => return Err(stale()),
        };
    }
    Ok(grads)
}
