//! ReLU, max pooling, fully connected and dropout layers.

use rand::Rng as _;

use super::tensor::{axpy, dot, Real, Tensor};
use super::NnError;
use crate::exec::Exec;
use crate::rng;

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient 0 at 0.
pub fn relu_backward<T: Real>(x: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    same_shape(x, upstream, "relu")?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape().to_vec(), data)
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "{what}: upstream {:?} vs activation {:?}",
            b.shape(),
            a.shape()
        )));
    }
    Ok(())
}

/// Pooling output plus the flat input index each output was taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Max pooling over `size x size` windows; ties keep the first element in
/// row-major order.
pub fn maxpool_forward<T: Real>(
    x: &Tensor<T>,
    size: usize,
    stride: usize,
    exec: Exec,
) -> Result<PoolOutput<T>, NnError> {
    let (n, c, h, w) = x.dims4()?;
    if size == 0 || stride == 0 || h < size || w < size {
        return Err(NnError::ShapeMismatch(format!(
            "pool window {size} stride {stride} does not fit {h}x{w}"
        )));
    }
    let (oh, ow) = ((h - size) / stride + 1, (w - size) / stride + 1);
    let plane = oh * ow;
    let xd = x.data();
    let mut packed = vec![(T::zero(), 0usize); n * c * plane];
    exec.for_each_chunk(&mut packed, plane, |nc, dst| {
        let base = nc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * stride + dy) * w + ox * stride + dx;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                dst[oy * ow + ox] = (xd[best], best);
            }
        }
    });
    let (vals, argmax): (Vec<T>, Vec<usize>) = packed.into_iter().unzip();
    Ok(PoolOutput {
        output: Tensor::from_vec(vec![n, c, oh, ow], vals)?,
        argmax,
    })
}

/// Routes each upstream value to the input element that won its window.
pub fn maxpool_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[usize],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if upstream.len() != argmax.len() {
        return Err(NnError::ShapeMismatch(format!(
            "pool upstream has {} elements, forward produced {}",
            upstream.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(upstream.data()) {
        d[i] += g;
    }
    Ok(dx)
}

/// `y = x W^T + b` with `x: (N, in)`, `W: (out, in)`, `b: (out)`.
pub fn fc_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    exec: Exec,
) -> Result<Tensor<T>, NnError> {
    let (n, din) = x.dims2()?;
    let (dout, win) = w.dims2()?;
    if win != din || b.shape() != [dout] {
        return Err(NnError::ShapeMismatch(format!(
            "fc input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut y = Tensor::zeros(&[n, dout]);
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    exec.for_each_chunk(y.data_mut(), 1, |idx, dst| {
        let (i, o) = (idx / dout, idx % dout);
        dst[0] = dot(&xd[i * din..][..din], &wd[o * din..][..din]) + bd[o];
    });
    Ok(y)
}

/// `(dx, dW, db)`.
pub type FcGrads<T> = (Tensor<T>, Tensor<T>, Tensor<T>);

/// `(dx, dW, db)` for [`fc_forward`].
pub fn fc_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    upstream: &Tensor<T>,
    exec: Exec,
) -> Result<FcGrads<T>, NnError> {
    let (n, din) = x.dims2()?;
    let (dout, win) = w.dims2()?;
    if win != din || upstream.shape() != [n, dout] {
        return Err(NnError::ShapeMismatch(format!(
            "fc backward: input {:?}, weight {:?}, upstream {:?}",
            x.shape(),
            w.shape(),
            upstream.shape()
        )));
    }
    let (xd, wd, gd) = (x.data(), w.data(), upstream.data());
    let mut dw = Tensor::zeros(&[dout, din]);
    exec.for_each_chunk(dw.data_mut(), din, |o, row| {
        for i in 0..n {
            axpy(gd[i * dout + o], &xd[i * din..][..din], row);
        }
    });
    let mut db = Tensor::zeros(&[dout]);
    for (o, v) in db.data_mut().iter_mut().enumerate() {
        for i in 0..n {
            *v += gd[i * dout + o];
        }
    }
    let mut dx = Tensor::zeros(&[n, din]);
    exec.for_each_chunk(dx.data_mut(), din, |i, row| {
        for o in 0..dout {
            axpy(gd[i * dout + o], &wd[o * din..][..din], row);
        }
    });
    Ok((dx, dw, db))
}

/// Inverted dropout mask: kept units scale by `1 / (1 - p)`, dropped are 0.
/// Drawn sequentially from the pinned generator for `(seed, layer)`.
pub fn dropout_mask<T: Real>(shape: &[usize], p: f64, seed: u64, layer: u64) -> Tensor<T> {
    let mut r = rng::derived(seed, rng::stream::DROPOUT, layer);
    let keep = T::lit(1.0 / (1.0 - p));
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| if r.gen::<f64>() < p { T::zero() } else { keep })
        .collect();
    Tensor::from_vec(shape.to_vec(), data).expect("mask shape")
}

pub fn dropout_forward<T: Real>(x: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    same_shape(x, mask, "dropout")?;
    let data = x.data().iter().zip(mask.data()).map(|(&a, &m)| a * m).collect();
    Tensor::from_vec(x.shape().to_vec(), data)
}

pub fn dropout_backward<T: Real>(
    mask: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    dropout_forward(upstream, mask)
}
