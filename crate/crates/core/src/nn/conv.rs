//! 2-D cross-correlation with zero padding.
//!
//! Each output pixel accumulates in the fixed order input channel, kernel
//! row, kernel column, then the bias is added. Work is split over disjoint
//! output planes so the parallel path is bit-identical to the sequential one.

use super::tensor::{axpy, dot, Real, Tensor};
use super::NnError;
use crate::exec::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub pad: usize,
}

pub fn conv_output_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
}

/// Output positions `o` whose tap `o * stride + k - pad` lands inside `0..len`.
#[inline]
fn valid_range(out_len: usize, len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // need o*stride + k >= pad  and  o*stride + k - pad <= len - 1
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let hi = if len + pad > k {
        ((len - 1 + pad - k) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

struct Dims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn dims<T: Real>(x: &Tensor<T>, w: &Tensor<T>, g: ConvGeometry) -> Result<Dims, NnError> {
    let (n, c, h, wd) = x.dims4()?;
    let (k, wc, kh, kw) = w.dims4()?;
    if wc != c {
        return Err(NnError::ShapeMismatch(format!(
            "conv input has {c} channels, kernel expects {wc}"
        )));
    }
    let oh = conv_output_len(h, kh, g.stride, g.pad);
    let ow = conv_output_len(wd, kw, g.stride, g.pad);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok(Dims {
            n,
            c,
            h,
            w: wd,
            k,
            kh,
            kw,
            oh,
            ow,
        }),
        _ => Err(NnError::ShapeMismatch(format!(
            "kernel {kh}x{kw} does not fit input {h}x{wd} with padding {}",
            g.pad
        ))),
    }
}

/// Patch matrix of one sample: row `(c, ky, kx)` holds, for every output
/// position, the input value under that tap (zero where it falls in the padding).
fn im2col<T: Real>(src: &[T], d: &Dims, g: ConvGeometry) -> Vec<T> {
    let plane = d.oh * d.ow;
    let mut col = vec![T::zero(); d.c * d.kh * d.kw * plane];
    for c in 0..d.c {
        let chan = &src[c * d.h * d.w..][..d.h * d.w];
        for ky in 0..d.kh {
            let (oy0, oy1) = valid_range(d.oh, d.h, ky, g.stride, g.pad);
            for kx in 0..d.kw {
                let (ox0, ox1) = valid_range(d.ow, d.w, kx, g.stride, g.pad);
                let row = &mut col[((c * d.kh + ky) * d.kw + kx) * plane..][..plane];
                for oy in oy0..oy1 {
                    let iy = oy * g.stride + ky - g.pad;
                    let xrow = &chan[iy * d.w..][..d.w];
                    let dst = &mut row[oy * d.ow..][..d.ow];
                    if g.stride == 1 {
                        let ix0 = ox0 + kx - g.pad;
                        dst[ox0..ox1].copy_from_slice(&xrow[ix0..ix0 + (ox1 - ox0)]);
                    } else {
                        for ox in ox0..ox1 {
                            dst[ox] = xrow[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-adds one channel's patch rows back onto its input plane.
fn col2im_channel<T: Real>(rows: &[T], d: &Dims, g: ConvGeometry, dst: &mut [T]) {
    let plane = d.oh * d.ow;
    for ky in 0..d.kh {
        let (oy0, oy1) = valid_range(d.oh, d.h, ky, g.stride, g.pad);
        for kx in 0..d.kw {
            let (ox0, ox1) = valid_range(d.ow, d.w, kx, g.stride, g.pad);
            let row = &rows[(ky * d.kw + kx) * plane..][..plane];
            for oy in oy0..oy1 {
                let iy = oy * g.stride + ky - g.pad;
                let xrow = &mut dst[iy * d.w..][..d.w];
                let src = &row[oy * d.ow..][..d.ow];
                for ox in ox0..ox1 {
                    xrow[ox * g.stride + kx - g.pad] += src[ox];
                }
            }
        }
    }
}

/// `y += sum_r w[r] * rows[r]` over the `y.len()`-long rows, terms added in `r` order.
fn accumulate_rows<T: Real>(w: &[T], rows: &[T], y: &mut [T]) {
    let len = y.len();
    let mut r = 0;
    while r + 4 <= w.len() {
        let (w0, w1, w2, w3) = (w[r], w[r + 1], w[r + 2], w[r + 3]);
        let x0 = &rows[r * len..][..len];
        let x1 = &rows[(r + 1) * len..][..len];
        let x2 = &rows[(r + 2) * len..][..len];
        let x3 = &rows[(r + 3) * len..][..len];
        for j in 0..len {
            y[j] = (((y[j] + w0 * x0[j]) + w1 * x1[j]) + w2 * x2[j]) + w3 * x3[j];
        }
        r += 4;
    }
    for (rr, &wv) in w.iter().enumerate().skip(r) {
        axpy(wv, &rows[rr * len..][..len], y);
    }
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    g: ConvGeometry,
    exec: Exec,
) -> Result<Tensor<T>, NnError> {
    let d = dims(x, w, g)?;
    if b.shape() != [d.k] {
        return Err(NnError::ShapeMismatch(format!(
            "conv bias shape {:?}, expected [{}]",
            b.shape(),
            d.k
        )));
    }
    let plane = d.oh * d.ow;
    let filter = d.c * d.kh * d.kw;
    let sample = d.c * d.h * d.w;
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let cols = exec.map(d.n, |n| im2col(&xd[n * sample..][..sample], &d, g));
    let mut out = Tensor::zeros(&[d.n, d.k, d.oh, d.ow]);
    exec.for_each_chunk(out.data_mut(), plane, |idx, dst| {
        let (n, k) = (idx / d.k, idx % d.k);
        accumulate_rows(&wd[k * filter..][..filter], &cols[n], dst);
        let bias = bd[k];
        dst.iter_mut().for_each(|v| *v += bias);
    });
    Ok(out)
}

/// `(dx, dw, db)`; `dx` is `None` when not requested.
pub type ConvGrads<T> = (Option<Tensor<T>>, Tensor<T>, Tensor<T>);

/// Gradients of [`conv2d_forward`]: `(dx, dw, db)`. `dx` is skipped when
/// `need_dx` is false (first layer).
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    upstream: &Tensor<T>,
    g: ConvGeometry,
    need_dx: bool,
    exec: Exec,
) -> Result<ConvGrads<T>, NnError> {
    let d = dims(x, w, g)?;
    if upstream.shape() != [d.n, d.k, d.oh, d.ow] {
        return Err(NnError::ShapeMismatch(format!(
            "conv upstream shape {:?}, expected {:?}",
            upstream.shape(),
            [d.n, d.k, d.oh, d.ow]
        )));
    }
    let plane = d.oh * d.ow;
    let filter = d.c * d.kh * d.kw;
    let taps = d.kh * d.kw;
    let sample = d.c * d.h * d.w;
    let (xd, wd, gd) = (x.data(), w.data(), upstream.data());

    let mut db = Tensor::zeros(&[d.k]);
    exec.for_each_chunk(db.data_mut(), 1, |k, dst| {
        let mut acc = T::zero();
        for n in 0..d.n {
            acc += gd[(n * d.k + k) * plane..][..plane]
                .iter()
                .fold(T::zero(), |a, &v| a + v);
        }
        dst[0] = acc;
    });

    let cols = exec.map(d.n, |n| im2col(&xd[n * sample..][..sample], &d, g));
    let mut dw = Tensor::zeros(&[d.k, d.c, d.kh, d.kw]);
    exec.for_each_chunk(dw.data_mut(), filter, |k, dst| {
        for (r, v) in dst.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (n, col) in cols.iter().enumerate() {
                acc += dot(&gd[(n * d.k + k) * plane..][..plane], &col[r * plane..][..plane]);
            }
            *v = acc;
        }
    });
    drop(cols);

    // dx: per input plane, rebuild that channel's patch-row gradients
    // `sum_k w[k, c, ky, kx] * up[n, k]` and scatter them back.
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(&[d.n, d.c, d.h, d.w]);
        exec.for_each_chunk(dx.data_mut(), d.h * d.w, |idx, dst| {
            let (n, c) = (idx / d.c, idx % d.c);
            let up = &gd[n * d.k * plane..][..d.k * plane];
            let mut rows = vec![T::zero(); taps * plane];
            let mut wcol = vec![T::zero(); d.k];
            for t in 0..taps {
                for (k, wv) in wcol.iter_mut().enumerate() {
                    *wv = wd[k * filter + c * taps + t];
                }
                accumulate_rows(&wcol, up, &mut rows[t * plane..][..plane]);
            }
            col2im_channel(&rows, &d, g, dst);
        });
        dx
    });
    Ok((dx, dw, db))
}
