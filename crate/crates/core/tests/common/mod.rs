#![allow(dead_code)]

use emotion_forge::exec::Exec;
use emotion_forge::loss::{sigmoid_ce, softmax_ce};
use emotion_forge::nn::{
    conv2d_backward, conv2d_forward, dropout_backward, dropout_forward, dropout_mask, fc_backward,
    fc_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward, ConvGeometry,
    Tensor,
};
use emotion_forge::rng;
use emotion_forge::train::relative_error;
use rand::seq::SliceRandom;
use rand::Rng;

pub const EPS: f64 = 1e-3;

pub fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::seeded(seed);
    let len = shape.iter().product();
    let data = (0..len).map(|_| r.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

/// Random values at least 0.05 away from zero.
pub fn rand_away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    rand_tensor(shape, seed).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
}

/// Distinct values spaced 0.01 apart, shuffled: no pooling window has a near tie.
pub fn rand_distinct(shape: &[usize], seed: u64) -> Tensor<f64> {
    let len: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..len).map(|i| i as f64 * 0.01 - 0.5).collect();
    vals.shuffle(&mut rng::seeded(seed));
    Tensor::from_vec(shape.to_vec(), vals).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central differences of `f` with respect to every element of `x`.
pub fn numeric_grad(x: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + EPS;
            let plus = f(&probe);
            probe.data_mut()[i] = orig - EPS;
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            (plus - minus) / (2.0 * EPS)
        })
        .collect()
}

pub fn max_rel(analytic: &Tensor<f64>, numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .data()
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, 1e-8))
        .fold(0.0, f64::max)
}

/// Conv on `(1,2,6,6)` with a `(3,2,3,3)` kernel; max error over x, w and b.
pub fn conv_check(stride: usize, pad: usize, seed: u64) -> f64 {
    let g = ConvGeometry { stride, pad };
    let x = rand_tensor(&[1, 2, 6, 6], seed);
    let w = rand_tensor(&[3, 2, 3, 3], seed + 1);
    let b = rand_tensor(&[3], seed + 2);
    let out = conv2d_forward(&x, &w, &b, g, Exec::Sequential).unwrap();
    let r = rand_tensor(out.shape(), seed + 3);
    let (dx, dw, db) = conv2d_backward(&x, &w, &r, g, true, Exec::Sequential).unwrap();
    let obj = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        dot(&conv2d_forward(x, w, b, g, Exec::Sequential).unwrap(), &r)
    };
    let ex = max_rel(&dx.unwrap(), &numeric_grad(&x, |t| obj(t, &w, &b)));
    let ew = max_rel(&dw, &numeric_grad(&w, |t| obj(&x, t, &b)));
    let eb = max_rel(&db, &numeric_grad(&b, |t| obj(&x, &w, t)));
    ex.max(ew).max(eb)
}

pub fn relu_check(seed: u64) -> f64 {
    let x = rand_away_from_zero(&[2, 3, 4, 4], seed);
    let r = rand_tensor(x.shape(), seed + 1);
    let dx = relu_backward(&x, &r).unwrap();
    max_rel(&dx, &numeric_grad(&x, |t| dot(&relu_forward(t), &r)))
}

pub fn maxpool_check(seed: u64) -> f64 {
    let x = rand_distinct(&[2, 2, 6, 6], seed);
    let pooled = maxpool_forward(&x, 2, 2, Exec::Sequential).unwrap();
    let r = rand_tensor(pooled.output.shape(), seed + 1);
    let dx = maxpool_backward(x.shape(), &pooled.argmax, &r).unwrap();
    let f = |t: &Tensor<f64>| dot(&maxpool_forward(t, 2, 2, Exec::Sequential).unwrap().output, &r);
    max_rel(&dx, &numeric_grad(&x, f))
}

pub fn fc_check(seed: u64) -> f64 {
    let x = rand_tensor(&[3, 10], seed);
    let w = rand_tensor(&[4, 10], seed + 1);
    let b = rand_tensor(&[4], seed + 2);
    let r = rand_tensor(&[3, 4], seed + 3);
    let (dx, dw, db) = fc_backward(&x, &w, &r, Exec::Sequential).unwrap();
    let obj = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        dot(&fc_forward(x, w, b, Exec::Sequential).unwrap(), &r)
    };
    let ex = max_rel(&dx, &numeric_grad(&x, |t| obj(t, &w, &b)));
    let ew = max_rel(&dw, &numeric_grad(&w, |t| obj(&x, t, &b)));
    let eb = max_rel(&db, &numeric_grad(&b, |t| obj(&x, &w, t)));
    ex.max(ew).max(eb)
}

pub fn dropout_check(seed: u64) -> f64 {
    let x = rand_tensor(&[2, 16], seed);
    let mask = dropout_mask::<f64>(x.shape(), 0.5, seed, 0);
    let r = rand_tensor(x.shape(), seed + 1);
    let dx = dropout_backward(&mask, &r).unwrap();
    max_rel(&dx, &numeric_grad(&x, |t| dot(&dropout_forward(t, &mask).unwrap(), &r)))
}

pub fn softmax_loss_check(seed: u64) -> f64 {
    let z = rand_tensor(&[3, 7], seed).map(|v| v * 3.0);
    let targets = [0, 4, 6];
    let l = softmax_ce(&z, &targets).unwrap();
    max_rel(&l.dlogits, &numeric_grad(&z, |t| softmax_ce(t, &targets).unwrap().value))
}

pub fn sigmoid_loss_check(seed: u64) -> f64 {
    let z = rand_tensor(&[3, 7], seed).map(|v| v * 3.0);
    let t = rand_tensor(&[3, 7], seed + 1).map(|v| (v + 1.0) / 2.0);
    let l = sigmoid_ce(&z, &t).unwrap();
    max_rel(&l.dlogits, &numeric_grad(&z, |zz| sigmoid_ce(zz, &t).unwrap().value))
}

use emotion_forge::alignment::{align_face, eye_centers, rotate_point};
use emotion_forge::imaging::{resize_bilinear, warp_rotate};
use emotion_forge::synth::{Expression, FaceSketch};
use emotion_forge::{Image, Point};

/// Border excluded from pixel comparisons of aligned faces.
pub const BORDER: usize = 4;

pub fn interior_mad(a: &Image, b: &Image) -> f64 {
    assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in BORDER..a.height() - BORDER {
        for x in BORDER..a.width() - BORDER {
            sum += (a.get(x, y) as f64 - b.get(x, y) as f64).abs();
            n += 1;
        }
    }
    sum / n as f64
}

pub fn sketches() -> Vec<FaceSketch> {
    let base = FaceSketch::default();
    vec![
        base,
        FaceSketch {
            expression: Expression::happy(),
            tilt: 0.12,
            ..base
        },
        FaceSketch {
            expression: Expression::surprise(),
            center: (96.2, 90.1),
            scale: 38.5,
            tilt: -0.2,
            ..base
        },
    ]
}

/// Largest interior mean absolute difference between aligning a face and
/// aligning it after rotating image and landmarks by `degrees` about the eye midpoint.
pub fn rotation_mad(degrees: f64) -> f64 {
    sketches()
        .iter()
        .map(|f| {
            let (img, lm) = (f.render(), f.landmarks());
            let (l, r) = eye_centers(&lm);
            let c = l.midpoint(r);
            let angle = degrees.to_radians();
            let rimg = warp_rotate(&img, angle, (c.x, c.y));
            let rlm = lm.map(|p| rotate_point(p, angle, c));
            let a = align_face(&img, &lm).unwrap();
            let b = align_face(&rimg, &rlm).unwrap();
            interior_mad(&a.image, &b.image)
        })
        .fold(0.0, f64::max)
}

/// Same comparison after doubling image and landmark scale.
pub fn scale_mad() -> f64 {
    sketches()
        .iter()
        .map(|f| {
            let (img, lm) = (f.render(), f.landmarks());
            let big = resize_bilinear(&img, img.width() * 2, img.height() * 2).unwrap();
            // pixel-centre convention of the resize: x -> 2x + 0.5
            let big_lm = lm.map(|p| Point::new(2.0 * p.x + 0.5, 2.0 * p.y + 0.5));
            let a = align_face(&img, &lm).unwrap();
            let b = align_face(&big, &big_lm).unwrap();
            interior_mad(&a.image, &b.image)
        })
        .fold(0.0, f64::max)
}

/// Largest output-frame eye-height difference over a sweep of head tilts.
pub fn eye_level_error() -> f64 {
    let base = FaceSketch::default();
    (-30..=30)
        .step_by(5)
        .map(|deg| {
            let f = FaceSketch {
                tilt: (deg as f64).to_radians(),
                ..base
            };
            let lm = f.landmarks();
            let aligned = align_face(&f.render(), &lm).unwrap();
            let (l, r) = eye_centers(&lm);
            (aligned.map_point(l).y - aligned.map_point(r).y).abs()
        })
        .fold(0.0, f64::max)
}

/// Residual of `(eye_y - top) * 3 = bottom - top` over the sweep, and image size checks.
pub fn one_third_residual() -> f64 {
    let base = FaceSketch::default();
    (-30..=30)
        .step_by(5)
        .map(|deg| {
            let f = FaceSketch {
                tilt: (deg as f64).to_radians(),
                ..base
            };
            let a = align_face(&f.render(), &f.landmarks()).unwrap();
            assert_eq!((a.image.width(), a.image.height()), (128, 128));
            let c = a.crop;
            ((a.pivot.y - c.top) * 3.0 - (c.bottom - c.top)).abs()
        })
        .fold(0.0, f64::max)
}

use emotion_forge::dataset::{Batch, LabeledImage, TaskMode, NUM_CLASSES};
use emotion_forge::eval::head_output;
use emotion_forge::nn::{infer, ModelParams};
use emotion_forge::stream::{run_stream, FrameInput, FrameRecord};
use emotion_forge::EmotionClass;

/// Alternating archetype frames `A, B, A, B, ...`.
pub fn alternating_frames(count: usize) -> Vec<(Image, emotion_forge::LandmarkSet)> {
    let a = FaceSketch {
        expression: Expression::happy(),
        ..FaceSketch::default()
    };
    let b = FaceSketch {
        expression: Expression::surprise(),
        tilt: 0.1,
        ..FaceSketch::default()
    };
    let (fa, fb) = ((a.render(), a.landmarks()), (b.render(), b.landmarks()));
    (0..count)
        .map(|i| if i % 2 == 0 { fa.clone() } else { fb.clone() })
        .collect()
}

pub fn stream_records(
    params: &ModelParams<f32>,
    frames: &[(Image, emotion_forge::LandmarkSet)],
    alpha: f64,
) -> Vec<FrameRecord> {
    let inputs: Vec<FrameInput> = frames.iter().cloned().map(Ok).collect();
    run_stream(
        params,
        TaskMode::Regression,
        inputs,
        alpha,
        TaskMode::Regression,
    )
    .unwrap()
}

/// True when an alpha = 1 stream reproduces one batched inference call bit for bit.
pub fn alpha_one_matches_batch(params: &ModelParams<f32>, frames: &[(Image, emotion_forge::LandmarkSet)]) -> bool {
    let recs = stream_records(params, frames, 1.0);
    let aligned: Vec<LabeledImage> = frames
        .iter()
        .map(|(img, lm)| {
            LabeledImage::classified(align_face(img, lm).unwrap().image, EmotionClass::Neutral)
        })
        .collect();
    let batch = Batch::from_items(&aligned).unwrap();
    let logits = infer(params, &batch.inputs, emotion_forge::Exec::Parallel).unwrap();
    recs.iter().enumerate().all(|(i, r)| {
        let row: Vec<f64> = logits.row(i).iter().map(|&v| v as f64).collect();
        let expect = head_output(&row, TaskMode::Regression);
        let raw = r.raw_intensity().unwrap().0;
        let smooth = r.intensity().unwrap().0;
        raw.iter().zip(&expect).all(|(a, b)| a.to_bits() == b.to_bits())
            && smooth.iter().zip(&raw).all(|(a, b)| a.to_bits() == b.to_bits())
    })
}

/// Per-dimension peak-to-peak of `(smoothed, raw)` intensities from frame 10 onward.
pub fn peak_to_peak(recs: &[FrameRecord]) -> Vec<(f64, f64)> {
    let tail = &recs[10..];
    (0..NUM_CLASSES)
        .map(|d| {
            let ptp = |f: &dyn Fn(&FrameRecord) -> f64| {
                let (lo, hi) = tail
                    .iter()
                    .map(f)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                hi - lo
            };
            (
                ptp(&|r| r.intensity().unwrap().0[d]),
                ptp(&|r| r.raw_intensity().unwrap().0[d]),
            )
        })
        .collect()
}

/// Two 16x16 images with fixed texture; intensity labels in regression mode.
pub fn small_batch(regression: bool) -> Batch {
    use emotion_forge::dataset::intensity_label;
    let items: Vec<LabeledImage> = [(EmotionClass::Happy, 0.6), (EmotionClass::Sad, 0.8)]
        .iter()
        .enumerate()
        .map(|(k, &(c, s))| LabeledImage {
            image: Image::from_fn(16, 16, |x, y| ((x * 37 + y * 11 + k * 101) % 256) as u8)
                .unwrap(),
            label: c,
            intensity: regression.then(|| intensity_label(c, s).unwrap()),
        })
        .collect();
    Batch::from_items(&items).unwrap()
}
