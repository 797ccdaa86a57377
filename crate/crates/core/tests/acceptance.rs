//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use emotion_forge::augment::{augment_all, augmented_count, default_spec, VARIANTS_PER_IMAGE};
use emotion_forge::dataset::{intensity_label, sequence_intensities, EmotionClass, TaskMode};
use emotion_forge::eval::{argmax, confusion, evaluate, latency_report, regression_to_class, rmse};
use emotion_forge::exec::Exec;
use emotion_forge::imaging::write_pgm;
use emotion_forge::loss::{sigmoid, sigmoid_ce, softmax_ce};
use emotion_forge::nn::{init_params, Architecture, Tensor};
use emotion_forge::synth::{separable_set, FaceSketch};
use emotion_forge::train::{
    decode_model, encode_model, gradient_check, GradCheckOptions, ModelFileError, TrainConfig,
    Trainer,
};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let layer = [
        conv_check(1, 1, 1),
        conv_check(2, 2, 2),
        relu_check(3),
        maxpool_check(4),
        fc_check(5),
        dropout_check(6),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let loss = (0..3)
        .map(|s| softmax_loss_check(s).max(sigmoid_loss_check(s)))
        .fold(0.0, f64::max);
    let params = init_params(&Architecture::emo_net_with_side(16), 5);
    let mut net: f64 = 0.0;
    for mode in [TaskMode::Classification, TaskMode::Regression] {
        let batch = small_batch(mode == TaskMode::Regression);
        let r = gradient_check(&params, &batch, mode, &GradCheckOptions::default()).unwrap();
        net = net.max(r.max_rel_error);
    }
    let elapsed = start.elapsed();
    outcome(
        layer < 1e-3 && net < 1e-3 && loss < 1e-4 && elapsed < Duration::from_secs(120),
        format!(
            "layers {layer:.2e}, network {net:.2e} (< 1e-3); losses {loss:.2e} (< 1e-4); {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn alignment() -> Outcome {
    let start = Instant::now();
    let third = one_third_residual();
    let level = eye_level_error();
    let rot = [-30.0, -15.0, 15.0, 30.0]
        .into_iter()
        .map(rotation_mad)
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        third < 1e-9 && level <= 0.5 && rot <= 3.0 && elapsed < Duration::from_secs(30),
        format!(
            "one-third residual {third:.1e}; eye level {level:.3} px (<= 0.5); \
             rotation mean abs diff {rot:.2} (<= 3); {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn augmentation() -> Outcome {
    let spec = default_spec();
    let faces: Vec<_> = (0..100)
        .map(|i| {
            FaceSketch {
                center: (95.0 + (i % 10) as f64, 80.0 + (i / 10) as f64),
                tilt: (i as f64 - 50.0) * 0.004,
                ..FaceSketch::default()
            }
            .render()
        })
        .collect();
    let all = augment_all(&faces, &spec, Exec::default()).unwrap();
    let per_image = all.iter().all(|v| v.len() == VARIANTS_PER_IMAGE);
    let identity = all.iter().zip(&faces).all(|(v, img)| {
        v.iter().filter(|(t, _)| t.is_identity()).count() == 1
            && v.iter().any(|(t, out)| t.is_identity() && out == img)
    });
    let dir = tempfile::tempdir().unwrap();
    for (i, v) in all.iter().enumerate() {
        for (tag, img) in v {
            let name = tag.file_name(&format!("face{i:03}"));
            std::fs::write(dir.path().join(name), write_pgm(img)).unwrap();
        }
    }
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    let scaled = augmented_count(41_029);
    outcome(
        per_image && identity && files == 2_800 && scaled == 1_148_812,
        format!(
            "{VARIANTS_PER_IMAGE} variants/image, identity exact: {identity}; \
             100 images -> {files} files; 41029 -> {scaled}"
        ),
    )
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

fn losses() -> Outcome {
    let uniform = softmax_ce(&Tensor::<f64>::zeros(&[1, 7]), &[2]).unwrap().value;
    let e7 = (uniform - 7f64.ln()).abs();
    let half = sigmoid_ce(&Tensor::<f64>::zeros(&[1, 7]), &Tensor::full(&[1, 7], 0.5))
        .unwrap()
        .value;
    let e2 = (half - 2f64.ln()).abs();
    let mut worst: f64 = 0.0;
    for t in [0.2, 0.5, 0.8] {
        let f = |z: f64| {
            sigmoid_ce(&Tensor::full(&[1, 1], z), &Tensor::full(&[1, 1], t))
                .unwrap()
                .value
        };
        let z = golden_section(f, -10.0, 10.0);
        worst = worst
            .max((z - (t / (1.0 - t)).ln()).abs())
            .max((sigmoid(z) - t).abs());
    }
    outcome(
        e7 <= 1e-6 && e2 <= 1e-6 && worst <= 1e-6,
        format!("|ce - ln 7| {e7:.1e}; |ce - ln 2| {e2:.1e}; minimiser error {worst:.1e} (<= 1e-6)"),
    )
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let train = separable_set(200, 1);
    let val = separable_set(100, 2);
    let config = TrainConfig {
        batch_size: 8,
        max_iterations: 300,
        checkpoint_every: 30,
        seed: 11,
        ..TrainConfig::default()
    };
    let arch = Architecture::emo_net();
    let mut first = None;
    let mut t = Trainer::new(config.clone(), &arch).unwrap();
    t.run_until(300, &train, &val, |c| {
        if c.iteration == 30 {
            first = Some(c.params.clone());
        }
        Ok(())
    })
    .unwrap();
    let acc = evaluate(t.params(), &val, TaskMode::Classification, Exec::default())
        .unwrap()
        .confusion
        .accuracy();
    let mut again = Trainer::new(config, &arch).unwrap();
    again.run_until(30, &train, &[], |_| Ok(())).unwrap();
    let deterministic = first.as_ref() == Some(again.params())
        && again.history().train_loss[..] == t.history().train_loss[..30];
    let elapsed = start.elapsed();
    outcome(
        acc >= 0.95 && deterministic && elapsed < Duration::from_secs(300),
        format!(
            "held-out accuracy {acc:.3} after 300 iterations (>= 0.95); \
             rerun identical: {deterministic}; {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn labeling() -> Outcome {
    let happy = intensity_label(EmotionClass::Happy, 0.2).unwrap();
    let sad = intensity_label(EmotionClass::Sad, 0.4).unwrap();
    let only = |v: &emotion_forge::IntensityVector, c: EmotionClass, k: f64| {
        EmotionClass::ALL.iter().all(|&d| {
            let want = if d == c {
                k
            } else if d == EmotionClass::Neutral {
                1.0 - k
            } else {
                0.0
            };
            v.get(d) == want
        })
    };
    let seq = sequence_intensities();
    let ok = only(&happy, EmotionClass::Happy, 0.2)
        && only(&sad, EmotionClass::Sad, 0.4)
        && happy.get(EmotionClass::Neutral) == 0.8
        && sad.get(EmotionClass::Neutral) == 0.6
        && seq == [0.2, 0.4, 0.6, 0.8, 1.0, 0.8, 0.6, 0.4, 0.2];
    outcome(ok, format!("happy 0.2 / neutral 0.8, sad 0.4 / neutral 0.6; sequence {seq:?}"))
}

fn model_format() -> Outcome {
    let arch = Architecture::emo_net();
    let params = init_params(&arch, 7);
    let bytes = encode_model(&params, TaskMode::Regression);
    let (back, mode) = decode_model(&bytes).unwrap();
    let exact = mode == TaskMode::Regression
        && back
            .tensors()
            .zip(params.tensors())
            .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let mut bad = bytes.clone();
    let last = bad.len() - 1;
    bad[last] ^= 0x5a;
    let rejected = matches!(decode_model(&bad), Err(ModelFileError::ChecksumMismatch { .. }));
    let count = params.param_count();
    let size = bytes.len();
    outcome(
        count == 2_192_391 && size < 12_100_000 && exact && rejected,
        format!(
            "{count} parameters; file {size} bytes (< 12.1 MB); round trip exact: {exact}; \
             corrupted checksum rejected: {rejected}"
        ),
    )
}

fn stream() -> Outcome {
    let params = init_params(&Architecture::emo_net(), 21);
    let parity = alpha_one_matches_batch(&params, &alternating_frames(6));
    let recs = stream_records(&params, &alternating_frames(30), 0.2);
    let contraction = peak_to_peak(&recs).iter().all(|&(s, r)| r > 0.0 && s < r);
    let aligned: Vec<_> = alternating_frames(20)
        .into_iter()
        .map(|(img, lm)| {
            emotion_forge::dataset::LabeledImage::classified(
                emotion_forge::align_face(&img, &lm).unwrap().image,
                EmotionClass::Neutral,
            )
        })
        .collect();
    let latency = latency_report(&params, &aligned).unwrap();
    outcome(
        parity && contraction,
        format!(
            "alpha 1 equals batch inference: {parity}; smoothing contracts: {contraction}; \
             latency {:.4e} s/image (reference 0.0056 s/image on a GPU)",
            latency.seconds_per_image
        ),
    )
}

fn metrics() -> Outcome {
    let m = confusion(&[0, 1, 1], &[0, 0, 1]).unwrap();
    let hand = m.counts[0][0] == 1 && m.counts[0][1] == 1 && m.counts[1][1] == 1;
    let acc = (m.accuracy() - 2.0 / 3.0).abs() < 1e-15
        && m.accuracy() == m.trace() as f64 / m.total() as f64;
    let perfect = confusion(&[3, 5, 6, 0], &[3, 5, 6, 0]).unwrap().accuracy() == 1.0;
    let p = Tensor::<f64>::from_vec(vec![1, 7], vec![0.1, -0.2, 0.0, 0.0, 0.0, 0.0, 0.2]).unwrap();
    let e = (rmse(&p, &Tensor::zeros(&[1, 7])).unwrap() - (0.09f64 / 7.0).sqrt()).abs();
    let tie = argmax(&[0.5; 7]) == 0
        && regression_to_class(&Tensor::<f64>::full(&[2, 7], 0.3)) == [0, 0]
        && argmax(&[0.1, 0.05, 0.02, 0.9, 0.3, 0.1, 0.2]) == 3;
    outcome(
        hand && acc && perfect && e <= 1e-9 && tie,
        format!(
            "hand confusion counts {hand}, accuracy = trace/total {acc}; rmse error {e:.1e}; \
             ties to lowest index {tie}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient suite", gradients),
        ("alignment geometry", alignment),
        ("augmentation arithmetic", augmentation),
        ("loss oracles", losses),
        ("toy convergence", convergence),
        ("regression labeling", labeling),
        ("model budget and format", model_format),
        ("stream semantics", stream),
        ("metric oracles", metrics),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
