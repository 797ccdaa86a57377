//! Synthetic faces and toy datasets.
//!
//! Real expression corpora cannot be redistributed, so tests, benches and
//! demos draw on procedurally rendered faces whose 68 landmarks are known
//! exactly, plus a trivially separable two-class image set.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::alignment::{LandmarkSet, Point, ALIGNED_SIDE};
use crate::dataset::{EmotionClass, LabeledImage};
use crate::imaging::Image;
use crate::rng;

/// Expression controls for a sketched face, all roughly in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expression {
    /// Positive bends the mouth corners up.
    pub smile: f64,
    /// Positive raises the brows.
    pub brow_raise: f64,
    /// Eye opening multiplier.
    pub eye_open: f64,
    /// Mouth opening.
    pub mouth_open: f64,
}

impl Default for Expression {
    fn default() -> Self {
        Self {
            smile: 0.0,
            brow_raise: 0.0,
            eye_open: 1.0,
            mouth_open: 0.1,
        }
    }
}

impl Expression {
    pub fn happy() -> Self {
        Self {
            smile: 0.9,
            brow_raise: 0.1,
            eye_open: 0.8,
            mouth_open: 0.35,
        }
    }

    pub fn sad() -> Self {
        Self {
            smile: -0.8,
            brow_raise: -0.5,
            eye_open: 0.7,
            mouth_open: 0.05,
        }
    }

    pub fn surprise() -> Self {
        Self {
            smile: 0.0,
            brow_raise: 1.0,
            eye_open: 1.5,
            mouth_open: 1.0,
        }
    }
}

/// A face placed in an image: canonical face coordinates have the eye
/// midpoint at the origin, eyes at `u = -0.4 / +0.4`, chin at `v = 1.3`,
/// one unit equal to `scale` pixels, rotated by `tilt` radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceSketch {
    pub width: usize,
    pub height: usize,
    /// Eye midpoint in pixels.
    pub center: (f64, f64),
    pub scale: f64,
    pub tilt: f64,
    pub expression: Expression,
}

impl Default for FaceSketch {
    fn default() -> Self {
        Self {
            width: 200,
            height: 200,
            center: (100.3, 84.6),
            scale: 42.7,
            tilt: 0.0,
            expression: Expression::default(),
        }
    }
}

impl FaceSketch {
    fn face_to_image(&self, u: f64, v: f64) -> Point {
        let (s, c) = self.tilt.sin_cos();
        let (x, y) = (u * self.scale, v * self.scale);
        Point::new(
            self.center.0 + c * x - s * y,
            self.center.1 + s * x + c * y,
        )
    }

    fn image_to_face(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.tilt.sin_cos();
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        ((c * dx + s * dy) / self.scale, (-s * dx + c * dy) / self.scale)
    }

    fn mouth_v(&self, u: f64) -> f64 {
        // corners (|u| = 0.35) lift by `smile`
        0.85 - self.expression.smile * 0.12 * (u / 0.35).powi(2)
    }

    /// The 68 landmarks in iBUG order.
    pub fn landmarks(&self) -> LandmarkSet {
        let e = &self.expression;
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(68);
        // 1-17 jaw, left ear to right ear through the chin
        for i in 0..17 {
            let t = std::f64::consts::PI * (1.0 - i as f64 / 16.0);
            pts.push((0.9 * t.cos(), 0.1 + 1.2 * t.sin()));
        }
        // 18-27 brows
        let brow_v = -0.3 - 0.12 * e.brow_raise;
        for side in [-1.0, 1.0] {
            for j in 0..5 {
                let u = if side < 0.0 {
                    -0.65 + 0.1 * j as f64
                } else {
                    0.25 + 0.1 * j as f64
                };
                let arch = 0.05 * (1.0 - ((u.abs() - 0.45) / 0.2).powi(2));
                pts.push((u, brow_v - arch));
            }
        }
        // 28-31 nose bridge, 32-36 nostrils
        for j in 0..4 {
            pts.push((0.0, 0.1 + 0.13 * j as f64));
        }
        for j in 0..5 {
            let u = -0.16 + 0.08 * j as f64;
            pts.push((u, 0.55 - 0.03 * (1.0 - (u / 0.16).powi(2))));
        }
        // 37-42 and 43-48 eye contours, symmetric about the eye centre
        let (ea, eb) = (0.15, 0.06 * e.eye_open);
        for cx in [-0.4, 0.4] {
            for k in 0..6 {
                let t = std::f64::consts::PI * (1.0 - k as f64 / 3.0);
                pts.push((cx + ea * t.cos(), -eb * t.sin()));
            }
        }
        // 49-60 outer lip, 61-68 inner lip
        let open = 0.04 + 0.1 * e.mouth_open;
        for k in 0..12 {
            let t = std::f64::consts::PI * (1.0 - k as f64 / 6.0);
            let u = 0.35 * t.cos();
            pts.push((u, self.mouth_v(u) - open * t.sin()));
        }
        for k in 0..8 {
            let t = std::f64::consts::PI * (1.0 - k as f64 / 4.0);
            let u = 0.25 * t.cos();
            pts.push((u, self.mouth_v(u) - 0.5 * open * t.sin()));
        }
        let pts: Vec<Point> = pts.into_iter().map(|(u, v)| self.face_to_image(u, v)).collect();
        LandmarkSet::new(&pts).expect("sketch produces 68 finite points")
    }

    /// Renders the face with soft (about 1.5 px) edges.
    pub fn render(&self) -> Image {
        let e = self.expression;
        let edge = 1.5 / self.scale;
        let soft = |d: f64| smoothstep(-edge, edge, d);
        Image::from_fn(self.width, self.height, |x, y| {
            let (u, v) = self.image_to_face(x as f64, y as f64);
            let mut val = 60.0 + 20.0 * (x as f64 / self.width as f64);
            // head
            let head = 1.0 - (u / 0.95).powi(2) - ((v - 0.25) / 1.12).powi(2);
            let skin = 165.0 + 25.0 * (-u * 0.6 - v * 0.3).tanh();
            val += (skin - val) * soft(head * 0.5);
            // brows
            let brow_v = -0.3 - 0.12 * e.brow_raise;
            let in_brow =
                (0.1 - ((u.abs() - 0.45) / 0.22).abs()).min(0.04 - (v - brow_v + 0.03).abs());
            val += (70.0 - val) * soft(in_brow);
            // eyes
            let eb = (0.06 * e.eye_open).max(0.01);
            for cx in [-0.4, 0.4] {
                let inside = 1.0 - ((u - cx) / 0.15).powi(2) - (v / eb).powi(2);
                val += (35.0 - val) * soft(inside * eb);
            }
            // nose shadow
            let nose = 0.05 - (u.abs() / 1.5 + (v - 0.45).abs() / 3.0);
            val += (130.0 - val) * soft(nose) * 0.6;
            // mouth
            if u.abs() < 0.4 {
                let open = 0.04 + 0.1 * e.mouth_open;
                let mid = self.mouth_v(u) - 0.5 * open;
                let half = 0.5 * open * (1.0 - (u / 0.35).powi(2)).max(0.0) + 0.012;
                let inside = (half - (v - mid).abs()).min(0.35 - u.abs());
                val += (55.0 - val) * soft(inside);
            }
            val.round().clamp(0.0, 255.0) as u8
        })
        .expect("non-zero sketch size")
    }
}

fn smoothstep(lo: f64, hi: f64, x: f64) -> f64 {
    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Class used for the bright-left half of [`separable_set`].
pub const BRIGHT_LEFT: EmotionClass = EmotionClass::Happy;
/// Class used for the bright-right half of [`separable_set`].
pub const BRIGHT_RIGHT: EmotionClass = EmotionClass::Sad;

/// Two-class toy set: noisy 128x128 images whose left or right half is
/// brighter. Classes alternate, so any prefix is balanced.
pub fn separable_set(n: usize, seed: u64) -> Vec<LabeledImage> {
    let mut r = rng::seeded(seed);
    let noise = Normal::<f64>::new(0.0, 12.0).expect("valid sigma");
    (0..n)
        .map(|i| {
            let left_bright = i % 2 == 0;
            let hi: f64 = r.gen_range(150.0..210.0);
            let lo: f64 = r.gen_range(50.0..110.0);
            let img = Image::from_fn(ALIGNED_SIDE, ALIGNED_SIDE, |x, _| {
                let bright_side = (x < ALIGNED_SIDE / 2) == left_bright;
                let base = if bright_side { hi } else { lo };
                (base + noise.sample(&mut r) as f64).round().clamp(0.0, 255.0) as u8
            })
            .expect("non-zero size");
            let label = if left_bright { BRIGHT_LEFT } else { BRIGHT_RIGHT };
            LabeledImage::classified(img, label)
        })
        .collect()
}
