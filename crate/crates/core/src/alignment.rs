//! Landmark-driven face alignment.
//!
//! The eye line is levelled by rotating about the eye midpoint, the face
//! box is read off the rotated jaw landmarks (points 1, 9 and 17), its top
//! edge is placed so the eyes sit one third of the way down, and the crop
//! is rescaled to [`ALIGNED_SIDE`] pixels square.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imaging::{resize_bilinear, warp_rotate, Image};

/// Output side length of an aligned face.
pub const ALIGNED_SIDE: usize = 128;
pub const LANDMARK_COUNT: usize = 68;
pub const SIDECAR_EXTENSION: &str = "lm68";

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("eye centres coincide, rotation is undefined")]
    CoincidentEyes,
    #[error("degenerate face: {0}")]
    DegenerateFace(String),
    #[error("crop rectangle is empty after clamping to the image")]
    EmptyCrop,
    #[error("landmark file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected {LANDMARK_COUNT} landmarks, found {0}")]
    WrongPointCount(usize),
    #[error("landmark {0} has a non-finite coordinate")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }
}

/// Applies the forward rotation `c + R(angle) (p - c)` used by [`warp_rotate`].
pub fn rotate_point(p: Point, angle: f64, center: Point) -> Point {
    let (sin, cos) = angle.sin_cos();
    let (dx, dy) = (p.x - center.x, p.y - center.y);
    Point::new(
        center.x + cos * dx - sin * dy,
        center.y + sin * dx + cos * dy,
    )
}

/// The 68 iBUG landmarks, stored 0-based but addressed 1-based via [`LandmarkSet::point`].
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    points: [Point; LANDMARK_COUNT],
}

impl LandmarkSet {
    pub fn new(points: &[Point]) -> Result<Self, AlignError> {
        let points: [Point; LANDMARK_COUNT] = points
            .try_into()
            .map_err(|_| AlignError::WrongPointCount(points.len()))?;
        if let Some(i) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(AlignError::NonFinite(i + 1));
        }
        Ok(Self { points })
    }

    /// Landmark by its 1-based iBUG index.
    pub fn point(&self, index: usize) -> Point {
        self.points[index - 1]
    }

    pub fn points(&self) -> &[Point; LANDMARK_COUNT] {
        &self.points
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        Self {
            points: self.points.map(f),
        }
    }

    /// Parses the sidecar text format: 68 lines of `x y`.
    pub fn parse(text: &str) -> Result<Self, AlignError> {
        let mut points = Vec::with_capacity(LANDMARK_COUNT);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut coord = |name: &str| -> Result<f64, AlignError> {
                fields
                    .next()
                    .ok_or_else(|| AlignError::Parse {
                        line: i + 1,
                        message: format!("missing {name}"),
                    })?
                    .parse::<f64>()
                    .map_err(|e| AlignError::Parse {
                        line: i + 1,
                        message: format!("bad {name}: {e}"),
                    })
            };
            let x = coord("x")?;
            let y = coord("y")?;
            if fields.next().is_some() {
                return Err(AlignError::Parse {
                    line: i + 1,
                    message: "trailing fields".into(),
                });
            }
            points.push(Point::new(x, y));
        }
        Self::new(&points)
    }

    pub fn to_text(&self) -> String {
        self.points
            .iter()
            .map(|p| format!("{} {}\n", p.x, p.y))
            .collect()
    }

    /// `face.pgm` -> `face.lm68`.
    pub fn sidecar_path(image_path: &Path) -> PathBuf {
        image_path.with_extension(SIDECAR_EXTENSION)
    }
}

/// Mean of landmarks 37-42 (image-left eye) and 43-48 (image-right eye).
pub fn eye_centers(lm: &LandmarkSet) -> (Point, Point) {
    let mean = |range: std::ops::RangeInclusive<usize>| {
        let n = range.clone().count() as f64;
        let (sx, sy) = range.fold((0.0, 0.0), |(sx, sy), i| {
            let p = lm.point(i);
            (sx + p.x, sy + p.y)
        });
        Point::new(sx / n, sy / n)
    };
    (mean(37..=42), mean(43..=48))
}

/// Angle of the eye line; rotating by its negative levels the eyes.
pub fn rotation_from_eyes(left: Point, right: Point) -> Result<f64, AlignError> {
    let (dx, dy) = (right.x - left.x, right.y - left.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(AlignError::CoincidentEyes);
    }
    Ok(dy.atan2(dx))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropRect {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl CropRect {
    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }
}

/// Face box from landmarks already in the levelled frame.
///
/// Left/right come from jaw points 1 and 17, bottom from the chin (9), and
/// the top satisfies `eye_y - top = (bottom - top) / 3`.
pub fn crop_bounds(rotated: &LandmarkSet, eye_center: Point) -> Result<CropRect, AlignError> {
    let bottom = rotated.point(9).y;
    if bottom <= eye_center.y {
        return Err(AlignError::DegenerateFace(format!(
            "chin (y = {bottom}) is not below the eyes (y = {})",
            eye_center.y
        )));
    }
    let (mut left, mut right) = (rotated.point(1).x, rotated.point(17).x);
    if left > right {
        std::mem::swap(&mut left, &mut right);
    }
    if right <= left {
        return Err(AlignError::DegenerateFace("zero face width".into()));
    }
    let top = (3.0 * eye_center.y - bottom) / 2.0;
    Ok(CropRect {
        left,
        top,
        right,
        bottom,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedFace {
    pub image: Image,
    /// Rotation applied to the input image (the negated eye-line angle).
    pub rotation_applied: f64,
    /// Face box in the rotated frame, before pixel rounding.
    pub crop: CropRect,
    /// Rotation pivot (the eye midpoint).
    pub pivot: Point,
    /// Integer pixel window `[x0, x1) x [y0, y1)` actually cropped.
    pub window: (usize, usize, usize, usize),
}

impl AlignedFace {
    /// Maps a point of the input image into the 128x128 output frame.
    pub fn map_point(&self, p: Point) -> Point {
        let r = rotate_point(p, self.rotation_applied, self.pivot);
        let (x0, y0, x1, y1) = self.window;
        let sx = ALIGNED_SIDE as f64 / (x1 - x0) as f64;
        let sy = ALIGNED_SIDE as f64 / (y1 - y0) as f64;
        // inverse of the pixel-centre resize mapping
        Point::new(
            (r.x - x0 as f64 + 0.5) * sx - 0.5,
            (r.y - y0 as f64 + 0.5) * sy - 0.5,
        )
    }
}

/// Full alignment: level the eyes, crop to the landmark box, resize to 128x128.
pub fn align_face(img: &Image, lm: &LandmarkSet) -> Result<AlignedFace, AlignError> {
    let (left_eye, right_eye) = eye_centers(lm);
    let angle = rotation_from_eyes(left_eye, right_eye)?;
    let pivot = left_eye.midpoint(right_eye);
    let rotation = -angle;
    let rotated_img = warp_rotate(img, rotation, (pivot.x, pivot.y));
    let rotated_lm = lm.map(|p| rotate_point(p, rotation, pivot));
    let crop = crop_bounds(&rotated_lm, pivot)?;

    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = crop.left.floor().clamp(0.0, w);
    let y0 = crop.top.floor().clamp(0.0, h);
    let x1 = (crop.right.ceil() + 1.0).clamp(0.0, w);
    let y1 = (crop.bottom.ceil() + 1.0).clamp(0.0, h);
    if x1 <= x0 || y1 <= y0 {
        return Err(AlignError::EmptyCrop);
    }
    let window = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
    let cropped = rotated_img
        .crop(window.0, window.1, window.2, window.3)
        .map_err(|_| AlignError::EmptyCrop)?;
    let image =
        resize_bilinear(&cropped, ALIGNED_SIDE, ALIGNED_SIDE).expect("non-zero output size");
    Ok(AlignedFace {
        image,
        rotation_applied: rotation,
        crop,
        pivot,
        window,
    })
}
