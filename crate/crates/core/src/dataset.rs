//! Labels, manifests, expression-sequence sampling and batch iteration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{align_face, AlignError, LandmarkSet, ALIGNED_SIDE};
use crate::exec::Exec;
use crate::imaging::{read_pgm, Image, ImageError};
use crate::nn::Tensor;
use crate::rng;

pub const NUM_CLASSES: usize = 7;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest line {line}: unknown class name {name:?}")]
    UnknownClassName { line: usize, name: String },
    #[error("manifest line {line}: regression manifests need an intensity column")]
    MissingIntensityColumn { line: usize },
    #[error("intensity {0} is outside (0, 1]")]
    OutOfRangeIntensity(f64),
    #[error("sequence has {frames} frames, need at least {needed}")]
    TooFewFrames { frames: usize, needed: usize },
    #[error("apex frame {apex} lies on the boundary of a {frames}-frame sequence")]
    ApexOnBoundary { apex: usize, frames: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("{path}: {source}")]
    Align { path: PathBuf, source: AlignError },
    #[error("{path}: no landmark sidecar and image is {width}x{height}, not an aligned {ALIGNED_SIDE}x{ALIGNED_SIDE} face")]
    NotAligned {
        path: PathBuf,
        width: usize,
        height: usize,
    },
    #[error("images in one batch differ in size")]
    InconsistentImageSize,
}

/// The seven expression classes in their fixed index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmotionClass {
    Angry = 0,
    Disgust = 1,
    Fear = 2,
    Happy = 3,
    Neutral = 4,
    Sad = 5,
    Surprise = 6,
}

impl EmotionClass {
    pub const ALL: [EmotionClass; NUM_CLASSES] = [
        EmotionClass::Angry,
        EmotionClass::Disgust,
        EmotionClass::Fear,
        EmotionClass::Happy,
        EmotionClass::Neutral,
        EmotionClass::Sad,
        EmotionClass::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionClass::Angry => "angry",
            EmotionClass::Disgust => "disgust",
            EmotionClass::Fear => "fear",
            EmotionClass::Happy => "happy",
            EmotionClass::Neutral => "neutral",
            EmotionClass::Sad => "sad",
            EmotionClass::Surprise => "surprise",
        }
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Per-class intensities in `[0, 1]`, indexed by [`EmotionClass::index`].
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct IntensityVector(pub [f64; NUM_CLASSES]);

impl IntensityVector {
    pub fn get(&self, c: EmotionClass) -> f64 {
        self.0[c.index()]
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }
}

/// Label for `cls` shown at strength `k`: `cls = k`, `neutral = 1 - k`.
/// Neutral itself is always the pure neutral vector.
pub fn intensity_label(cls: EmotionClass, k: f64) -> Result<IntensityVector, DatasetError> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(DatasetError::OutOfRangeIntensity(k));
    }
    let mut v = [0.0; NUM_CLASSES];
    if cls == EmotionClass::Neutral {
        v[cls.index()] = 1.0;
    } else {
        v[cls.index()] = k;
        v[EmotionClass::Neutral.index()] = 1.0 - k;
    }
    Ok(IntensityVector(v))
}

/// Labelled strengths of the 9 frames sampled from one expression sequence.
pub fn sequence_intensities() -> [f64; 9] {
    [0.2, 0.4, 0.6, 0.8, 1.0, 0.8, 0.6, 0.4, 0.2]
}

/// Picks 9 frames from an `n`-frame onset-apex-offset sequence.
///
/// Intensity is modelled as a linear ramp `0 -> 1` over `[0, apex]` and
/// `1 -> 0` over `[apex, n - 1]`. The four rising targets (0.2..0.8) are
/// matched to strictly increasing frames before the apex, the four falling
/// targets to frames after it, minimising total absolute intensity error;
/// among equal-cost matchings the earliest frames win.
pub fn select_sequence_frames(n: usize, apex: usize) -> Result<[usize; 9], DatasetError> {
    const SIDE: usize = 4;
    if n < 9 {
        return Err(DatasetError::TooFewFrames {
            frames: n,
            needed: 9,
        });
    }
    if apex == 0 || apex >= n - 1 {
        return Err(DatasetError::ApexOnBoundary { apex, frames: n });
    }
    if apex < SIDE || n - 1 - apex < SIDE {
        // each side of the apex must hold four distinct frames
        return Err(DatasetError::TooFewFrames {
            frames: n,
            needed: 9,
        });
    }
    let targets = sequence_intensities();
    let rising: Vec<(usize, f64)> = (0..apex).map(|f| (f, f as f64 / apex as f64)).collect();
    let tail = (n - 1 - apex) as f64;
    let falling: Vec<(usize, f64)> = (apex + 1..n)
        .map(|f| (f, (n - 1 - f) as f64 / tail))
        .collect();
    let up = monotone_match(&targets[..SIDE], &rising);
    let down = monotone_match(&targets[SIDE + 1..], &falling);
    let mut out = [0; 9];
    out[..SIDE].copy_from_slice(&up);
    out[SIDE] = apex;
    out[SIDE + 1..].copy_from_slice(&down);
    Ok(out)
}

/// Minimum-cost strictly increasing assignment of `targets` to `frames`.
fn monotone_match(targets: &[f64], frames: &[(usize, f64)]) -> Vec<usize> {
    const TIE: f64 = 1e-12;
    let (t, m) = (targets.len(), frames.len());
    // cost[i][j]: best cost of placing targets i.. with target i on frame j
    let mut cost = vec![vec![f64::INFINITY; m]; t];
    for i in (0..t).rev() {
        let mut suffix = if i + 1 == t { 0.0 } else { f64::INFINITY };
        for j in (0..m).rev() {
            if m - j >= t - i {
                cost[i][j] = (frames[j].1 - targets[i]).abs() + suffix;
            }
            if i + 1 < t {
                suffix = suffix.min(cost[i + 1][j]);
            }
        }
    }
    let mut picks = Vec::with_capacity(t);
    let mut start = 0;
    for row in &cost {
        let best = row[start..].iter().cloned().fold(f64::INFINITY, f64::min);
        let j = (start..m)
            .find(|&j| row[j] <= best + TIE)
            .expect("a feasible frame exists");
        picks.push(frames[j].0);
        start = j + 1;
    }
    picks
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image_path: PathBuf,
    pub landmark_path: PathBuf,
    pub label: EmotionClass,
    pub intensity: Option<IntensityVector>,
    pub apex: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskMode {
    Classification,
    Regression,
}

impl TaskMode {
    pub fn name(self) -> &'static str {
        match self {
            TaskMode::Classification => "classification",
            TaskMode::Regression => "regression",
        }
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classification" => Ok(TaskMode::Classification),
            "regression" => Ok(TaskMode::Regression),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Parses manifest text: `<image_path>,<class_name>[,<intensity>[,<apex_index>]]`
/// with `#` comments. Relative paths resolve against `base`.
pub fn parse_manifest(
    text: &str,
    base: &Path,
    mode: TaskMode,
) -> Result<Vec<Sample>, DatasetError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 4 || fields[0].is_empty() {
            return Err(DatasetError::Parse {
                line: line_no,
                message: format!("expected 2 to 4 comma-separated fields, got {line:?}"),
            });
        }
        let label: EmotionClass =
            fields[1]
                .parse()
                .map_err(|name| DatasetError::UnknownClassName {
                    line: line_no,
                    name,
                })?;
        let number = |s: &str, what: &str| -> Result<f64, DatasetError> {
            s.parse::<f64>().map_err(|e| DatasetError::Parse {
                line: line_no,
                message: format!("bad {what} {s:?}: {e}"),
            })
        };
        let intensity = match (mode, fields.get(2)) {
            (TaskMode::Classification, _) => None,
            (TaskMode::Regression, None) => {
                return Err(DatasetError::MissingIntensityColumn { line: line_no })
            }
            (TaskMode::Regression, Some(s)) => {
                Some(intensity_label(label, number(s, "intensity")?)?)
            }
        };
        if let (TaskMode::Classification, Some(s)) = (mode, fields.get(2)) {
            let k = number(s, "intensity")?;
            if !(k > 0.0 && k <= 1.0) {
                return Err(DatasetError::OutOfRangeIntensity(k));
            }
        }
        let apex = fields
            .get(3)
            .map(|s| {
                s.parse::<usize>().map_err(|e| DatasetError::Parse {
                    line: line_no,
                    message: format!("bad apex index {s:?}: {e}"),
                })
            })
            .transpose()?;
        let image_path = base.join(fields[0]);
        out.push(Sample {
            landmark_path: LandmarkSet::sidecar_path(&image_path),
            image_path,
            label,
            intensity,
            apex,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path, mode: TaskMode) -> Result<Vec<Sample>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base, mode)
}

/// An aligned face with its targets, ready for batching.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: EmotionClass,
    pub intensity: Option<IntensityVector>,
}

impl LabeledImage {
    pub fn classified(image: Image, label: EmotionClass) -> Self {
        Self {
            image,
            label,
            intensity: None,
        }
    }
}

/// Reads a PGM and its sidecar if present. With a sidecar the face is
/// aligned; without one the file must already be an aligned 128x128 face.
pub fn load_aligned(image_path: &Path) -> Result<Image, DatasetError> {
    let bytes = std::fs::read(image_path).map_err(|source| DatasetError::Io {
        path: image_path.to_path_buf(),
        source,
    })?;
    let img = read_pgm(&bytes).map_err(|source| DatasetError::Image {
        path: image_path.to_path_buf(),
        source,
    })?;
    let sidecar = LandmarkSet::sidecar_path(image_path);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|source| DatasetError::Io {
            path: sidecar.clone(),
            source,
        })?;
        let align_err = |source| DatasetError::Align {
            path: sidecar.clone(),
            source,
        };
        let lm = LandmarkSet::parse(&text).map_err(align_err)?;
        return Ok(align_face(&img, &lm).map_err(align_err)?.image);
    }
    if img.width() != ALIGNED_SIDE || img.height() != ALIGNED_SIDE {
        return Err(DatasetError::NotAligned {
            path: image_path.to_path_buf(),
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(img)
}

/// Loads every sample's aligned image, preserving manifest order.
pub fn load_samples(samples: &[Sample], exec: Exec) -> Result<Vec<LabeledImage>, DatasetError> {
    exec.map(samples.len(), |i| {
        let s = &samples[i];
        Ok(LabeledImage {
            image: load_aligned(&s.image_path)?,
            label: s.label,
            intensity: s.intensity,
        })
    })
    .into_iter()
    .collect()
}

/// `(1, 1, H, W)` network input for one aligned face, pixels scaled to `[0, 1]`.
pub fn input_tensor(img: &Image) -> Tensor<f32> {
    let pixels = img.pixels().iter().map(|&p| p as f32 / 255.0).collect();
    Tensor::from_vec(vec![1, 1, img.height(), img.width()], pixels).expect("shape matches data")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `(N, 1, H, W)`, pixels scaled to `[0, 1]`.
    pub inputs: Tensor<f32>,
    pub class_targets: Vec<usize>,
    /// `(N, 7)` when every item carries an intensity label.
    pub intensity_targets: Option<Tensor<f32>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.class_targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_targets.is_empty()
    }

    pub fn from_items<'a>(
        items: impl IntoIterator<Item = &'a LabeledImage>,
    ) -> Result<Self, DatasetError> {
        let items: Vec<&LabeledImage> = items.into_iter().collect();
        let first = items.first().ok_or(DatasetError::EmptyDataset)?;
        let (w, h) = (first.image.width(), first.image.height());
        let mut data = Vec::with_capacity(items.len() * w * h);
        let mut class_targets = Vec::with_capacity(items.len());
        let mut intensities = Vec::with_capacity(items.len() * NUM_CLASSES);
        let mut all_intensity = true;
        for it in &items {
            if it.image.width() != w || it.image.height() != h {
                return Err(DatasetError::InconsistentImageSize);
            }
            data.extend(it.image.pixels().iter().map(|&p| p as f32 / 255.0));
            class_targets.push(it.label.index());
            match &it.intensity {
                Some(v) => intensities.extend(v.0.iter().map(|&x| x as f32)),
                None => all_intensity = false,
            }
        }
        let n = items.len();
        Ok(Batch {
            inputs: Tensor::from_vec(vec![n, 1, h, w], data).expect("shape matches data"),
            class_targets,
            intensity_targets: all_intensity
                .then(|| Tensor::from_vec(vec![n, NUM_CLASSES], intensities).expect("shape")),
        })
    }
}

/// Sample order for one epoch: a Fisher-Yates shuffle driven by the
/// generator derived from `(seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::derived(seed, rng::stream::SHUFFLE, epoch));
    order
}

pub fn batches_per_epoch(len: usize, batch_size: usize) -> usize {
    len.div_ceil(batch_size)
}

/// Iterator over the shuffled batches of one epoch; the last batch may be short.
pub struct Batches<'a> {
    samples: &'a [LabeledImage],
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        Some(
            Batch::from_items(idx.iter().map(|&i| &self.samples[i]))
                .expect("sample sizes validated up front"),
        )
    }
}

pub fn batches(
    samples: &[LabeledImage],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Batches<'_>, DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(DatasetError::ZeroBatchSize);
    }
    let (w, h) = (samples[0].image.width(), samples[0].image.height());
    if samples
        .iter()
        .any(|s| s.image.width() != w || s.image.height() != h)
    {
        return Err(DatasetError::InconsistentImageSize);
    }
    Ok(Batches {
        samples,
        order: epoch_order(samples.len(), seed, epoch),
        batch_size,
        pos: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_order_is_fixed() {
        let names: Vec<_> = EmotionClass::ALL.iter().map(|c| c.name()).collect();
        assert_eq!(
            names,
            ["angry", "disgust", "fear", "happy", "neutral", "sad", "surprise"]
        );
        for (i, c) in EmotionClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(EmotionClass::from_index(i), Some(*c));
        }
        assert_eq!("surprise".parse::<EmotionClass>(), Ok(EmotionClass::Surprise));
        assert!("joyful".parse::<EmotionClass>().is_err());
    }

    #[test]
    fn intensity_label_examples() {
        let v = intensity_label(EmotionClass::Happy, 0.2).unwrap();
        assert_eq!(v.0, [0.0, 0.0, 0.0, 0.2, 0.8, 0.0, 0.0]);
        let v = intensity_label(EmotionClass::Sad, 0.4).unwrap();
        assert_eq!(v.0, [0.0, 0.0, 0.0, 0.0, 0.6, 0.4, 0.0]);
        for k in [0.2, 0.7, 1.0] {
            let v = intensity_label(EmotionClass::Neutral, k).unwrap();
            assert_eq!(v.0, [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        }
        assert!(matches!(
            intensity_label(EmotionClass::Fear, 0.0),
            Err(DatasetError::OutOfRangeIntensity(_))
        ));
        assert!(intensity_label(EmotionClass::Fear, 1.2).is_err());
        assert!(intensity_label(EmotionClass::Fear, f64::NAN).is_err());
    }

    #[test]
    fn labels_sum_to_one() {
        for c in EmotionClass::ALL {
            for k in [0.2, 0.4, 0.6, 0.8, 1.0, 0.33] {
                let s: f64 = intensity_label(c, k).unwrap().0.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequence_targets() {
        let s = sequence_intensities();
        assert_eq!(s.len(), 9);
        assert_eq!(s[4], 1.0);
        let mut r = s;
        r.reverse();
        assert_eq!(r, s);
    }

    #[test]
    fn frame_selection_examples() {
        assert_eq!(
            select_sequence_frames(9, 4).unwrap(),
            [0, 1, 2, 3, 4, 5, 6, 7, 8]
        );
        assert_eq!(
            select_sequence_frames(11, 5).unwrap(),
            [1, 2, 3, 4, 5, 6, 7, 8, 9]
        );
        assert!(matches!(
            select_sequence_frames(8, 4),
            Err(DatasetError::TooFewFrames { .. })
        ));
        assert!(matches!(
            select_sequence_frames(12, 0),
            Err(DatasetError::ApexOnBoundary { .. })
        ));
        assert!(matches!(
            select_sequence_frames(12, 11),
            Err(DatasetError::ApexOnBoundary { .. })
        ));
        assert!(matches!(
            select_sequence_frames(12, 2),
            Err(DatasetError::TooFewFrames { .. })
        ));
    }

    /// Exhaustive oracle over all strictly increasing 4-subsets.
    fn brute_side(targets: &[f64], frames: &[(usize, f64)]) -> Vec<usize> {
        let m = frames.len();
        let mut best = (f64::INFINITY, vec![]);
        for a in 0..m {
            for b in a + 1..m {
                for c in b + 1..m {
                    for d in c + 1..m {
                        let pick = [a, b, c, d];
                        let cost: f64 = pick
                            .iter()
                            .zip(targets)
                            .map(|(&j, t)| (frames[j].1 - t).abs())
                            .sum();
                        if cost < best.0 - 1e-12 {
                            best = (cost, pick.iter().map(|&j| frames[j].0).collect());
                        }
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn frame_selection_matches_exhaustive_search() {
        let targets = sequence_intensities();
        for n in 9..26 {
            for apex in 4..n - 4 {
                let got = select_sequence_frames(n, apex).unwrap();
                assert!(got.windows(2).all(|w| w[0] < w[1]), "{n} {apex} {got:?}");
                let rising: Vec<_> = (0..apex).map(|f| (f, f as f64 / apex as f64)).collect();
                let tail = (n - 1 - apex) as f64;
                let falling: Vec<_> = (apex + 1..n)
                    .map(|f| (f, (n - 1 - f) as f64 / tail))
                    .collect();
                let cost = |sel: &[usize], side: &[(usize, f64)], ts: &[f64]| -> f64 {
                    sel.iter()
                        .zip(ts)
                        .map(|(&f, t)| (side.iter().find(|p| p.0 == f).unwrap().1 - t).abs())
                        .sum()
                };
                let up = brute_side(&targets[..4], &rising);
                let down = brute_side(&targets[5..], &falling);
                assert!(
                    (cost(&got[..4], &rising, &targets[..4]) - cost(&up, &rising, &targets[..4]))
                        .abs()
                        < 1e-9
                );
                assert!(
                    (cost(&got[5..], &falling, &targets[5..])
                        - cost(&down, &falling, &targets[5..]))
                    .abs()
                        < 1e-9
                );
                assert_eq!(got[4], apex);
            }
        }
    }

    #[test]
    fn manifest_parsing() {
        let base = Path::new("/data");
        let s = parse_manifest(
            "# corpus\nimg/a.pgm,happy\n\n",
            base,
            TaskMode::Classification,
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].label, EmotionClass::Happy);
        assert_eq!(s[0].intensity, None);
        assert_eq!(s[0].image_path, PathBuf::from("/data/img/a.pgm"));
        assert_eq!(s[0].landmark_path, PathBuf::from("/data/img/a.lm68"));

        let s = parse_manifest("img/a.pgm,happy,0.6,12", base, TaskMode::Regression).unwrap();
        let v = s[0].intensity.unwrap();
        assert_eq!(v.get(EmotionClass::Happy), 0.6);
        assert_eq!(v.get(EmotionClass::Neutral), 0.4);
        assert_eq!(s[0].apex, Some(12));

        assert!(matches!(
            parse_manifest("# x\nimg/a.pgm,joyful", base, TaskMode::Classification),
            Err(DatasetError::UnknownClassName { line: 2, .. })
        ));
        assert!(matches!(
            parse_manifest("img/a.pgm,sad", base, TaskMode::Regression),
            Err(DatasetError::MissingIntensityColumn { line: 1 })
        ));
        assert!(matches!(
            parse_manifest("img/a.pgm", base, TaskMode::Classification),
            Err(DatasetError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_manifest("a.pgm,sad,abc", base, TaskMode::Regression),
            Err(DatasetError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_manifest("a.pgm,sad,1.5", base, TaskMode::Regression),
            Err(DatasetError::OutOfRangeIntensity(_))
        ));
    }

    fn tiny_set(n: usize) -> Vec<LabeledImage> {
        (0..n)
            .map(|i| {
                LabeledImage::classified(
                    Image::filled(4, 4, (i * 2) as u8).unwrap(),
                    EmotionClass::from_index(i % 7).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn batch_sizes_and_scaling() {
        let set = tiny_set(10);
        let sizes: Vec<_> = batches(&set, 4, 1, 0).unwrap().map(|b| b.len()).collect();
        assert_eq!(sizes, [4, 4, 2]);
        for b in batches(&set, 4, 1, 0).unwrap() {
            assert_eq!(b.inputs.shape(), &[b.len(), 1, 4, 4]);
            assert!(b.inputs.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(b.intensity_targets.is_none());
        }
        assert_eq!(batches_per_epoch(10, 4), 3);
        assert!(matches!(batches(&[], 4, 1, 0), Err(DatasetError::EmptyDataset)));
        assert!(matches!(batches(&set, 0, 1, 0), Err(DatasetError::ZeroBatchSize)));
    }

    #[test]
    fn shuffle_is_keyed_by_seed_and_epoch() {
        assert_eq!(epoch_order(100, 5, 3), epoch_order(100, 5, 3));
        assert_ne!(epoch_order(100, 5, 0), epoch_order(100, 5, 1));
        assert_ne!(epoch_order(100, 5, 0), epoch_order(100, 6, 0));
        let mut o = epoch_order(100, 5, 0);
        o.sort_unstable();
        assert_eq!(o, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn batch_carries_intensities_when_present() {
        let mut set = tiny_set(3);
        for s in &mut set {
            s.intensity = Some(intensity_label(s.label, 0.4).unwrap());
        }
        let b = Batch::from_items(&set).unwrap();
        let t = b.intensity_targets.unwrap();
        assert_eq!(t.shape(), &[3, 7]);
        // item 0 is angry at 0.4
        assert_eq!(&t.data()[..7], &[0.4, 0.0, 0.0, 0.0, 0.6, 0.0, 0.0]);
    }
}
