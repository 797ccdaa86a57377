//! Frame-by-frame inference with exponential smoothing of the intensities.
//!
//! Record schema, one comma-separated line per frame after a header:
//!
//! ```text
//! frame_index,class,angry,disgust,fear,happy,neutral,sad,surprise,latency_ms,note
//! 0,happy,0.0112,0.0040,0.0051,0.8120,0.1533,0.0081,0.0063,1.208,
//! 1,skip,,,,,,,,0.017,alignment failed: eye centers coincide
//! ```
//!
//! Intensities are the smoothed values to 4 decimals. Skipped frames leave
//! `class` as `skip`, the intensity fields empty, and say why in `note`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::alignment::{align_face, LandmarkSet};
use crate::dataset::{input_tensor, EmotionClass, IntensityVector, TaskMode, NUM_CLASSES};
use crate::eval::{argmax, head_output};
use crate::exec::Exec;
use crate::imaging::{read_pgm, Image};
use crate::nn::{infer, ModelParams, NnError};

pub const DEFAULT_ALPHA: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("smoothing factor {0} outside (0, 1]")]
    BadAlpha(f64),
    #[error("model has a {model} head but {requested} was requested")]
    ModelModeMismatch { model: TaskMode, requested: TaskMode },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// `alpha * current + (1 - alpha) * prev`, componentwise.
///
/// Evaluated as `prev + alpha * (current - prev)` so that a repeated frame
/// is an exact fixed point; `alpha = 1` returns `current` unchanged.
pub fn smooth(
    prev: &IntensityVector,
    current: &IntensityVector,
    alpha: f64,
) -> Result<IntensityVector, StreamError> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(*current);
    }
    let mut out = [0.0; NUM_CLASSES];
    for (o, (&p, &c)) in out.iter_mut().zip(prev.0.iter().zip(&current.0)) {
        *o = p + alpha * (c - p);
    }
    Ok(IntensityVector(out))
}

fn check_alpha(alpha: f64) -> Result<(), StreamError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(StreamError::BadAlpha(alpha))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FrameOutcome {
    Scored {
        class: EmotionClass,
        intensity: IntensityVector,
        raw_intensity: IntensityVector,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub outcome: FrameOutcome,
    pub latency_ms: f64,
}

pub const RECORD_HEADER: &str =
    "frame_index,class,angry,disgust,fear,happy,neutral,sad,surprise,latency_ms,note";

impl FrameRecord {
    pub fn class(&self) -> Option<EmotionClass> {
        match &self.outcome {
            FrameOutcome::Scored { class, .. } => Some(*class),
            FrameOutcome::Skipped { .. } => None,
        }
    }

    pub fn intensity(&self) -> Option<&IntensityVector> {
        match &self.outcome {
            FrameOutcome::Scored { intensity, .. } => Some(intensity),
            FrameOutcome::Skipped { .. } => None,
        }
    }

    pub fn raw_intensity(&self) -> Option<&IntensityVector> {
        match &self.outcome {
            FrameOutcome::Scored { raw_intensity, .. } => Some(raw_intensity),
            FrameOutcome::Skipped { .. } => None,
        }
    }

    /// One line of the record schema, without a trailing newline.
    pub fn to_line(&self) -> String {
        let mut line = format!("{},", self.frame_index);
        match &self.outcome {
            FrameOutcome::Scored {
                class, intensity, ..
            } => {
                line.push_str(class.name());
                for v in intensity.0 {
                    line.push_str(&format!(",{v:.4}"));
                }
                line.push_str(&format!(",{:.3},", self.latency_ms));
            }
            FrameOutcome::Skipped { reason } => {
                line.push_str("skip");
                line.push_str(&",".repeat(NUM_CLASSES));
                let note = reason.replace([',', '\n', '\r'], ";");
                line.push_str(&format!(",{:.3},{note}", self.latency_ms));
            }
        }
        line
    }
}

/// One input frame; `Err` carries why it could not be read.
pub type FrameInput = Result<(Image, LandmarkSet), String>;

/// Smoothing state machine over a single frame sequence.
pub struct Streamer<'a> {
    params: &'a ModelParams<f32>,
    mode: TaskMode,
    alpha: f64,
    state: Option<IntensityVector>,
    next_index: u64,
}

impl<'a> Streamer<'a> {
    /// `model_mode` is the head recorded with the model, `mode` the one requested.
    pub fn new(
        params: &'a ModelParams<f32>,
        model_mode: TaskMode,
        mode: TaskMode,
        alpha: f64,
    ) -> Result<Self, StreamError> {
        check_alpha(alpha)?;
        if model_mode != mode {
            return Err(StreamError::ModelModeMismatch {
                model: model_mode,
                requested: mode,
            });
        }
        Ok(Self {
            params,
            mode,
            alpha,
            state: None,
            next_index: 0,
        })
    }

    pub fn process(&mut self, frame: FrameInput) -> Result<FrameRecord, StreamError> {
        let start = Instant::now();
        let frame_index = self.next_index;
        self.next_index += 1;
        let outcome = match frame {
            Err(reason) => FrameOutcome::Skipped { reason },
            Ok((image, landmarks)) => match align_face(&image, &landmarks) {
                Err(e) => FrameOutcome::Skipped {
                    reason: format!("alignment failed: {e}"),
                },
                Ok(aligned) => self.score(&aligned.image)?,
            },
        };
        Ok(FrameRecord {
            frame_index,
            outcome,
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn score(&mut self, aligned: &Image) -> Result<FrameOutcome, StreamError> {
        let logits = infer(self.params, &input_tensor(aligned), Exec::Sequential)?;
        let row: Vec<f64> = logits.data().iter().map(|&v| v as f64).collect();
        let mut raw = [0.0; NUM_CLASSES];
        raw.copy_from_slice(&head_output(&row, self.mode)[..NUM_CLASSES]);
        let raw_intensity = IntensityVector(raw);
        let intensity = match &self.state {
            None => raw_intensity,
            Some(prev) => smooth(prev, &raw_intensity, self.alpha)?,
        };
        self.state = Some(intensity);
        let class = EmotionClass::from_index(argmax(&intensity.0)).expect("index below 7");
        Ok(FrameOutcome::Scored {
            class,
            intensity,
            raw_intensity,
        })
    }
}

/// Runs every frame through a fresh [`Streamer`].
pub fn run_stream(
    params: &ModelParams<f32>,
    model_mode: TaskMode,
    frames: impl IntoIterator<Item = FrameInput>,
    alpha: f64,
    mode: TaskMode,
) -> Result<Vec<FrameRecord>, StreamError> {
    let mut s = Streamer::new(params, model_mode, mode, alpha)?;
    frames.into_iter().map(|f| s.process(f)).collect()
}

/// Reads a PGM frame and its `.lm68` sidecar (or an explicit landmark file).
pub fn load_frame(image_path: &Path, landmark_path: Option<&Path>) -> FrameInput {
    let sidecar = landmark_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| LandmarkSet::sidecar_path(image_path));
    let bytes = std::fs::read(image_path)
        .map_err(|e| format!("cannot read {}: {e}", image_path.display()))?;
    let image = read_pgm(&bytes).map_err(|e| format!("{}: {e}", image_path.display()))?;
    let text = std::fs::read_to_string(&sidecar)
        .map_err(|e| format!("missing landmarks {}: {e}", sidecar.display()))?;
    let landmarks = LandmarkSet::parse(&text).map_err(|e| format!("{}: {e}", sidecar.display()))?;
    Ok((image, landmarks))
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Numbered `.pgm` frames in `dir`, ordered by the trailing number of the
/// file stem (files without one sort last, by name).
pub fn directory_frames(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            frames.push(path);
        }
    }
    frames.sort_by(|a, b| {
        let key = |p: &PathBuf| (frame_number(p).map_or((1, 0), |n| (0, n)), p.clone());
        key(a).cmp(&key(b))
    });
    Ok(frames)
}

/// Frame list text: one image path per line, optionally followed by
/// whitespace and an explicit landmark path. Blank lines and `#` comments
/// are ignored; relative paths resolve against `base`.
pub fn parse_frame_list(text: &str, base: &Path) -> Vec<(PathBuf, Option<PathBuf>)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut parts = l.split_whitespace();
            let image = base.join(parts.next().expect("non-empty line"));
            (image, parts.next().map(|p| base.join(p)))
        })
        .collect()
}
