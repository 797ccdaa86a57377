//! Facial emotion recognition from precomputed 68-point landmarks.
//!
//! The pipeline mirrors the stages of a classic expression-recognition
//! project: align faces ([`alignment`]), fan out brightness/blur variants
//! ([`augment`]), train a compact CNN ([`nn`], [`loss`], [`train`]) for
//! either 7-way classification or 7-dimensional intensity regression,
//! score it ([`eval`]) and run it frame by frame ([`stream`]).
//!
//! Heavy loops run on rayon when the `parallel` feature is enabled (the
//! default). Every parallel kernel writes disjoint output slices with a
//! fixed per-element summation order, so results are bit-identical to the
//! sequential path regardless of thread count.

pub mod alignment;
pub mod augment;
pub mod dataset;
pub mod eval;
pub mod exec;
pub mod imaging;
pub mod loss;
pub mod nn;
pub mod rng;
pub mod stream;
pub mod synth;
pub mod train;

pub use alignment::{align_face, AlignedFace, CropRect, LandmarkSet, Point};
pub use dataset::{EmotionClass, IntensityVector};
pub use exec::Exec;
pub use imaging::Image;
pub use nn::{Architecture, ModelParams, Tensor};
