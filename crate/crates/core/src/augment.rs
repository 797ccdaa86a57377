//! Deterministic brightness x blur fan-out: 7 brightness levels times
//! {none, gaussian, average, median} gives 28 variants per face.

use std::fmt;

use thiserror::Error;

use crate::exec::Exec;
use crate::imaging::{adjust_brightness, blur, BlurKind, Image};

pub const BRIGHTNESS_LEVELS: usize = 7;
pub const BLUR_STATES: usize = 4;
pub const VARIANTS_PER_IMAGE: usize = BRIGHTNESS_LEVELS * BLUR_STATES;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("invalid augmentation spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentSpec {
    pub brightness_factors: Vec<f64>,
    /// `None` is the un-blurred state.
    pub blur_kinds: Vec<Option<BlurKind>>,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        default_spec()
    }
}

pub fn default_spec() -> AugmentSpec {
    AugmentSpec {
        brightness_factors: vec![0.55, 0.70, 0.85, 1.00, 1.15, 1.30, 1.45],
        blur_kinds: vec![
            None,
            Some(BlurKind::Gaussian),
            Some(BlurKind::Average),
            Some(BlurKind::Median),
        ],
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidSpec(m));
        if self.brightness_factors.len() != BRIGHTNESS_LEVELS {
            return bad(format!(
                "{} brightness factors, need {BRIGHTNESS_LEVELS}",
                self.brightness_factors.len()
            ));
        }
        if self.blur_kinds.len() != BLUR_STATES {
            return bad(format!(
                "{} blur kinds, need {BLUR_STATES}",
                self.blur_kinds.len()
            ));
        }
        if let Some(f) = self
            .brightness_factors
            .iter()
            .find(|f| !(f.is_finite() && **f > 0.0))
        {
            return bad(format!("brightness factor {f} is not positive"));
        }
        if !self.brightness_factors.contains(&1.0) {
            return bad("brightness factor 1.0 missing".into());
        }
        if !self.blur_kinds.contains(&None) {
            return bad("blur kind `none` missing".into());
        }
        for (i, k) in self.blur_kinds.iter().enumerate() {
            if self.blur_kinds[..i].contains(k) {
                return bad(format!("duplicate blur kind {}", kind_name(*k)));
            }
        }
        Ok(())
    }
}

pub fn kind_name(kind: Option<BlurKind>) -> &'static str {
    kind.map_or("none", BlurKind::name)
}

/// Identifies one variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariantTag {
    pub factor: f64,
    pub blur: Option<BlurKind>,
}

impl VariantTag {
    pub fn is_identity(&self) -> bool {
        self.factor == 1.0 && self.blur.is_none()
    }

    /// `<stem>__b<factor>__<kind>.pgm`
    pub fn file_name(&self, stem: &str) -> String {
        format!("{stem}__{self}.pgm")
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{:.2}__{}", self.factor, kind_name(self.blur))
    }
}

/// All variants of `img`, brightness-major then blur, brightness applied first.
pub fn variants(img: &Image, spec: &AugmentSpec) -> Result<Vec<(VariantTag, Image)>, AugmentError> {
    spec.validate()?;
    let mut out = Vec::with_capacity(VARIANTS_PER_IMAGE);
    for &factor in &spec.brightness_factors {
        let lit = adjust_brightness(img, factor).expect("factors validated");
        for &kind in &spec.blur_kinds {
            let v = match kind {
                None => lit.clone(),
                Some(k) => blur(&lit, k),
            };
            out.push((VariantTag { factor, blur: kind }, v));
        }
    }
    Ok(out)
}

/// [`variants`] over a corpus; output order follows input order.
pub fn augment_all(
    images: &[Image],
    spec: &AugmentSpec,
    exec: Exec,
) -> Result<Vec<Vec<(VariantTag, Image)>>, AugmentError> {
    spec.validate()?;
    exec.map(images.len(), |i| variants(&images[i], spec))
        .into_iter()
        .collect()
}

/// Corpus size after augmentation.
pub fn augmented_count(originals: usize) -> usize {
    originals * VARIANTS_PER_IMAGE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::FaceSketch;

    fn face() -> Image {
        crate::imaging::resize_bilinear(&FaceSketch::default().render(), 40, 40).unwrap()
    }

    #[test]
    fn default_spec_shape() {
        let s = default_spec();
        assert_eq!(s.brightness_factors.len(), 7);
        assert!(s.brightness_factors.contains(&1.0));
        assert_eq!(s.blur_kinds.len(), 4);
        assert!(s.blur_kinds.contains(&None));
        s.validate().unwrap();
    }

    #[test]
    fn fan_out_is_28_with_identity() {
        let img = face();
        let vs = variants(&img, &default_spec()).unwrap();
        assert_eq!(vs.len(), 28);
        let ident: Vec<_> = vs.iter().filter(|(t, _)| t.is_identity()).collect();
        assert_eq!(ident.len(), 1);
        assert_eq!(ident[0].1, img);
        // brightness-major ordering
        assert_eq!(vs[0].0.factor, 0.55);
        assert_eq!(vs[3].0.blur, Some(BlurKind::Median));
        assert_eq!(vs[4].0.factor, 0.70);
    }

    #[test]
    fn deterministic() {
        let img = face();
        assert_eq!(
            variants(&img, &default_spec()).unwrap(),
            variants(&img, &default_spec()).unwrap()
        );
    }

    #[test]
    fn mean_brightness_non_decreasing_per_kind() {
        let vs = variants(&face(), &default_spec()).unwrap();
        for k in 0..4 {
            let means: Vec<f64> = (0..7).map(|b| vs[b * 4 + k].1.mean()).collect();
            assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = default_spec();
        s.brightness_factors.pop();
        assert!(matches!(variants(&face(), &s), Err(AugmentError::InvalidSpec(_))));
        let mut s = default_spec();
        s.blur_kinds[0] = Some(BlurKind::Median);
        assert!(s.validate().is_err());
        let mut s = default_spec();
        s.brightness_factors[3] = 1.05;
        assert!(s.validate().is_err());
        let mut s = default_spec();
        s.brightness_factors[0] = -0.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn naming_and_scaling() {
        let t = VariantTag {
            factor: 0.7,
            blur: Some(BlurKind::Gaussian),
        };
        assert_eq!(t.file_name("s001"), "s001__b0.70__gaussian.pgm");
        assert_eq!(augmented_count(41_029), 1_148_812);
    }

    #[test]
    fn corpus_parallel_matches_sequential() {
        let imgs = vec![face(), Image::filled(8, 8, 99).unwrap()];
        let a = augment_all(&imgs, &default_spec(), Exec::Sequential).unwrap();
        let b = augment_all(&imgs, &default_spec(), Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
