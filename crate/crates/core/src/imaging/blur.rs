use super::{quantize, Image};

const RADIUS: i64 = 2;
const TAPS: usize = 25;
const GAUSSIAN_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlurKind {
    Gaussian,
    Average,
    Median,
}

impl BlurKind {
    pub fn name(self) -> &'static str {
        match self {
            BlurKind::Gaussian => "gaussian",
            BlurKind::Average => "average",
            BlurKind::Median => "median",
        }
    }
}

/// 5x5 blur with clamp-to-border edge replication.
///
/// Gaussian uses sigma 1.5 normalised to unit sum, average the uniform
/// 1/25 kernel, median the 13th order statistic of the window.
pub fn blur(img: &Image, kind: BlurKind) -> Image {
    match kind {
        BlurKind::Gaussian => convolve(img, &gaussian_kernel()),
        BlurKind::Average => convolve(img, &[1.0 / TAPS as f64; TAPS]),
        BlurKind::Median => median(img),
    }
}

fn gaussian_kernel() -> [f64; TAPS] {
    let mut k = [0.0; TAPS];
    let two_s2 = 2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA;
    for dy in -RADIUS..=RADIUS {
        for dx in -RADIUS..=RADIUS {
            k[((dy + RADIUS) * 5 + dx + RADIUS) as usize] =
                (-((dx * dx + dy * dy) as f64) / two_s2).exp();
        }
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn window(img: &Image, x: usize, y: usize) -> [u8; TAPS] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut out = [0u8; TAPS];
    let mut i = 0;
    for dy in -RADIUS..=RADIUS {
        let yy = (y as i64 + dy).clamp(0, h - 1) as usize;
        for dx in -RADIUS..=RADIUS {
            let xx = (x as i64 + dx).clamp(0, w - 1) as usize;
            out[i] = img.get(xx, yy);
            i += 1;
        }
    }
    out
}

fn convolve(img: &Image, kernel: &[f64; TAPS]) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let win = window(img, x, y);
        quantize(win.iter().zip(kernel).map(|(&p, &k)| p as f64 * k).sum())
    })
    .expect("dimensions preserved")
}

fn median(img: &Image) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let mut win = window(img, x, y);
        win.sort_unstable();
        win[TAPS / 2]
    })
    .expect("dimensions preserved")
}
