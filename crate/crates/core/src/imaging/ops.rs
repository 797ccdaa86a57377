use super::{quantize, Image, ImageError};

/// BT.601 luma.
pub fn to_grayscale(r: u8, g: u8, b: u8) -> u8 {
    quantize(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
}

/// Bilinear resampling with pixel-center alignment.
///
/// Destination pixel `d` samples source coordinate `(d + 0.5) * src / dst - 0.5`,
/// clamped to the valid range.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroDimension {
            width: out_w,
            height: out_h,
        });
    }
    if out_w == img.width() && out_h == img.height() {
        return Ok(img.clone());
    }
    let xs = axis_taps(img.width(), out_w);
    let ys = axis_taps(img.height(), out_h);
    let w = img.width();
    let src = img.pixels();
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p00 = src[y0 * w + x0] as f64;
            let p01 = src[y0 * w + x1] as f64;
            let p10 = src[y1 * w + x0] as f64;
            let p11 = src[y1 * w + x1] as f64;
            let top = p00 + (p01 - p00) * fx;
            let bottom = p10 + (p11 - p10) * fx;
            out.push(quantize(top + (bottom - top) * fy));
        }
    }
    Image::new(out_w, out_h, out)
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Rotates `img` by `angle` radians about `center`.
///
/// The forward map is `p' = c + R(angle) (p - c)` in image coordinates
/// (x right, y down, pixel `(i, j)` centred at `(i, j)`), the same map
/// [`crate::alignment::rotate_point`] applies to landmarks. Each output pixel
/// bilinearly samples the inverse-rotated source position; neighbours
/// outside the source contribute black.
pub fn warp_rotate(img: &Image, angle: f64, center: (f64, f64)) -> Image {
    if angle == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let (sin, cos) = angle.sin_cos();
    let (cx, cy) = center;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            // inverse rotation R(-angle)
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            out.push(quantize(sample_black(img, sx, sy)));
        }
    }
    Image::new(w, h, out).expect("dimensions preserved")
}

fn sample_black(img: &Image, sx: f64, sy: f64) -> f64 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let px = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
            0.0
        } else {
            img.get(x as usize, y as usize) as f64
        }
    };
    let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
    let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Multiplicative brightness change: `clamp(round(v * factor), 0, 255)`.
pub fn adjust_brightness(img: &Image, factor: f64) -> Result<Image, ImageError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(ImageError::NonPositiveFactor(factor));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let lut: Vec<u8> = (0..=255u32).map(|v| quantize(v as f64 * factor)).collect();
    let pixels = img.pixels().iter().map(|&p| lut[p as usize]).collect();
    Image::new(img.width(), img.height(), pixels)
}
