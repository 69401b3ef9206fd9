//! Grayscale filtering and thresholding.

use crate::raster::{BinaryMask, RasterImage};

/// Separable Gaussian blur of a gray image, borders replicated. Output is
/// rounded back to 8 bits.
pub fn gaussian_blur(image: &RasterImage, sigma: f64) -> RasterImage {
    assert_eq!(image.channels(), 1, "gaussian_blur expects a gray image");
    if sigma <= 0.0 {
        return image.clone();
    }
    let (w, h) = image.dims();
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let src: Vec<f32> = image.pixels().iter().map(|&v| v as f32).collect();
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                let xx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += wk * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                acc += wk * tmp[yy * w + x];
            }
            out[y * w + x] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    RasterImage::new(w, h, 1, out).expect("same dimensions")
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k.into_iter().map(|v| v as f32).collect()
}

/// Otsu's threshold on an 8-bit histogram. Returns `None` when the image has a
/// single intensity (no between-class variance to maximize).
///
/// Pixels strictly greater than the returned level form the foreground.
pub fn otsu_level(image: &RasterImage) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in image.pixels() {
        hist[v as usize] += 1;
    }
    otsu_from_histogram(&hist)
}

pub fn otsu_from_histogram(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut w0 = 0u64;
    let mut sum0 = 0.0;
    let mut best: Option<(f64, u8)> = None;
    for t in 0..255usize {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1).powi(2);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, t as u8));
        }
    }
    best.filter(|&(b, _)| b > 0.0).map(|(_, t)| t)
}

/// Pixels strictly above `level`.
pub fn threshold_above(image: &RasterImage, level: u8) -> BinaryMask {
    let bits = image.pixels().iter().map(|&v| v > level).collect();
    BinaryMask::from_bits(image.width(), image.height(), bits).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constant_image() {
        let img = RasterImage::filled(17, 9, &[77]).unwrap();
        assert_eq!(gaussian_blur(&img, 2.0), img);
    }

    #[test]
    fn blur_of_step_is_half_at_edge() {
        let img = RasterImage::from_fn(40, 3, 1, |x, _, _| if x < 20 { 0 } else { 200 }).unwrap();
        let b = gaussian_blur(&img, 2.0);
        // edge between x=19 and x=20 sits at the 50% level
        let left = b.sample(19, 1, 0) as f64;
        let right = b.sample(20, 1, 0) as f64;
        assert!(((left + right) / 2.0 - 100.0).abs() <= 1.0);
    }

    #[test]
    fn otsu_splits_bimodal() {
        let img = RasterImage::from_fn(10, 10, 1, |x, _, _| if x < 5 { 20 } else { 180 }).unwrap();
        let t = otsu_level(&img).unwrap();
        assert!((20..180).contains(&t));
        assert_eq!(threshold_above(&img, t).count(), 50);
    }

    #[test]
    fn otsu_on_flat_image_is_none() {
        assert_eq!(otsu_level(&RasterImage::filled(8, 8, &[0]).unwrap()), None);
    }
}
