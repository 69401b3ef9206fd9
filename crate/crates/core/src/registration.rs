//! Translation-only registration with exposure normalization.
//!
//! Every frame of a sequence is aligned against the first frame (never
//! chained frame-to-frame), so drift does not accumulate.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub const DEFAULT_MAX_SHIFT: usize = 64;
/// Frame channel means below this are left at unit gain.
const MIN_CHANNEL_MEAN: f64 = 1.0;

/// Content displacement of a moving frame relative to its reference
/// (positive dx: content moved right; positive dy: moved down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub dx: f64,
    pub dy: f64,
    /// Peak normalized cross-correlation, clamped to [0, 1].
    pub confidence: f64,
}

impl Shift {
    pub const ZERO: Shift = Shift {
        dx: 0.0,
        dy: 0.0,
        confidence: 1.0,
    };

    pub fn new(dx: f64, dy: f64) -> Shift {
        Shift {
            dx,
            dy,
            confidence: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub image: RasterImage,
    /// Gain applied per channel.
    pub gains: Vec<f64>,
    /// Channels too dark to rescale; left at gain 1.
    pub skipped_channels: Vec<usize>,
}

/// Rescale each channel so its mean matches the reference's.
pub fn normalize_exposure(frame: &RasterImage, reference: &RasterImage) -> Result<Normalized> {
    frame.ensure_same_shape(reference, "exposure normalization")?;
    let fm = frame.channel_means();
    let rm = reference.channel_means();
    let mut skipped_channels = Vec::new();
    let gains: Vec<f64> = fm
        .iter()
        .zip(&rm)
        .enumerate()
        .map(|(c, (&f, &r))| {
            if f < MIN_CHANNEL_MEAN {
                skipped_channels.push(c);
                1.0
            } else {
                r / f
            }
        })
        .collect();
    let ch = frame.channels();
    let mut image = frame.clone();
    if gains.iter().any(|&g| g != 1.0) {
        let luts: Vec<[u8; 256]> = gains
            .iter()
            .map(|&g| {
                let mut t = [0u8; 256];
                for (v, slot) in t.iter_mut().enumerate() {
                    *slot = (v as f64 * g).round().clamp(0.0, 255.0) as u8;
                }
                t
            })
            .collect();
        for px in image.pixels_mut().chunks_exact_mut(ch) {
            for (c, v) in px.iter_mut().enumerate() {
                *v = luts[c][*v as usize];
            }
        }
    }
    Ok(Normalized {
        image,
        gains,
        skipped_channels,
    })
}

/// Smallest n >= min whose only prime factors are 2, 3 and 5.
fn fast_len(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

struct Fft2 {
    nx: usize,
    ny: usize,
    row: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(nx: usize, ny: usize) -> Fft2 {
        let mut planner = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            row: planner.plan_fft_forward(nx),
            col: planner.plan_fft_forward(ny),
            row_inv: planner.plan_fft_inverse(nx),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    /// In-place 2-D transform of a row-major nx * ny buffer.
    fn run(&self, data: &mut [Complex<f64>], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row, &self.col)
        };
        row.process(data);
        let mut t = transpose(data, self.nx, self.ny);
        col.process(&mut t);
        let back = transpose(&t, self.ny, self.nx);
        data.copy_from_slice(&back);
    }
}

fn transpose(data: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); w * h];
    const B: usize = 32;
    for by in (0..h).step_by(B) {
        for bx in (0..w).step_by(B) {
            for y in by..(by + B).min(h) {
                for x in bx..(bx + B).min(w) {
                    out[x * h + y] = data[y * w + x];
                }
            }
        }
    }
    out
}

/// Summed-area table with one row/column of zero padding.
struct Integral {
    w: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(v: &[f64], w: usize, h: usize) -> Integral {
        let stride = w + 1;
        let mut sum = vec![0.0; stride * (h + 1)];
        let mut sq = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..w {
                let p = v[y * w + x];
                rs += p;
                rq += p * p;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
            }
        }
        Integral { w, sum, sq }
    }

    /// (sum, sum of squares) over [x0, x1) x [y0, y1).
    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let s = self.w + 1;
        let f = |t: &[f64]| t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0];
        (f(&self.sum), f(&self.sq))
    }
}

/// Estimate the translation of `moving` relative to `reference` by maximizing
/// normalized cross-correlation over [-max_shift, max_shift]^2, refined to
/// subpixel precision with separable parabolic fits around the peak.
///
/// `max_shift` is capped at half the smaller image side so overlaps stay large.
pub fn estimate_translation(
    reference: &RasterImage,
    moving: &RasterImage,
    max_shift: usize,
) -> Result<Shift> {
    if reference.dims() != moving.dims() {
        return Err(Error::Input(format!(
            "registration: {:?} vs {:?}",
            reference.dims(),
            moving.dims()
        )));
    }
    let (w, h) = reference.dims();
    let m = max_shift.min(w / 2).min(h / 2);
    let a = centered(reference.to_gray_f64())?;
    let b = centered(moving.to_gray_f64())?;

    let (nx, ny) = (fast_len(w + m), fast_len(h + m));
    let fft = Fft2::new(nx, ny);
    let pad = |v: &[f64]| {
        let mut out = vec![Complex::new(0.0, 0.0); nx * ny];
        for y in 0..h {
            for x in 0..w {
                out[y * nx + x].re = v[y * w + x];
            }
        }
        out
    };
    let mut fa = pad(&a);
    let mut fb = pad(&b);
    fft.run(&mut fa, false);
    fft.run(&mut fb, false);
    for (p, q) in fa.iter_mut().zip(&fb) {
        *p = p.conj() * q;
    }
    fft.run(&mut fa, true);
    let scale = 1.0 / (nx * ny) as f64;
    // cross[d] = sum_x a(x) b(x + d)
    let cross = |dx: isize, dy: isize| {
        let ix = dx.rem_euclid(nx as isize) as usize;
        let iy = dy.rem_euclid(ny as isize) as usize;
        fa[iy * nx + ix].re * scale
    };

    let ia = Integral::new(&a, w, h);
    let ib = Integral::new(&b, w, h);
    let side = 2 * m + 1;
    let mut ncc = vec![f64::NEG_INFINITY; side * side];
    for dy in -(m as isize)..=(m as isize) {
        for dx in -(m as isize)..=(m as isize) {
            let ax0 = (-dx).max(0) as usize;
            let ax1 = (w as isize - dx).min(w as isize) as usize;
            let ay0 = (-dy).max(0) as usize;
            let ay1 = (h as isize - dy).min(h as isize) as usize;
            let n = ((ax1 - ax0) * (ay1 - ay0)) as f64;
            let (sa, saa) = ia.rect(ax0, ay0, ax1, ay1);
            let bx0 = (ax0 as isize + dx) as usize;
            let by0 = (ay0 as isize + dy) as usize;
            let (sb, sbb) = ib.rect(bx0, by0, bx0 + ax1 - ax0, by0 + ay1 - ay0);
            let var_a = saa - sa * sa / n;
            let var_b = sbb - sb * sb / n;
            let den = (var_a * var_b).sqrt();
            let v = if den > 1e-9 {
                (cross(dx, dy) - sa * sb / n) / den
            } else {
                f64::NEG_INFINITY
            };
            ncc[(dy + m as isize) as usize * side + (dx + m as isize) as usize] = v;
        }
    }
    let (best, &peak) = ncc
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty search window");
    if !peak.is_finite() {
        return Err(Error::FeaturelessFrame);
    }
    let (px, py) = (best % side, best / side);
    let at = |x: usize, y: usize| ncc[y * side + x];
    let refine = |lo: Option<f64>, mid: f64, hi: Option<f64>| match (lo, hi) {
        (Some(l), Some(r)) if l.is_finite() && r.is_finite() => {
            let den = l - 2.0 * mid + r;
            if den < 0.0 {
                (0.5 * (l - r) / den).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let ox = refine(
        px.checked_sub(1).map(|x| at(x, py)),
        peak,
        (px + 1 < side).then(|| at(px + 1, py)),
    );
    let oy = refine(
        py.checked_sub(1).map(|y| at(px, y)),
        peak,
        (py + 1 < side).then(|| at(px, py + 1)),
    );
    // snap away rounding noise so symmetric peaks give exact integers
    let snap = |v: f64| (v * 1e6).round() / 1e6;
    Ok(Shift {
        dx: snap(px as f64 - m as f64 + ox),
        dy: snap(py as f64 - m as f64 + oy),
        confidence: peak.clamp(0.0, 1.0),
    })
}

fn centered(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var < 1e-12 {
        return Err(Error::FeaturelessFrame);
    }
    v.iter_mut().for_each(|x| *x -= mean);
    Ok(v)
}

/// Undo a content displacement: output(x, y) = image(x + dx, y + dy), bilinear.
/// Exposed borders take the image's per-channel median.
pub fn apply_translation(image: &RasterImage, shift: &Shift) -> RasterImage {
    if shift.dx == 0.0 && shift.dy == 0.0 {
        return image.clone();
    }
    let (w, h) = image.dims();
    let ch = image.channels();
    let fill = image.channel_medians();
    let src = image.pixels();
    let mut out = vec![0u8; src.len()];
    let (fx, fy) = (shift.dx - shift.dx.floor(), shift.dy - shift.dy.floor());
    let (ix, iy) = (shift.dx.floor() as isize, shift.dy.floor() as isize);
    let integral = fx == 0.0 && fy == 0.0;
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * ch;
            let sx = x as isize + ix;
            let sy = y as isize + iy;
            // rightmost/bottom sample needed for interpolation
            let ex = if fx > 0.0 { sx + 1 } else { sx };
            let ey = if fy > 0.0 { sy + 1 } else { sy };
            if sx < 0 || sy < 0 || ex >= w as isize || ey >= h as isize {
                out[o..o + ch].copy_from_slice(&fill);
                continue;
            }
            let (sx, sy) = (sx as usize, sy as usize);
            if integral {
                let i = (sy * w + sx) * ch;
                out[o..o + ch].copy_from_slice(&src[i..i + ch]);
                continue;
            }
            let (x1, y1) = ((sx + 1).min(w - 1), (sy + 1).min(h - 1));
            for c in 0..ch {
                let v00 = src[(sy * w + sx) * ch + c] as f64;
                let v10 = src[(sy * w + x1) * ch + c] as f64;
                let v01 = src[(y1 * w + sx) * ch + c] as f64;
                let v11 = src[(y1 * w + x1) * ch + c] as f64;
                let v = (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy;
                out[o + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RasterImage::new(w, h, ch, out)
        .expect("same dimensions")
        .with_pixel_pitch(image.pixel_pitch())
        .expect("pitch already valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAlignment {
    pub shift: Shift,
    pub gains: Vec<f64>,
    /// Set when the frame could not be registered and was passed through.
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AlignedSequence {
    pub frames: Vec<RasterImage>,
    pub alignments: Vec<FrameAlignment>,
}

/// Normalize exposure and register one frame against the reference.
pub fn align_frame(
    reference: &RasterImage,
    frame: &RasterImage,
    max_shift: usize,
) -> Result<(RasterImage, FrameAlignment)> {
    let norm = normalize_exposure(frame, reference)?;
    match estimate_translation(reference, &norm.image, max_shift) {
        Ok(shift) => {
            let aligned = apply_translation(&norm.image, &shift);
            Ok((
                aligned,
                FrameAlignment {
                    shift,
                    gains: norm.gains,
                    warning: None,
                },
            ))
        }
        Err(Error::FeaturelessFrame) => Ok((
            frame.clone(),
            FrameAlignment {
                shift: Shift {
                    dx: 0.0,
                    dy: 0.0,
                    confidence: 0.0,
                },
                gains: vec![1.0; frame.channels()],
                warning: Some("featureless frame passed through unaligned".into()),
            },
        )),
        Err(e) => Err(e),
    }
}

/// Align every frame to frame 0. Frame 0 is returned unchanged.
pub fn align_sequence(frames: &[RasterImage], max_shift: usize) -> Result<AlignedSequence> {
    if frames.len() < 2 {
        return Err(Error::Input("alignment needs at least two frames".into()));
    }
    let reference = &frames[0];
    for (i, f) in frames.iter().enumerate().skip(1) {
        f.ensure_same_shape(reference, &format!("frame {i}"))?;
    }
    let work = |f: &RasterImage| align_frame(reference, f, max_shift);
    #[cfg(feature = "parallel")]
    let rest: Vec<Result<(RasterImage, FrameAlignment)>> = {
        use rayon::prelude::*;
        frames[1..].par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rest: Vec<Result<(RasterImage, FrameAlignment)>> = frames[1..].iter().map(work).collect();

    let mut out_frames = vec![reference.clone()];
    let mut alignments = vec![FrameAlignment {
        shift: Shift::ZERO,
        gains: vec![1.0; reference.channels()],
        warning: None,
    }];
    for r in rest {
        let (img, a) = r?;
        out_frames.push(img);
        alignments.push(a);
    }
    Ok(AlignedSequence {
        frames: out_frames,
        alignments,
    })
}
