//! Bright-field droplet detection and droplet population statistics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{gaussian_blur, otsu_level, threshold_above};
use crate::raster::{BinaryMask, RasterImage};
use crate::region::{label_components, Connectivity, Region};

/// Per-pixel time average of static frames preceding droplet arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub mean_image: RasterImage,
    pub frame_count: usize,
}

pub fn build_background(frames: &[RasterImage]) -> Result<BackgroundModel> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Input("background needs at least one frame".into()))?;
    for (i, f) in frames.iter().enumerate().skip(1) {
        f.ensure_same_shape(first, &format!("background frame {i}"))?;
    }
    let n = frames.len() as u32;
    let mut sums = vec![0u32; first.pixels().len()];
    for f in frames {
        for (s, &v) in sums.iter_mut().zip(f.pixels()) {
            *s += v as u32;
        }
    }
    // round half up
    let mean: Vec<u8> = sums.into_iter().map(|s| ((2 * s + n) / (2 * n)) as u8).collect();
    let mean_image = RasterImage::new(first.width(), first.height(), first.channels(), mean)?
        .with_pixel_pitch(first.pixel_pitch())?;
    Ok(BackgroundModel {
        mean_image,
        frame_count: frames.len(),
    })
}

/// Absolute difference to the background, collapsed across channels by max.
pub fn subtract_background(frame: &RasterImage, bg: &BackgroundModel) -> Result<RasterImage> {
    frame.ensure_same_shape(&bg.mean_image, "background subtraction")?;
    let c = frame.channels();
    let diff: Vec<u8> = frame
        .pixels()
        .chunks_exact(c)
        .zip(bg.mean_image.pixels().chunks_exact(c))
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| x.abs_diff(y))
                .max()
                .unwrap_or(0)
        })
        .collect();
    RasterImage::new(frame.width(), frame.height(), 1, diff)?.with_pixel_pitch(frame.pixel_pitch())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    #[default]
    Otsu,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub gaussian_sigma: f64,
    pub threshold_mode: ThresholdMode,
    pub fixed_threshold: u8,
    /// Otsu levels below this are raised to it, so static noise alone never segments.
    pub noise_floor: u8,
    pub min_area: usize,
    pub min_circularity: f64,
    pub fill_holes: bool,
    pub connectivity: Connectivity,
    /// Re-place each detected boundary at half the local edge height of the
    /// unblurred difference, removing the outward bias of blur plus a low
    /// global threshold.
    pub refine_edges: bool,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            gaussian_sigma: 2.0,
            threshold_mode: ThresholdMode::Otsu,
            fixed_threshold: 30,
            noise_floor: 10,
            min_area: 50,
            min_circularity: 0.6,
            fill_holes: true,
            connectivity: Connectivity::Eight,
            refine_edges: true,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0) {
            return Err(Error::Config("gaussian_sigma must be >= 0".into()));
        }
        if self.min_area < 1 {
            return Err(Error::Config("min_area must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_circularity) {
            return Err(Error::Config("min_circularity must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Blur, binarize, optionally fill holes, label, then drop regions that are
/// too small or not round enough. Survivors keep label order.
pub fn segment_droplets(diff: &RasterImage, cfg: &SegmentationConfig) -> Result<Vec<Region>> {
    cfg.validate()?;
    if diff.channels() != 1 {
        return Err(Error::Input("segment_droplets expects a gray difference image".into()));
    }
    let blurred = gaussian_blur(diff, cfg.gaussian_sigma);
    let level = match cfg.threshold_mode {
        ThresholdMode::Fixed => cfg.fixed_threshold,
        ThresholdMode::Otsu => match otsu_level(&blurred) {
            Some(t) => t.max(cfg.noise_floor),
            None => return Ok(Vec::new()),
        },
    };
    let mut mask = threshold_above(&blurred, level);
    if cfg.fill_holes {
        mask = mask.fill_holes();
    }
    let keep = |r: &Region| r.pixel_count >= cfg.min_area && r.circularity() >= cfg.min_circularity;
    let regions = label_components(&mask, cfg.connectivity);
    if !cfg.refine_edges {
        return Ok(regions.into_iter().filter(keep).collect());
    }
    Ok(regions
        .iter()
        // cheap pre-filter; refinement moves the boundary by a pixel or two
        .filter(|r| r.pixel_count >= cfg.min_area / 2)
        .filter_map(|r| refine_edge(diff, r, cfg))
        .filter(keep)
        .collect())
}

/// Depth of the band inside a detected boundary that samples the edge height.
const EDGE_BAND: usize = 4;
/// How far outside the detected boundary a refined boundary may move.
const EDGE_MARGIN: usize = 3;

fn refine_edge(diff: &RasterImage, region: &Region, cfg: &SegmentationConfig) -> Option<Region> {
    let (w, h) = diff.dims();
    let b = &region.bounding_box;
    let x0 = b.x0.saturating_sub(EDGE_MARGIN);
    let y0 = b.y0.saturating_sub(EDGE_MARGIN);
    let x1 = (b.x1 + EDGE_MARGIN).min(w - 1);
    let y1 = (b.y1 + EDGE_MARGIN).min(h - 1);
    let (ww, wh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut inside = vec![false; ww * wh];
    for &(x, y) in region.pixels() {
        inside[(y as usize - y0) * ww + (x as usize - x0)] = true;
    }

    let step = |src: &[bool], grow: bool| -> Vec<bool> {
        let at = |x: isize, y: isize| {
            x >= 0 && y >= 0 && (x as usize) < ww && (y as usize) < wh && src[y as usize * ww + x as usize]
        };
        let mut out = src.to_vec();
        for y in 0..wh as isize {
            for x in 0..ww as isize {
                let n = [at(x - 1, y), at(x + 1, y), at(x, y - 1), at(x, y + 1)];
                out[y as usize * ww + x as usize] = if grow {
                    at(x, y) || n.iter().any(|&v| v)
                } else {
                    at(x, y) && n.iter().all(|&v| v)
                };
            }
        }
        out
    };
    let mut core = inside.clone();
    for _ in 0..EDGE_BAND {
        core = step(&core, false);
    }
    let mut band: Vec<u8> = (0..ww * wh)
        .filter(|&i| inside[i] && !core[i])
        .map(|i| diff.sample(x0 + i % ww, y0 + i / ww, 0))
        .collect();
    if band.is_empty() {
        return None;
    }
    band.sort_unstable();
    let height = band[band.len() * 3 / 4] as f64;
    let level = (height / 2.0).max(cfg.noise_floor as f64);

    let mut near = inside.clone();
    for _ in 0..EDGE_MARGIN {
        near = step(&near, true);
    }
    let bits = (0..ww * wh)
        .map(|i| near[i] && diff.sample(x0 + i % ww, y0 + i / ww, 0) as f64 > level)
        .collect();
    let mut local = BinaryMask::from_bits(ww, wh, bits).ok()?;
    if cfg.fill_holes {
        local = local.fill_holes();
    }
    let best = label_components(&local, cfg.connectivity)
        .into_iter()
        .max_by_key(|c| {
            c.pixels()
                .iter()
                .filter(|&&(x, y)| inside[y as usize * ww + x as usize])
                .count()
        })?;
    let pixels = best
        .pixels()
        .iter()
        .map(|&(x, y)| (x + x0 as u32, y + y0 as u32))
        .collect();
    Region::from_pixels(region.label, pixels).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropletRecord {
    pub id: u32,
    pub centroid: (f64, f64),
    /// px^2
    pub area: f64,
    pub diameter_px: f64,
    pub diameter_um: Option<f64>,
    pub circularity: f64,
    /// (dye name, fraction) in calibration order; empty until unmixed.
    pub dye_fractions: Vec<(String, f64)>,
    /// Set when unmixing found no dye in the droplet.
    pub empty: bool,
}

pub fn equivalent_diameter(area: f64) -> f64 {
    2.0 * (area / PI).sqrt()
}

pub fn droplet_metrics(regions: &[Region], pixel_pitch: Option<f64>) -> Vec<DropletRecord> {
    regions
        .iter()
        .map(|r| {
            let d = equivalent_diameter(r.area());
            DropletRecord {
                id: r.label,
                centroid: r.centroid,
                area: r.area(),
                diameter_px: d,
                diameter_um: pixel_pitch.map(|p| d * p),
                circularity: r.circularity(),
                dye_fractions: Vec::new(),
                empty: false,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub count: usize,
    pub mean_diameter: f64,
    /// Population standard deviation (divisor N).
    pub sd_diameter: f64,
    pub cv_percent: f64,
}

/// Diameter statistics in pixels.
pub fn population_stats(droplets: &[DropletRecord]) -> Result<PopulationStats> {
    let diameters: Vec<f64> = droplets.iter().map(|d| d.diameter_px).collect();
    diameter_stats(&diameters)
}

pub fn diameter_stats(diameters: &[f64]) -> Result<PopulationStats> {
    if diameters.is_empty() {
        return Err(Error::Input("population statistics need at least one droplet".into()));
    }
    let n = diameters.len() as f64;
    let mean = diameters.iter().sum::<f64>() / n;
    let var = diameters.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    Ok(PopulationStats {
        count: diameters.len(),
        mean_diameter: mean,
        sd_diameter: sd,
        cv_percent: if mean > 0.0 { 100.0 * sd / mean } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> RasterImage {
        RasterImage::from_fn(w, h, 1, |x, y, _| f(x, y)).unwrap()
    }

    #[test]
    fn background_of_one_frame_is_identity() {
        let f = gray(8, 8, |x, y| (x * 10 + y) as u8);
        let bg = build_background(std::slice::from_ref(&f)).unwrap();
        assert_eq!(bg.mean_image, f);
        assert_eq!(bg.frame_count, 1);
    }

    #[test]
    fn background_is_mean() {
        let a = RasterImage::filled(4, 4, &[100, 100, 100]).unwrap();
        let b = RasterImage::filled(4, 4, &[200, 200, 200]).unwrap();
        let bg = build_background(&[a, b]).unwrap();
        assert!(bg.mean_image.pixels().iter().all(|&v| v == 150));
    }

    #[test]
    fn background_errors() {
        assert!(build_background(&[]).is_err());
        let a = RasterImage::filled(4, 4, &[1]).unwrap();
        let b = RasterImage::filled(4, 5, &[1]).unwrap();
        assert!(build_background(&[a, b]).is_err());
    }

    #[test]
    fn subtraction_is_exact() {
        let bg_img = RasterImage::filled(40, 40, &[128, 128, 128]).unwrap();
        let bg = build_background(std::slice::from_ref(&bg_img)).unwrap();
        assert!(subtract_background(&bg_img, &bg).unwrap().pixels().iter().all(|&v| v == 0));
        let frame = RasterImage::from_fn(40, 40, 3, |x, y, _| {
            if (x as i32 - 20).pow(2) + (y as i32 - 20).pow(2) <= 64 {
                64
            } else {
                128
            }
        })
        .unwrap();
        let d = subtract_background(&frame, &bg).unwrap();
        assert_eq!(d.sample(20, 20, 0), 64);
        assert_eq!(d.sample(0, 0, 0), 0);
    }

    #[test]
    fn blank_difference_segments_to_nothing() {
        let blank = RasterImage::filled(64, 64, &[0]).unwrap();
        assert!(segment_droplets(&blank, &SegmentationConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn rejects_rgb_input_and_bad_config() {
        let rgb = RasterImage::filled(8, 8, &[0, 0, 0]).unwrap();
        assert!(segment_droplets(&rgb, &SegmentationConfig::default()).is_err());
        let gray_img = RasterImage::filled(8, 8, &[0]).unwrap();
        let cfg = SegmentationConfig {
            min_circularity: 1.5,
            ..Default::default()
        };
        assert!(segment_droplets(&gray_img, &cfg).is_err());
    }

    #[test]
    fn diameter_conversion() {
        let d = equivalent_diameter(PI * 50.0 * 50.0);
        assert!((d - 100.0).abs() < 1e-12);
        let region = Region::from_pixels(
            1,
            (0..10u32).flat_map(|y| (0..10u32).map(move |x| (x, y))).collect(),
        )
        .unwrap();
        let rec = &droplet_metrics(&[region], Some(1.5))[0];
        assert!((rec.diameter_um.unwrap() - 1.5 * rec.diameter_px).abs() < 1e-12);
    }

    #[test]
    fn stats_closed_form() {
        let s = diameter_stats(&[90.0, 100.0, 110.0]).unwrap();
        assert!((s.mean_diameter - 100.0).abs() < 1e-12);
        assert!((s.sd_diameter - 8.164_965_809_277_26).abs() < 1e-9);
        assert!((s.cv_percent - 8.164_965_809_277_26).abs() < 1e-9);
        assert_eq!(diameter_stats(&[5.0; 4]).unwrap().cv_percent, 0.0);
        assert!(population_stats(&[]).is_err());
    }
}
