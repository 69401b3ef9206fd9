//! Fluorescence-field analysis: HSV segmentation, morphometrics, live/dead
//! scoring, channel transfer, cell time series and label-map import.

mod hsv;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage};
use crate::region::{circularity, label_components, Connectivity, Region};

pub use hsv::{rgb_to_hsv, HsvBand};

pub const DEFAULT_TRACK_RADIUS: f64 = 15.0;
/// Regions whose G + R falls below this are reported as dim.
pub const DIM_LEVEL: f64 = 5.0;
/// Dominance factor separating live from dead.
pub const VIABILITY_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluorConfig {
    pub green_band: HsvBand,
    pub red_band: HsvBand,
    /// Bands whose union is segmented. Defaults to green and red.
    pub segment_bands: Vec<HsvBand>,
    pub min_area: usize,
    pub track_radius: f64,
}

impl Default for FluorConfig {
    fn default() -> Self {
        FluorConfig {
            green_band: HsvBand::green(),
            red_band: HsvBand::red(),
            segment_bands: vec![HsvBand::green(), HsvBand::red()],
            min_area: 20,
            track_radius: DEFAULT_TRACK_RADIUS,
        }
    }
}

impl FluorConfig {
    pub fn validate(&self) -> Result<()> {
        self.green_band.validate()?;
        self.red_band.validate()?;
        if self.segment_bands.is_empty() {
            return Err(Error::Config("fluorescence: segment_bands is empty".into()));
        }
        for b in &self.segment_bands {
            b.validate()?;
        }
        if !(self.track_radius > 0.0) {
            return Err(Error::Config("fluorescence: track_radius must be positive".into()));
        }
        Ok(())
    }
}

fn ensure_rgb(image: &RasterImage, what: &str) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::Input(format!(
            "{what} needs a 3-channel image, got {} channels",
            image.channels()
        )));
    }
    Ok(())
}

/// Pixels inside any of the bands.
pub fn band_mask(image: &RasterImage, bands: &[HsvBand]) -> Result<BinaryMask> {
    ensure_rgb(image, "HSV thresholding")?;
    let bits = image
        .pixels()
        .chunks_exact(3)
        .map(|p| {
            let rgb = [p[0], p[1], p[2]];
            bands.iter().any(|b| b.contains(rgb))
        })
        .collect();
    BinaryMask::from_bits(image.width(), image.height(), bits)
}

pub fn segment_fluorescent(image: &RasterImage, band: &HsvBand, min_area: usize) -> Result<Vec<Region>> {
    segment_bands(image, std::slice::from_ref(band), min_area)
}

/// Segment the union of several bands; regions carry mean channel intensities.
pub fn segment_bands(image: &RasterImage, bands: &[HsvBand], min_area: usize) -> Result<Vec<Region>> {
    let mask = band_mask(image, bands)?.fill_holes();
    let mut regions: Vec<Region> = label_components(&mask, Connectivity::Eight)
        .into_iter()
        .filter(|r| r.pixel_count >= min_area.max(1))
        .collect();
    for r in &mut regions {
        r.measure_intensity(image)?;
    }
    Ok(regions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morphometrics {
    pub area_px: f64,
    pub area_um2: Option<f64>,
    pub perimeter_px: f64,
    pub circularity: f64,
}

pub fn morphometrics(region: &Region, pixel_pitch: Option<f64>) -> Morphometrics {
    let area = region.area();
    Morphometrics {
        area_px: area,
        area_um2: pixel_pitch.map(|p| area * p * p),
        perimeter_px: region.perimeter,
        // regions always have at least one pixel and a positive perimeter
        circularity: circularity(area, region.perimeter).expect("non-empty region"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Viability {
    Live,
    Dead,
    Ambiguous,
}

impl Viability {
    pub fn as_str(self) -> &'static str {
        match self {
            Viability::Live => "live",
            Viability::Dead => "dead",
            Viability::Ambiguous => "ambiguous",
        }
    }

    pub fn classify(green: f64, red: f64) -> (Viability, bool) {
        if green + red < DIM_LEVEL {
            (Viability::Ambiguous, true)
        } else if green >= VIABILITY_FACTOR * red {
            (Viability::Live, false)
        } else if red >= VIABILITY_FACTOR * green {
            (Viability::Dead, false)
        } else {
            (Viability::Ambiguous, false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionViability {
    pub label: u32,
    pub mean_green: f64,
    pub mean_red: f64,
    pub class: Viability,
    pub dim: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveDeadReport {
    pub regions: Vec<RegionViability>,
    /// Sum of green over sum of green + red across all region pixels; None
    /// when both sums are zero.
    pub field_ratio: Option<f64>,
}

impl LiveDeadReport {
    pub fn count(&self, class: Viability) -> usize {
        self.regions.iter().filter(|r| r.class == class).count()
    }
}

/// The RGB channel whose primary hue falls inside the band, preferring the
/// one nearest the band's center.
pub fn emission_channel(band: &HsvBand) -> usize {
    let width = (band.hue_hi - band.hue_lo).rem_euclid(360.0);
    let center = (band.hue_lo + width / 2.0).rem_euclid(360.0);
    let dist = |c: usize| {
        let d = (center - 120.0 * c as f64).rem_euclid(360.0);
        d.min(360.0 - d)
    };
    (0..3)
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
        .expect("three channels")
}

/// Per-region viability and the field live fraction. The bands pick which
/// RGB channel carries each emission, so transferred images work unchanged.
pub fn live_dead(
    image: &RasterImage,
    green_band: &HsvBand,
    red_band: &HsvBand,
    regions: &[Region],
) -> Result<LiveDeadReport> {
    ensure_rgb(image, "live/dead scoring")?;
    let gc = emission_channel(green_band);
    let rc = emission_channel(red_band);
    let (mut sum_g, mut sum_r) = (0u64, 0u64);
    let mut out = Vec::with_capacity(regions.len());
    for region in regions {
        let b = &region.bounding_box;
        if b.x1 >= image.width() || b.y1 >= image.height() {
            return Err(Error::Input(format!("region {} is out of bounds", region.label)));
        }
        let (mut g, mut r) = (0u64, 0u64);
        for &(x, y) in region.pixels() {
            let p = image.pixel(x as usize, y as usize);
            g += p[gc] as u64;
            r += p[rc] as u64;
        }
        sum_g += g;
        sum_r += r;
        let n = region.pixel_count as f64;
        let (mean_green, mean_red) = (g as f64 / n, r as f64 / n);
        let (class, dim) = Viability::classify(mean_green, mean_red);
        out.push(RegionViability {
            label: region.label,
            mean_green,
            mean_red,
            class,
            dim,
        });
    }
    let total = sum_g + sum_r;
    Ok(LiveDeadReport {
        regions: out,
        field_ratio: (total > 0).then(|| sum_g as f64 / total as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: usize,
    pub frame_index: usize,
    pub centroid: (f64, f64),
    pub area: f64,
    pub area_um2: Option<f64>,
    pub perimeter: f64,
    pub circularity: f64,
    pub mean_green: f64,
    pub mean_red: f64,
    pub viability: Viability,
    pub dim: bool,
    /// Field live fraction of the frame this cell belongs to.
    pub live_fraction_context: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldAnalysis {
    pub cells: Vec<CellRecord>,
    pub field_ratio: Option<f64>,
}

/// Segment, measure and score one fluorescence frame. Cell ids are the
/// region labels; use [`Tracker`] to link them across frames.
pub fn analyze_field(image: &RasterImage, cfg: &FluorConfig, frame_index: usize) -> Result<FieldAnalysis> {
    let regions = segment_bands(image, &cfg.segment_bands, cfg.min_area)?;
    cells_from_regions(image, cfg, &regions, frame_index)
}

pub fn cells_from_regions(
    image: &RasterImage,
    cfg: &FluorConfig,
    regions: &[Region],
    frame_index: usize,
) -> Result<FieldAnalysis> {
    let report = live_dead(image, &cfg.green_band, &cfg.red_band, regions)?;
    let cells = regions
        .iter()
        .zip(&report.regions)
        .map(|(region, v)| {
            let m = morphometrics(region, image.pixel_pitch());
            CellRecord {
                id: region.label as usize,
                frame_index,
                centroid: region.centroid,
                area: m.area_px,
                area_um2: m.area_um2,
                perimeter: m.perimeter_px,
                circularity: m.circularity,
                mean_green: v.mean_green,
                mean_red: v.mean_red,
                viability: v.class,
                dim: v.dim,
                live_fraction_context: report.field_ratio,
            }
        })
        .collect();
    Ok(FieldAnalysis {
        cells,
        field_ratio: report.field_ratio,
    })
}

/// Output channel `c` takes input channel `source[c]`. Need not be a
/// permutation (e.g. `[0, 0, 0]` copies red everywhere).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelMap {
    source: [usize; 3],
}

impl ChannelMap {
    pub const IDENTITY: ChannelMap = ChannelMap { source: [0, 1, 2] };

    pub fn new(source: [usize; 3]) -> Result<ChannelMap> {
        if source.iter().any(|&c| c > 2) {
            return Err(Error::Input(format!("channel map {source:?} refers to a missing channel")));
        }
        Ok(ChannelMap { source })
    }

    pub fn swap(a: usize, b: usize) -> Result<ChannelMap> {
        let mut source = [0, 1, 2];
        if a > 2 || b > 2 {
            return Err(Error::Input(format!("cannot swap channels {a} and {b}")));
        }
        source.swap(a, b);
        Ok(ChannelMap { source })
    }

    /// Parse three letters naming the source of each output channel, e.g.
    /// "GRB" swaps red and green.
    pub fn parse(text: &str) -> Result<ChannelMap> {
        let letters: Vec<char> = text.trim().chars().collect();
        if letters.len() != 3 {
            return Err(Error::Input(format!("channel map '{text}' must have three letters")));
        }
        let mut source = [0; 3];
        for (slot, ch) in source.iter_mut().zip(letters) {
            *slot = match ch.to_ascii_uppercase() {
                'R' => 0,
                'G' => 1,
                'B' => 2,
                _ => return Err(Error::Input(format!("channel map '{text}': unknown channel '{ch}'"))),
            };
        }
        Ok(ChannelMap { source })
    }

    pub fn source(&self) -> [usize; 3] {
        self.source
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = [false; 3];
        self.source.iter().for_each(|&c| seen[c] = true);
        seen.iter().all(|&s| s)
    }

    pub fn inverse(&self) -> Option<ChannelMap> {
        if !self.is_permutation() {
            return None;
        }
        let mut source = [0; 3];
        for (out, &src) in self.source.iter().enumerate() {
            source[src] = out;
        }
        Some(ChannelMap { source })
    }

    fn is_even(&self) -> bool {
        let s = self.source;
        let inversions = (0..3)
            .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
            .filter(|&(i, j)| s[i] > s[j])
            .count();
        inversions % 2 == 0
    }

    /// The band that selects, in a transferred image, exactly the pixels the
    /// original band selected before transfer. Only defined for permutations.
    pub fn remap_band(&self, band: &HsvBand) -> Result<HsvBand> {
        let inv = self
            .inverse()
            .ok_or_else(|| Error::Input("only channel permutations can remap a hue band".into()))?;
        // hue that pure red lands on after transfer
        let red_to = 120.0 * inv.source[0] as f64;
        let (lo, hi) = if self.is_even() {
            (band.hue_lo + red_to, band.hue_hi + red_to)
        } else {
            // Reflection turns [lo, hi) into (c - hi, c - lo]. Rational hues
            // with integer bounds never fall strictly within 1e-6 of a bound.
            const NUDGE: f64 = 1e-6;
            (red_to - band.hue_hi + NUDGE, red_to - band.hue_lo + NUDGE)
        };
        HsvBand::new(
            lo.rem_euclid(360.0),
            hi.rem_euclid(360.0),
            band.min_saturation,
            band.min_value,
        )
    }
}

pub fn transfer_channel(image: &RasterImage, map: &ChannelMap) -> Result<RasterImage> {
    ensure_rgb(image, "channel transfer")?;
    if *map == ChannelMap::IDENTITY {
        return Ok(image.clone());
    }
    let s = map.source;
    let mut out = image.clone();
    for (dst, src) in out.pixels_mut().chunks_exact_mut(3).zip(image.pixels().chunks_exact(3)) {
        dst[0] = src[s[0]];
        dst[1] = src[s[1]];
        dst[2] = src[s[2]];
    }
    Ok(out)
}

/// Links cells across frames by nearest centroid. A track that finds no
/// match in a frame ends; later cells near it start new tracks.
#[derive(Debug, Clone)]
pub struct Tracker {
    radius: f64,
    next_id: usize,
    active: Vec<(usize, (f64, f64))>,
}

impl Tracker {
    pub fn new(radius: f64) -> Tracker {
        Tracker {
            radius,
            next_id: 1,
            active: Vec::new(),
        }
    }

    /// Track ids for this frame's centroids, in input order.
    pub fn assign(&mut self, centroids: &[(f64, f64)]) -> Vec<usize> {
        let mut pairs = Vec::new();
        for (ti, &(_, tc)) in self.active.iter().enumerate() {
            for (ci, &c) in centroids.iter().enumerate() {
                let d = ((c.0 - tc.0).powi(2) + (c.1 - tc.1).powi(2)).sqrt();
                if d <= self.radius {
                    pairs.push((d, ti, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut ids = vec![None; centroids.len()];
        let mut used = vec![false; self.active.len()];
        for (_, ti, ci) in pairs {
            if !used[ti] && ids[ci].is_none() {
                used[ti] = true;
                ids[ci] = Some(self.active[ti].0);
            }
        }
        let ids: Vec<usize> = ids
            .into_iter()
            .map(|id| {
                id.unwrap_or_else(|| {
                    self.next_id += 1;
                    self.next_id - 1
                })
            })
            .collect();
        self.active = ids.iter().copied().zip(centroids.iter().copied()).collect();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame_index: usize,
    pub centroid: (f64, f64),
    pub area: f64,
    pub perimeter: f64,
    pub circularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSeries {
    pub id: usize,
    pub points: Vec<TrackPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeseries {
    pub cell_counts: Vec<usize>,
    pub series: Vec<CellSeries>,
}

/// Per-frame segmentation and morphometrics on pre-aligned frames, with cells
/// linked by nearest centroid within `DEFAULT_TRACK_RADIUS`.
pub fn region_timeseries(frames: &[RasterImage], band: &HsvBand, min_area: usize) -> Result<Timeseries> {
    timeseries_with_radius(frames, std::slice::from_ref(band), min_area, DEFAULT_TRACK_RADIUS)
}

pub fn timeseries_with_radius(
    frames: &[RasterImage],
    bands: &[HsvBand],
    min_area: usize,
    radius: f64,
) -> Result<Timeseries> {
    let work = |(i, f): (usize, &RasterImage)| -> Result<Vec<TrackPoint>> {
        Ok(segment_bands(f, bands, min_area)?
            .iter()
            .map(|r| {
                let m = morphometrics(r, None);
                TrackPoint {
                    frame_index: i,
                    centroid: r.centroid,
                    area: m.area_px,
                    perimeter: m.perimeter_px,
                    circularity: m.circularity,
                }
            })
            .collect())
    };
    #[cfg(feature = "parallel")]
    let per_frame: Vec<Result<Vec<TrackPoint>>> = {
        use rayon::prelude::*;
        frames.par_iter().enumerate().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_frame: Vec<Result<Vec<TrackPoint>>> = frames.iter().enumerate().map(work).collect();

    let mut tracker = Tracker::new(radius);
    let mut series: BTreeMap<usize, Vec<TrackPoint>> = BTreeMap::new();
    let mut cell_counts = Vec::with_capacity(frames.len());
    for points in per_frame {
        let points = points?;
        cell_counts.push(points.len());
        let centroids: Vec<_> = points.iter().map(|p| p.centroid).collect();
        for (id, p) in tracker.assign(&centroids).into_iter().zip(points) {
            series.entry(id).or_default().push(p);
        }
    }
    Ok(Timeseries {
        cell_counts,
        series: series.into_iter().map(|(id, points)| CellSeries { id, points }).collect(),
    })
}

/// Decode a label id from a label-map pixel: the gray value, or for RGB maps
/// a 16-bit id with red as the high byte and green as the low byte.
fn label_at(px: &[u8]) -> u32 {
    match px.len() {
        1 => px[0] as u32,
        _ => ((px[0] as u32) << 8) | px[1] as u32,
    }
}

/// One region per distinct nonzero label, in ascending label order, with
/// intensities measured on `source`.
pub fn import_labels(label_map: &RasterImage, source: &RasterImage) -> Result<Vec<Region>> {
    if label_map.dims() != source.dims() {
        return Err(Error::Input(format!(
            "label map is {:?} but the source image is {:?}",
            label_map.dims(),
            source.dims()
        )));
    }
    let (w, _) = label_map.dims();
    let mut groups: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    for (i, px) in label_map.pixels().chunks_exact(label_map.channels()).enumerate() {
        let label = label_at(px);
        if label != 0 {
            groups.entry(label).or_default().push(((i % w) as u32, (i / w) as u32));
        }
    }
    groups
        .into_iter()
        .map(|(label, pixels)| {
            let mut r = Region::from_pixels(label, pixels)?;
            r.measure_intensity(source)?;
            Ok(r)
        })
        .collect()
}

/// Encode labels into an RGB label map: red holds the high byte, green the
/// low byte, blue is zero.
pub fn encode_labels(width: usize, height: usize, regions: &[Region]) -> Result<RasterImage> {
    let mut out = RasterImage::filled(width, height, &[0, 0, 0])?;
    for r in regions {
        if r.label > u16::MAX as u32 {
            return Err(Error::Input(format!("label {} does not fit in 16 bits", r.label)));
        }
        for &(x, y) in r.pixels() {
            if (x as usize) < width && (y as usize) < height {
                out.set_sample(x as usize, y as usize, 0, (r.label >> 8) as u8);
                out.set_sample(x as usize, y as usize, 1, (r.label & 0xff) as u8);
            }
        }
    }
    Ok(out)
}
