//! Connected-component labeling, boundary tracing and the circularity measure.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage};

/// Maximum distance (px) a traced boundary point may sit from the chord that
/// replaces it. A pixel corner deviates by 1/sqrt(2) from the chord that would
/// cut it, so corners of axis-aligned shapes survive simplification.
const CHORD_TOLERANCE: f64 = 0.65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x <= self.x1 as f64 && y >= self.y0 as f64 && y <= self.y1 as f64
    }
}

/// One connected segmented object.
///
/// Pixel `(x, y)` has its center at continuous coordinate `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: u32,
    pub pixel_count: usize,
    pub perimeter: f64,
    pub centroid: (f64, f64),
    pub bounding_box: BoundingBox,
    /// Per-channel means over member pixels; empty until measured against an image.
    pub mean_intensity: Vec<f64>,
    pixels: Vec<(u32, u32)>,
}

impl Region {
    /// Build a region from its member pixels, tracing its outer boundary.
    pub fn from_pixels(label: u32, pixels: Vec<(u32, u32)>) -> Result<Region> {
        if pixels.is_empty() {
            return Err(Error::Input("region must contain at least one pixel".into()));
        }
        let mut region = Region::summarize(label, pixels);
        region.perimeter = trace_contour(&region).perimeter;
        Ok(region)
    }

    fn summarize(label: u32, pixels: Vec<(u32, u32)>) -> Region {
        let (mut sx, mut sy) = (0.0, 0.0);
        let mut bb = BoundingBox {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        for &(x, y) in &pixels {
            sx += x as f64;
            sy += y as f64;
            bb.x0 = bb.x0.min(x as usize);
            bb.y0 = bb.y0.min(y as usize);
            bb.x1 = bb.x1.max(x as usize);
            bb.y1 = bb.y1.max(y as usize);
        }
        let n = pixels.len() as f64;
        Region {
            label,
            pixel_count: pixels.len(),
            perimeter: 0.0,
            centroid: (sx / n, sy / n),
            bounding_box: bb,
            mean_intensity: Vec::new(),
            pixels,
        }
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn area(&self) -> f64 {
        self.pixel_count as f64
    }

    pub fn circularity(&self) -> f64 {
        // perimeter > 0 and pixel_count >= 1 by construction
        4.0 * PI * self.area() / (self.perimeter * self.perimeter)
    }

    /// Record per-channel mean intensities of `image` over the member pixels.
    pub fn measure_intensity(&mut self, image: &RasterImage) -> Result<()> {
        let b = &self.bounding_box;
        if b.x1 >= image.width() || b.y1 >= image.height() {
            return Err(Error::Input(format!(
                "region {} extends beyond the {}x{} image",
                self.label,
                image.width(),
                image.height()
            )));
        }
        let mut sums = vec![0u64; image.channels()];
        for &(x, y) in &self.pixels {
            for (s, &v) in sums.iter_mut().zip(image.pixel(x as usize, y as usize)) {
                *s += v as u64;
            }
        }
        let n = self.pixel_count as f64;
        self.mean_intensity = sums.into_iter().map(|s| s as f64 / n).collect();
        Ok(())
    }

    /// Render this region into a mask of the given size.
    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut mask = BinaryMask::new(width, height);
        for &(x, y) in &self.pixels {
            if (x as usize) < width && (y as usize) < height {
                mask.set(x as usize, y as usize, true);
            }
        }
        mask
    }
}

/// Closed boundary polygon of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Polygon vertices; the closing edge from last back to first is implicit.
    pub vertices: Vec<(f64, f64)>,
    /// Boundary length of the polygon dilated by half a pixel, i.e. the polygon
    /// length plus pi. Equals the arc length of the outline running along the
    /// outer pixel edges for straight boundaries.
    pub perimeter: f64,
}

impl Contour {
    /// Length of the undilated vertex polygon.
    pub fn polygon_length(&self) -> f64 {
        closed_length(&self.vertices)
    }
}

/// Label connected true pixels. Labels are 1..K in raster-scan order of each
/// component's first pixel.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Region> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    let mut next = 1u32;
    for start in 0..w * h {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let label = next;
        next += 1;
        labels[start] = label;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push((x as u32, y as u32));
            for_each_neighbor(x, y, w, h, connectivity, |j| {
                if bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            });
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        let mut region = Region::summarize(label, pixels);
        let inside = |x: isize, y: isize| {
            x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && labels[y as usize * w + x as usize] == label
        };
        let (sx, sy) = region.pixels[0];
        region.perimeter = contour_from(inside, (sx as isize, sy as isize)).perimeter;
        regions.push(region);
    }
    regions
}

#[inline]
fn for_each_neighbor(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    connectivity: Connectivity,
    mut f: impl FnMut(usize),
) {
    let i = y * w + x;
    if x > 0 {
        f(i - 1);
    }
    if x + 1 < w {
        f(i + 1);
    }
    if y > 0 {
        f(i - w);
    }
    if y + 1 < h {
        f(i + w);
    }
    if connectivity == Connectivity::Eight {
        if x > 0 && y > 0 {
            f(i - w - 1);
        }
        if x + 1 < w && y > 0 {
            f(i - w + 1);
        }
        if x > 0 && y + 1 < h {
            f(i + w - 1);
        }
        if x + 1 < w && y + 1 < h {
            f(i + w + 1);
        }
    }
}

/// Trace the outer boundary of a region.
///
/// Boundary pixel centers are followed with Moore-neighbor tracing, the
/// resulting chain is simplified into chords that stay within
/// [`CHORD_TOLERANCE`] of every skipped point, and the perimeter is the length
/// of that polygon dilated by half a pixel. A single-pixel region yields its
/// unit square with perimeter 4.
pub fn trace_contour(region: &Region) -> Contour {
    let b = region.bounding_box;
    let (w, h) = (b.x1 - b.x0 + 1, b.y1 - b.y0 + 1);
    let mut grid = vec![false; w * h];
    for &(x, y) in region.pixels() {
        grid[(y as usize - b.y0) * w + (x as usize - b.x0)] = true;
    }
    let inside = |x: isize, y: isize| {
        let (lx, ly) = (x - b.x0 as isize, y - b.y0 as isize);
        lx >= 0 && ly >= 0 && (lx as usize) < w && (ly as usize) < h && grid[ly as usize * w + lx as usize]
    };
    let (sx, sy) = region.pixels[0];
    contour_from(inside, (sx as isize, sy as isize))
}

// Clockwise on screen (y grows downward), starting east.
const DIRS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// `start` must be the first member pixel in raster order.
fn contour_from(inside: impl Fn(isize, isize) -> bool, start: (isize, isize)) -> Contour {
    let chain = moore_chain(&inside, start);
    if chain.len() == 1 {
        let (x, y) = (start.0 as f64, start.1 as f64);
        return Contour {
            vertices: vec![
                (x - 0.5, y - 0.5),
                (x + 0.5, y - 0.5),
                (x + 0.5, y + 0.5),
                (x - 0.5, y + 0.5),
            ],
            perimeter: 4.0,
        };
    }
    let pts: Vec<(f64, f64)> = chain.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let vertices = simplify_closed(&pts, CHORD_TOLERANCE);
    let perimeter = closed_length(&vertices) + PI;
    Contour {
        vertices,
        perimeter,
    }
}

fn moore_chain(inside: &impl Fn(isize, isize) -> bool, start: (isize, isize)) -> Vec<(isize, isize)> {
    let mut chain = vec![start];
    let mut cur = start;
    // Nothing lies west of or above the raster-order first pixel, so the
    // search may begin just clockwise of west.
    let mut search = 5;
    let mut first_move: Option<usize> = None;
    loop {
        let step = (0..8).map(|k| (search + k) % 8).find(|&d| {
            let (dx, dy) = DIRS[d];
            inside(cur.0 + dx, cur.1 + dy)
        });
        let Some(d) = step else {
            return chain;
        };
        if cur == start {
            match first_move {
                None => first_move = Some(d),
                // Back at the start leaving the same way: the loop is closed.
                Some(f) if f == d => break,
                Some(_) => {}
            }
        }
        cur = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
        chain.push(cur);
        search = (d + 5) % 8;
    }
    // The final element repeats the start.
    chain.pop();
    chain
}

/// Greedy chord simplification of a closed point chain. Each chord is
/// extended while every skipped point stays within `tol` of the chord segment.
fn simplify_closed(pts: &[(f64, f64)], tol: f64) -> Vec<(f64, f64)> {
    let n = pts.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        out.push(pts[i]);
        let mut best = i + 1;
        let mut j = i + 2;
        while j <= n {
            let a = pts[i];
            let b = pts[j % n];
            let ok = (i + 1..j).all(|k| segment_distance(pts[k], a, b) <= tol);
            if !ok {
                break;
            }
            best = j;
            j += 1;
        }
        i = best;
    }
    out
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

pub(crate) fn closed_length(v: &[(f64, f64)]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    v.iter()
        .zip(v.iter().cycle().skip(1))
        .map(|(a, b)| ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt())
        .sum()
}

/// Circularity = 4 pi area / perimeter^2. Not clamped; discretized shapes may
/// slightly exceed 1.
pub fn circularity(area: f64, perimeter: f64) -> Result<f64> {
    if !(area > 0.0) || !(perimeter > 0.0) || !area.is_finite() || !perimeter.is_finite() {
        return Err(Error::Domain(format!(
            "circularity needs positive area and perimeter, got area={area}, perimeter={perimeter}"
        )));
    }
    Ok(4.0 * PI * area / (perimeter * perimeter))
}
