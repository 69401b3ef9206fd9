//! Browser bindings: synthetic scenes, droplet detection, painted-shape
//! circularity and fluorescence channel transfer.
//!
//! Images cross the boundary as RGBA bytes straight from a canvas
//! `ImageData`; results come back as flat `Float64Array` rows.

use icell::brightfield::{droplet_metrics, segment_droplets, subtract_background, BackgroundModel, SegmentationConfig};
use icell::fluor::{analyze_field, transfer_channel, ChannelMap, FluorConfig, Viability};
use icell::synth::{render_brightfield, render_fluorescence, CellShape, CellSpec, DropletSpec, SceneSpec};
use icell::{label_components, BinaryMask, Connectivity, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

pub const WIDTH: usize = 480;
pub const HEIGHT: usize = 360;

fn js(e: icell::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn from_rgba(rgba: &[u8], width: usize, height: usize) -> Result<RasterImage, JsError> {
    if rgba.len() != width * height * 4 {
        return Err(JsError::new(&format!("expected {} RGBA bytes for {width}x{height}, got {}", width * height * 4, rgba.len())));
    }
    let rgb = rgba.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
    RasterImage::new(width, height, 3, rgb).map_err(js)
}

fn to_rgba(image: &RasterImage) -> Vec<u8> {
    let rgb = image.to_rgb();
    rgb.pixels().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Circles that fit the field without touching each other.
fn scatter(rng: &mut ChaCha8Rng, n: usize, r_lo: f64, r_hi: f64) -> Vec<(f64, f64, f64)> {
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    for _ in 0..n * 200 {
        if placed.len() == n {
            break;
        }
        let r = rng.gen_range(r_lo..r_hi);
        let x = rng.gen_range(r + 6.0..WIDTH as f64 - r - 6.0);
        let y = rng.gen_range(r + 6.0..HEIGHT as f64 - r - 6.0);
        if placed.iter().all(|&(px, py, pr)| (px - x).hypot(py - y) > pr + r + 10.0) {
            placed.push((x, y, r));
        }
    }
    placed
}

/// Bright-field field of view with `count` droplets, as RGBA.
#[wasm_bindgen]
pub fn brightfield_scene(seed: u32, count: u32, noise: f64) -> Result<Vec<u8>, JsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut spec = SceneSpec::blank(WIDTH, HEIGHT);
    spec.background_texture = 5.0;
    spec.noise_sigma = noise.clamp(0.0, 30.0);
    spec.speckles = 12;
    spec.seed = seed as u64;
    spec.droplets = scatter(&mut rng, count as usize, 18.0, 60.0)
        .into_iter()
        .map(|(x, y, r)| DropletSpec {
            center: [x, y],
            diameter: 2.0 * r,
            concentrations: vec![],
            rim_darkness: 0.6,
            rim_width: 4.0,
        })
        .collect();
    let (img, _) = render_brightfield(&spec).map_err(js)?;
    Ok(to_rgba(&img))
}

/// Fluorescence field with `live` green and `dead` red cells, as RGBA.
#[wasm_bindgen]
pub fn fluorescence_scene(seed: u32, live: u32, dead: u32) -> Result<Vec<u8>, JsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut spec = SceneSpec::blank(WIDTH, HEIGHT);
    spec.background = [4, 4, 6];
    spec.noise_sigma = 3.0;
    spec.seed = seed as u64;
    let spots = scatter(&mut rng, (live + dead) as usize, 10.0, 24.0);
    spec.cells = spots
        .into_iter()
        .enumerate()
        .map(|(i, (x, y, r))| CellSpec {
            center: [x, y],
            radius: r,
            shape: CellShape::Disk,
            color: if i < live as usize { [20, 220, 40] } else { [220, 30, 20] },
            intensity: 1.0,
        })
        .collect();
    let (img, _) = render_fluorescence(&spec).map_err(js)?;
    Ok(to_rgba(&img))
}

/// Detect droplets against the frame's median background.
///
/// Returns rows of `[cx, cy, diameter_px, circularity]`.
#[wasm_bindgen]
pub fn detect_droplets(rgba: &[u8], width: usize, height: usize) -> Result<Vec<f64>, JsError> {
    let img = from_rgba(rgba, width, height)?;
    let bg = BackgroundModel {
        mean_image: RasterImage::filled(width, height, &img.channel_medians()).map_err(js)?,
        frame_count: 1,
    };
    let diff = subtract_background(&img, &bg).map_err(js)?;
    let regions = segment_droplets(&diff, &SegmentationConfig::default()).map_err(js)?;
    Ok(droplet_metrics(&regions, None)
        .iter()
        .flat_map(|d| [d.centroid.0, d.centroid.1, d.diameter_px, d.circularity])
        .collect())
}

/// Measure painted blobs: any nonzero byte in `mask` is foreground.
///
/// Returns rows of `[cx, cy, area, perimeter, circularity]`.
#[wasm_bindgen]
pub fn shape_metrics(mask: &[u8], width: usize, height: usize) -> Result<Vec<f64>, JsError> {
    if mask.len() != width * height {
        return Err(JsError::new("mask size does not match width x height"));
    }
    let mask = BinaryMask::from_bits(width, height, mask.iter().map(|&v| v != 0).collect()).map_err(js)?;
    Ok(label_components(&mask, Connectivity::Eight)
        .iter()
        .flat_map(|r| [r.centroid.0, r.centroid.1, r.area(), r.perimeter, r.circularity()])
        .collect())
}

/// Remap channels, e.g. "GRB" swaps red and green. Returns RGBA.
#[wasm_bindgen]
pub fn transfer_channels(rgba: &[u8], width: usize, height: usize, map: &str) -> Result<Vec<u8>, JsError> {
    let img = from_rgba(rgba, width, height)?;
    let map = ChannelMap::parse(map).map_err(js)?;
    Ok(to_rgba(&transfer_channel(&img, &map).map_err(js)?))
}

/// Score cells with the default green/red bands.
///
/// Returns `[live, dead, ambiguous, field_ratio]`, the ratio NaN when no
/// cell carries signal, followed by rows of `[cx, cy, circularity, class]`
/// with class 0 live, 1 dead, 2 ambiguous.
#[wasm_bindgen]
pub fn live_dead(rgba: &[u8], width: usize, height: usize) -> Result<Vec<f64>, JsError> {
    let img = from_rgba(rgba, width, height)?;
    let field = analyze_field(&img, &FluorConfig::default(), 0).map_err(js)?;
    let class = |v: Viability| match v {
        Viability::Live => 0.0,
        Viability::Dead => 1.0,
        Viability::Ambiguous => 2.0,
    };
    let count = |v: Viability| field.cells.iter().filter(|c| c.viability == v).count() as f64;
    let mut out = vec![
        count(Viability::Live),
        count(Viability::Dead),
        count(Viability::Ambiguous),
        field.field_ratio.unwrap_or(f64::NAN),
    ];
    for c in &field.cells {
        out.extend([c.centroid.0, c.centroid.1, c.circularity, class(c.viability)]);
    }
    Ok(out)
}
