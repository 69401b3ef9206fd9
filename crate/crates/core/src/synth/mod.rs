//! Synthetic scene renderer with analytic ground truth.
//!
//! Scenes stand in for the microscope: bright-field frames show dark-rimmed
//! droplets whose interiors are tinted by a Beer–Lambert dye mixture, and
//! fluorescence frames show colored cells on a dark field. Every quantity in
//! [`GroundTruth`] comes from the scene description, never from pixels.

mod shapes;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluor::{rgb_to_hsv, HsvBand};
use crate::raster::RasterImage;

pub use shapes::{ellipse_perimeter, polygon_area, CellShape, Outline, BLEB_AMPLITUDE, BLEB_LOBES};

const SUPERSAMPLE: usize = 4;
/// Speckles are drawn at this fraction of the local background.
const SPECKLE_LEVEL: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Per-channel background level.
    #[serde(default = "default_background")]
    pub background: [u8; 3],
    /// Amplitude (gray levels) of a smooth sinusoidal background texture.
    #[serde(default)]
    pub background_texture: f64,
    #[serde(default)]
    pub dyes: Vec<DyeSpec>,
    #[serde(default)]
    pub droplets: Vec<DropletSpec>,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    /// Number of small dark debris squares (1–4 px side) scattered in free space.
    #[serde(default)]
    pub speckles: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "one")]
    pub exposure_gain: f64,
    /// Frames after the first get gain `exposure_gain * (1 + u)`, `u` uniform in ±jitter.
    #[serde(default)]
    pub gain_jitter: f64,
    /// Content displacement added per frame, (dx, dy) px.
    #[serde(default)]
    pub frame_shift: [f64; 2],
    /// Growth of every bleb stage per frame.
    #[serde(default)]
    pub bleb_growth_per_frame: f64,
    #[serde(default)]
    pub pixel_pitch: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_background() -> [u8; 3] {
    [220, 220, 220]
}

fn one() -> f64 {
    1.0
}

fn default_rim_darkness() -> f64 {
    0.6
}

fn default_rim_width() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyeSpec {
    pub name: String,
    /// Absorbance direction; normalized before use.
    pub od_vector: [f64; 3],
}

impl DyeSpec {
    pub fn unit_vector(&self) -> [f64; 3] {
        let n = self.od_vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.od_vector.map(|v| v / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropletSpec {
    pub center: [f64; 2],
    pub diameter: f64,
    /// Optical-density concentration per scene dye (missing entries are 0).
    #[serde(default)]
    pub concentrations: Vec<f64>,
    /// Fraction of light lost in the refractive rim.
    #[serde(default = "default_rim_darkness")]
    pub rim_darkness: f64,
    #[serde(default = "default_rim_width")]
    pub rim_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_shape")]
    pub shape: CellShape,
    pub color: [u8; 3],
    #[serde(default = "one")]
    pub intensity: f64,
}

fn default_shape() -> CellShape {
    CellShape::Disk
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Brightfield,
    Fluorescence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorClass {
    Green,
    Red,
    Other,
}

impl ColorClass {
    pub fn of(color: [u8; 3]) -> ColorClass {
        let (h, s, _) = rgb_to_hsv(color);
        if s == 0.0 {
            ColorClass::Other
        } else if HsvBand::green().contains_hue(h) {
            ColorClass::Green
        } else if HsvBand::red().contains_hue(h) {
            ColorClass::Red
        } else {
            ColorClass::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropletTruth {
    pub center: [f64; 2],
    pub diameter: f64,
    pub area: f64,
    pub perimeter: f64,
    /// Fraction per scene dye; all zero for undyed droplets.
    pub dye_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub center: [f64; 2],
    pub area: f64,
    pub perimeter: f64,
    pub circularity: f64,
    pub color_class: ColorClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeckleTruth {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub index: usize,
    /// Content displacement applied to this frame.
    pub shift: [f64; 2],
    pub gain: f64,
    /// Cells as they appear in this frame (centers include the shift).
    pub cells: Vec<CellTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub dye_names: Vec<String>,
    pub droplets: Vec<DropletTruth>,
    pub cells: Vec<CellTruth>,
    pub speckles: Vec<SpeckleTruth>,
    pub frames: Vec<FrameTruth>,
}

impl SceneSpec {
    pub fn blank(width: usize, height: usize) -> SceneSpec {
        SceneSpec {
            width,
            height,
            background: default_background(),
            background_texture: 0.0,
            dyes: Vec::new(),
            droplets: Vec::new(),
            cells: Vec::new(),
            speckles: 0,
            noise_sigma: 0.0,
            exposure_gain: 1.0,
            gain_jitter: 0.0,
            frame_shift: [0.0, 0.0],
            bleb_growth_per_frame: 0.0,
            pixel_pitch: None,
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<SceneSpec> {
        toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene specs always serialize")
    }

    fn cell_outline(&self, cell: &CellSpec, frame: usize) -> Outline {
        match cell.shape {
            CellShape::Bleb { t } => CellShape::Bleb {
                t: t + self.bleb_growth_per_frame * frame as f64,
            }
            .outline(cell.radius),
            other => other.outline(cell.radius),
        }
    }

    /// Check the scene for `n_frames` frames of drift.
    pub fn validate(&self, n_frames: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Spec("canvas must be at least 1x1".into()));
        }
        if n_frames == 0 {
            return Err(Error::Spec("need at least one frame".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Spec("noise_sigma must be >= 0".into()));
        }
        if !(self.exposure_gain > 0.0) {
            return Err(Error::Spec("exposure_gain must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.gain_jitter) {
            return Err(Error::Spec("gain_jitter must lie in [0, 1)".into()));
        }
        if let Some(p) = self.pixel_pitch {
            if !(p > 0.0) {
                return Err(Error::Spec("pixel_pitch must be > 0".into()));
            }
        }
        if self.dyes.len() > 3 {
            return Err(Error::Spec("at most 3 dyes".into()));
        }
        for d in &self.dyes {
            if d.od_vector.iter().any(|v| *v < 0.0) || d.od_vector.iter().all(|v| *v == 0.0) {
                return Err(Error::Spec(format!(
                    "dye {} needs a non-negative, non-zero od_vector",
                    d.name
                )));
            }
        }
        let last = (n_frames - 1) as f64;
        let drift = [
            (self.frame_shift[0] * last).abs(),
            (self.frame_shift[1] * last).abs(),
        ];
        let inside = |c: [f64; 2], extent: f64, what: &str| -> Result<()> {
            let fits = c[0] - extent - drift[0] >= 0.5
                && c[1] - extent - drift[1] >= 0.5
                && c[0] + extent + drift[0] <= self.width as f64 - 1.5
                && c[1] + extent + drift[1] <= self.height as f64 - 1.5;
            if fits {
                Ok(())
            } else {
                Err(Error::Spec(format!(
                    "{what} at ({:.1}, {:.1}) does not stay inside the {}x{} canvas",
                    c[0], c[1], self.width, self.height
                )))
            }
        };
        for (i, d) in self.droplets.iter().enumerate() {
            if !(d.diameter > 0.0) || !(d.rim_width >= 0.0) || !(0.0..=1.0).contains(&d.rim_darkness) {
                return Err(Error::Spec(format!("droplet {i} has invalid geometry")));
            }
            if d.concentrations.len() > self.dyes.len() || d.concentrations.iter().any(|c| *c < 0.0) {
                return Err(Error::Spec(format!(
                    "droplet {i}: concentrations must be >= 0, one per dye"
                )));
            }
            inside(d.center, d.diameter / 2.0, "droplet")?;
            for (j, e) in self.droplets.iter().enumerate().skip(i + 1) {
                let dist = ((d.center[0] - e.center[0]).powi(2) + (d.center[1] - e.center[1]).powi(2)).sqrt();
                if dist < (d.diameter + e.diameter) / 2.0 + 2.0 {
                    return Err(Error::Spec(format!("droplets {i} and {j} overlap")));
                }
            }
        }
        for (i, c) in self.cells.iter().enumerate() {
            if !(c.radius > 0.0) || !(c.intensity > 0.0) {
                return Err(Error::Spec(format!("cell {i} needs positive radius and intensity")));
            }
            if let CellShape::Star { points, inner_radius } = c.shape {
                if points < 3 || !(inner_radius > 0.0 && inner_radius < c.radius) {
                    return Err(Error::Spec(format!("cell {i}: invalid star")));
                }
            }
            if let CellShape::Ellipse { a, b } = c.shape {
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::Spec(format!("cell {i}: invalid ellipse")));
                }
            }
            let extent_i = (0..n_frames)
                .map(|f| self.cell_outline(c, f).extent())
                .fold(0.0, f64::max);
            inside(c.center, extent_i, "cell")?;
            for (j, o) in self.cells.iter().enumerate().skip(i + 1) {
                let extent_j = (0..n_frames)
                    .map(|f| self.cell_outline(o, f).extent())
                    .fold(0.0, f64::max);
                let dist = ((c.center[0] - o.center[0]).powi(2) + (c.center[1] - o.center[1]).powi(2)).sqrt();
                if dist < extent_i + extent_j + 2.0 {
                    return Err(Error::Spec(format!("cells {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    fn droplet_truths(&self) -> Vec<DropletTruth> {
        self.droplets
            .iter()
            .map(|d| {
                let r = d.diameter / 2.0;
                let mut conc = d.concentrations.clone();
                conc.resize(self.dyes.len(), 0.0);
                let total: f64 = conc.iter().sum();
                DropletTruth {
                    center: d.center,
                    diameter: d.diameter,
                    area: std::f64::consts::PI * r * r,
                    perimeter: std::f64::consts::PI * d.diameter,
                    dye_fractions: conc
                        .iter()
                        .map(|c| if total > 0.0 { c / total } else { 0.0 })
                        .collect(),
                }
            })
            .collect()
    }

    fn cell_truths(&self, frame: usize, shift: [f64; 2]) -> Vec<CellTruth> {
        self.cells
            .iter()
            .map(|c| {
                let o = self.cell_outline(c, frame);
                CellTruth {
                    center: [c.center[0] + shift[0], c.center[1] + shift[1]],
                    area: o.area(),
                    perimeter: o.perimeter(),
                    circularity: o.circularity(),
                    color_class: ColorClass::of(c.color),
                }
            })
            .collect()
    }

    fn background_at(&self, x: f64, y: f64, c: usize) -> f64 {
        let base = self.background[c] as f64;
        if self.background_texture == 0.0 {
            return base;
        }
        let tau = std::f64::consts::TAU;
        base + self.background_texture
            * 0.5
            * ((tau * x / 97.0).sin() + (tau * y / 131.0 + 0.7 * c as f64).cos())
    }

    /// Beer–Lambert transmitted intensity of a dye mixture over white `i0`.
    pub fn dye_transmission(&self, concentrations: &[f64], i0: [f64; 3]) -> [f64; 3] {
        let mut od = [0.0; 3];
        for (dye, &c) in self.dyes.iter().zip(concentrations) {
            let v = dye.unit_vector();
            for k in 0..3 {
                od[k] += c * v[k];
            }
        }
        [0, 1, 2].map(|k| i0[k] * 10f64.powf(-od[k]))
    }

    fn place_speckles(&self) -> Vec<SpeckleTruth> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_5eed_5eed_5eed);
        let mut out: Vec<SpeckleTruth> = Vec::new();
        let mut attempts = 0;
        while out.len() < self.speckles && attempts < 100_000 {
            attempts += 1;
            let size = rng.gen_range(1..=4usize);
            if self.width < size + 8 || self.height < size + 8 {
                break;
            }
            let x = rng.gen_range(4..self.width - size - 4);
            let y = rng.gen_range(4..self.height - size - 4);
            let (cx, cy) = (x as f64 + size as f64 / 2.0, y as f64 + size as f64 / 2.0);
            let clear_of_droplets = self.droplets.iter().all(|d| {
                let dist = ((cx - d.center[0]).powi(2) + (cy - d.center[1]).powi(2)).sqrt();
                dist > d.diameter / 2.0 + 12.0
            });
            let clear_of_cells = self.cells.iter().all(|c| {
                let dist = ((cx - c.center[0]).powi(2) + (cy - c.center[1]).powi(2)).sqrt();
                dist > c.radius * (1.0 + BLEB_AMPLITUDE) + 12.0
            });
            let clear_of_speckles = out.iter().all(|s| {
                x + size + 6 < s.x || s.x + s.size + 6 < x || y + size + 6 < s.y || s.y + s.size + 6 < y
            });
            if clear_of_droplets && clear_of_cells && clear_of_speckles {
                out.push(SpeckleTruth { x, y, size });
            }
        }
        out
    }

    /// Noise-free, unit-gain float render (w*h*3) of the static scene at `frame`'s morph stage.
    fn render_float(&self, modality: Modality, frame: usize, speckles: &[SpeckleTruth]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let mut buf = vec![0.0f64; w * h * 3];
        match modality {
            Modality::Brightfield => {
                for y in 0..h {
                    for x in 0..w {
                        for c in 0..3 {
                            buf[(y * w + x) * 3 + c] = self.background_at(x as f64, y as f64, c);
                        }
                    }
                }
                for d in &self.droplets {
                    self.draw_droplet(&mut buf, d);
                }
                for s in speckles {
                    for y in s.y..s.y + s.size {
                        for x in s.x..s.x + s.size {
                            for c in 0..3 {
                                buf[(y * w + x) * 3 + c] *= SPECKLE_LEVEL;
                            }
                        }
                    }
                }
            }
            Modality::Fluorescence => {
                for px in buf.chunks_exact_mut(3) {
                    for c in 0..3 {
                        px[c] = self.background[c] as f64;
                    }
                }
                for cell in &self.cells {
                    let outline = self.cell_outline(cell, frame);
                    let color = cell.color.map(|v| v as f64 * cell.intensity);
                    self.draw_coverage(&mut buf, cell.center, outline.extent(), |dx, dy| {
                        outline.contains(dx, dy)
                    }, |px, coverage| {
                        for c in 0..3 {
                            px[c] = (px[c] + color[c] * coverage).min(255.0);
                        }
                    });
                }
            }
        }
        buf
    }

    fn draw_droplet(&self, buf: &mut [f64], d: &DropletSpec) {
        let r = d.diameter / 2.0;
        let r_in = (r - d.rim_width).max(0.0);
        let (w, h) = (self.width, self.height);
        let x0 = (d.center[0] - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((d.center[0] + r + 1.0).ceil() as usize).min(w - 1);
        let y0 = (d.center[1] - r - 1.0).floor().max(0.0) as usize;
        let y1 = ((d.center[1] + r + 1.0).ceil() as usize).min(h - 1);
        let n = SUPERSAMPLE * SUPERSAMPLE;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i0 = [0, 1, 2].map(|c| self.background_at(x as f64, y as f64, c));
                let interior = self.dye_transmission(&d.concentrations, i0);
                let mut acc = [0.0; 3];
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        let rho = ((px - d.center[0]).powi(2) + (py - d.center[1]).powi(2)).sqrt();
                        for c in 0..3 {
                            acc[c] += if rho > r {
                                i0[c]
                            } else if rho > r_in {
                                i0[c] * (1.0 - d.rim_darkness)
                            } else {
                                interior[c]
                            };
                        }
                    }
                }
                for c in 0..3 {
                    buf[(y * w + x) * 3 + c] = acc[c] / n as f64;
                }
            }
        }
    }

    fn draw_coverage(
        &self,
        buf: &mut [f64],
        center: [f64; 2],
        extent: f64,
        inside: impl Fn(f64, f64) -> bool,
        mut paint: impl FnMut(&mut [f64], f64),
    ) {
        let (w, h) = (self.width, self.height);
        let x0 = (center[0] - extent - 1.0).floor().max(0.0) as usize;
        let x1 = ((center[0] + extent + 1.0).ceil() as usize).min(w - 1);
        let y0 = (center[1] - extent - 1.0).floor().max(0.0) as usize;
        let y1 = ((center[1] + extent + 1.0).ceil() as usize).min(h - 1);
        let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let mut hits = 0usize;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        if inside(px - center[0], py - center[1]) {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    let i = (y * w + x) * 3;
                    paint(&mut buf[i..i + 3], hits as f64 / n);
                }
            }
        }
    }

    fn fill_value(&self, modality: Modality, c: usize) -> f64 {
        match modality {
            Modality::Brightfield | Modality::Fluorescence => self.background[c] as f64,
        }
    }
}

/// Bilinear resample so that content moves by `shift`; uncovered area gets `fill`.
fn shift_float(src: &[f64], w: usize, h: usize, shift: [f64; 2], fill: [f64; 3]) -> Vec<f64> {
    if shift == [0.0, 0.0] {
        return src.to_vec();
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let sx = x as f64 - shift[0];
            let sy = y as f64 - shift[1];
            let o = (y * w + x) * 3;
            if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                out[o..o + 3].copy_from_slice(&fill);
                continue;
            }
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..3 {
                let v00 = src[(y0 * w + x0) * 3 + c];
                let v10 = src[(y0 * w + x1) * 3 + c];
                let v01 = src[(y1 * w + x0) * 3 + c];
                let v11 = src[(y1 * w + x1) * 3 + c];
                out[o + c] = (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy;
            }
        }
    }
    out
}

fn quantize(spec: &SceneSpec, buf: &[f64], gain: f64, frame: usize) -> Result<RasterImage> {
    let pixels: Vec<u8> = if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add((frame as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        buf.iter()
            .map(|&v| (v * gain + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
            .collect()
    } else {
        buf.iter()
            .map(|&v| (v * gain).round().clamp(0.0, 255.0) as u8)
            .collect()
    };
    RasterImage::new(spec.width, spec.height, 3, pixels)?.with_pixel_pitch(spec.pixel_pitch)
}

/// Render `n_frames` frames: frame `i` shows the scene displaced by
/// `i * frame_shift`, scaled by its exposure gain, plus seeded Gaussian noise.
pub fn render_sequence(
    spec: &SceneSpec,
    modality: Modality,
    n_frames: usize,
) -> Result<(Vec<RasterImage>, GroundTruth)> {
    spec.validate(n_frames)?;
    let speckles = spec.place_speckles();
    let mut gain_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6a1e_6a1e_6a1e_6a1e);
    let fill = [0, 1, 2].map(|c| spec.fill_value(modality, c));
    let morphing = spec.bleb_growth_per_frame != 0.0;
    let static_render = spec.render_float(modality, 0, &speckles);
    let mut frames = Vec::with_capacity(n_frames);
    let mut frame_truth = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let shift = [spec.frame_shift[0] * i as f64, spec.frame_shift[1] * i as f64];
        let gain = if i == 0 {
            spec.exposure_gain
        } else {
            spec.exposure_gain * (1.0 + spec.gain_jitter * gain_rng.gen_range(-1.0..=1.0))
        };
        let moved = if morphing && i > 0 {
            let buf = spec.render_float(modality, i, &speckles);
            shift_float(&buf, spec.width, spec.height, shift, fill)
        } else {
            shift_float(&static_render, spec.width, spec.height, shift, fill)
        };
        frames.push(quantize(spec, &moved, gain, i)?);
        frame_truth.push(FrameTruth {
            index: i,
            shift,
            gain,
            cells: spec.cell_truths(i, shift),
        });
    }
    let truth = GroundTruth {
        seed: spec.seed,
        dye_names: spec.dyes.iter().map(|d| d.name.clone()).collect(),
        droplets: spec.droplet_truths(),
        cells: spec.cell_truths(0, [0.0, 0.0]),
        speckles,
        frames: frame_truth,
    };
    Ok((frames, truth))
}

pub fn render_brightfield(spec: &SceneSpec) -> Result<(RasterImage, GroundTruth)> {
    let (mut frames, truth) = render_sequence(spec, Modality::Brightfield, 1)?;
    Ok((frames.remove(0), truth))
}

pub fn render_fluorescence(spec: &SceneSpec) -> Result<(RasterImage, GroundTruth)> {
    let (mut frames, truth) = render_sequence(spec, Modality::Fluorescence, 1)?;
    Ok((frames.remove(0), truth))
}

/// Background-only frame for a bright-field scene (no droplets, no speckles).
pub fn render_background(spec: &SceneSpec) -> Result<RasterImage> {
    let mut empty = spec.clone();
    empty.droplets.clear();
    empty.speckles = 0;
    render_brightfield(&empty).map(|(img, _)| img)
}
