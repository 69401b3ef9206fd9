//! Optical-density color deconvolution of dye mixtures.
//!
//! Each dye is a unit absorbance direction in optical-density space
//! (`OD = -log10(I / I0)`). A pixel's OD is explained as a non-negative
//! combination of dye directions, and per-droplet dye fractions are ratios of
//! summed concentrations.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage};
use crate::region::Region;

/// Minimum mean OD norm for a calibration dye.
const MIN_DYE_OD: f64 = 1e-3;
/// Minimum angle between two dye directions, degrees.
const MIN_DYE_ANGLE_DEG: f64 = 5.0;
const MAX_CONDITION: f64 = 1e3;
const MIN_CALIBRATION_PIXELS: usize = 20;
/// Below this summed concentration a droplet is reported empty.
const EMPTY_TOTAL: f64 = 1e-6;

/// OD per channel, clamped at 0; samples are floored at 1 to keep the log finite.
pub fn optical_density(sample: [f64; 3], white_point: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|c| (-(sample[c].max(1.0) / white_point[c]).log10()).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dye {
    pub name: String,
    pub od_vector: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StainBasis {
    dyes: Vec<Dye>,
    white_point: [f64; 3],
}

impl StainBasis {
    /// Vectors are normalized; the basis is rejected when dyes are too similar.
    pub fn new(dyes: Vec<Dye>, white_point: [f64; 3]) -> Result<StainBasis> {
        if dyes.is_empty() || dyes.len() > 3 {
            return Err(Error::Calibration(format!(
                "a stain basis holds 1 to 3 dyes, got {}",
                dyes.len()
            )));
        }
        if white_point.iter().any(|&w| !(1.0..=255.0).contains(&w)) {
            return Err(Error::Calibration(format!(
                "white point channels must lie in [1, 255], got {white_point:?}"
            )));
        }
        let mut normalized = Vec::with_capacity(dyes.len());
        for d in dyes {
            if d.name.is_empty() || d.name.chars().any(|c| c.is_whitespace() || c == '=' || c == ',') {
                return Err(Error::Calibration(format!("invalid dye name {:?}", d.name)));
            }
            if normalized.iter().any(|n: &Dye| n.name == d.name) {
                return Err(Error::Calibration(format!("duplicate dye {:?}", d.name)));
            }
            let n = norm(d.od_vector);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Calibration(format!("dye {} has a zero od_vector", d.name)));
            }
            normalized.push(Dye {
                name: d.name,
                od_vector: d.od_vector.map(|v| v / n),
            });
        }
        for i in 0..normalized.len() {
            for j in i + 1..normalized.len() {
                let cos = dot(normalized[i].od_vector, normalized[j].od_vector).clamp(-1.0, 1.0);
                let angle = cos.acos().to_degrees();
                if angle < MIN_DYE_ANGLE_DEG {
                    return Err(Error::Calibration(format!(
                        "dyes {} and {} are nearly collinear ({angle:.2} deg apart)",
                        normalized[i].name, normalized[j].name
                    )));
                }
            }
        }
        let basis = StainBasis {
            dyes: normalized,
            white_point,
        };
        let cond = basis.condition_number();
        if !(cond < MAX_CONDITION) {
            return Err(Error::Calibration(format!(
                "stain matrix is ill-conditioned (condition number {cond:.1})"
            )));
        }
        Ok(basis)
    }

    pub fn dyes(&self) -> &[Dye] {
        &self.dyes
    }

    pub fn dye_names(&self) -> Vec<String> {
        self.dyes.iter().map(|d| d.name.clone()).collect()
    }

    pub fn white_point(&self) -> [f64; 3] {
        self.white_point
    }

    /// Ratio of extreme singular values of the 3 x k stain matrix.
    pub fn condition_number(&self) -> f64 {
        let k = self.dyes.len();
        let mut gram = [[0.0; 3]; 3];
        for i in 0..k {
            for j in 0..k {
                gram[i][j] = dot(self.dyes[i].od_vector, self.dyes[j].od_vector);
            }
        }
        let eig = symmetric_eigenvalues(&gram, k);
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            (max / min).sqrt()
        }
    }

    /// Human-readable calibration file contents.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# stain basis: unit optical-density vectors per dye\n");
        let w = self.white_point;
        writeln!(s, "white_point = {:.6} {:.6} {:.6}", w[0], w[1], w[2]).unwrap();
        for d in &self.dyes {
            let v = d.od_vector;
            writeln!(s, "dye.{} = {:.6} {:.6} {:.6}", d.name, v[0], v[1], v[2]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<StainBasis> {
        let mut white = None;
        let mut dyes = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Calibration(format!("line {}: {msg}", n + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let nums: Vec<f64> = value
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("expected three numbers"))?;
            let triple: [f64; 3] = nums.try_into().map_err(|_| bad("expected three numbers"))?;
            match key.trim() {
                "white_point" => white = Some(triple),
                k if k.starts_with("dye.") => dyes.push(Dye {
                    name: k["dye.".len()..].to_string(),
                    od_vector: triple,
                }),
                other => return Err(bad(&format!("unknown key {other:?}"))),
            }
        }
        let white = white.ok_or_else(|| Error::Calibration("missing white_point".into()))?;
        StainBasis::new(dyes, white)
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Cyclic Jacobi eigenvalues of the leading k x k block of a symmetric matrix.
fn symmetric_eigenvalues(m: &[[f64; 3]; 3], k: usize) -> Vec<f64> {
    let mut a = *m;
    for _ in 0..50 {
        let mut off = 0.0;
        for p in 0..k {
            for q in p + 1..k {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..k).map(|i| a[i][i]).collect()
}

/// Build a basis from pixels of droplets that each hold a single dye.
///
/// The white point is the per-channel median of `background_pixels`; each dye
/// direction is the normalized mean optical density of its pixels.
pub fn calibrate(
    single_dye_samples: &[(String, Vec<[u8; 3]>)],
    background_pixels: &[[u8; 3]],
) -> Result<StainBasis> {
    if background_pixels.len() < MIN_CALIBRATION_PIXELS {
        return Err(Error::Calibration(format!(
            "need at least {MIN_CALIBRATION_PIXELS} background pixels, got {}",
            background_pixels.len()
        )));
    }
    let white = [0, 1, 2].map(|c| {
        let mut hist = [0usize; 256];
        for p in background_pixels {
            hist[p[c] as usize] += 1;
        }
        (crate::raster::median_from_histogram(&hist, background_pixels.len()) as f64).max(1.0)
    });
    let mut dyes = Vec::new();
    for (name, pixels) in single_dye_samples {
        if pixels.len() < MIN_CALIBRATION_PIXELS {
            return Err(Error::Calibration(format!(
                "dye {name}: need at least {MIN_CALIBRATION_PIXELS} pixels, got {}",
                pixels.len()
            )));
        }
        let mut mean = [0.0; 3];
        for p in pixels {
            let od = optical_density(p.map(|v| v as f64), white);
            for c in 0..3 {
                mean[c] += od[c];
            }
        }
        let mean = mean.map(|v| v / pixels.len() as f64);
        if norm(mean) < MIN_DYE_OD {
            return Err(Error::Calibration(format!(
                "dye {name} is indistinguishable from background"
            )));
        }
        dyes.push(Dye {
            name: name.clone(),
            od_vector: mean,
        });
    }
    StainBasis::new(dyes, white)
}

/// Per-dye concentration rasters (OD units) plus the unexplained OD norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationMap {
    pub width: usize,
    pub height: usize,
    pub dye_names: Vec<String>,
    /// One row-major raster per dye.
    pub concentrations: Vec<Vec<f32>>,
    pub residual: Vec<f32>,
}

impl ConcentrationMap {
    pub fn at(&self, dye: usize, x: usize, y: usize) -> f32 {
        self.concentrations[dye][y * self.width + x]
    }
}

/// Non-negative least squares for up to three dye directions.
struct Solver {
    /// For every non-empty dye subset (bitmask 1..2^k): its members and the
    /// rows of the subset pseudo-inverse.
    subsets: Vec<(Vec<usize>, Vec<[f64; 3]>)>,
    dirs: Vec<[f64; 3]>,
}

impl Solver {
    fn new(basis: &StainBasis) -> Solver {
        let dirs: Vec<[f64; 3]> = basis.dyes.iter().map(|d| d.od_vector).collect();
        let k = dirs.len();
        let mut subsets = Vec::new();
        for mask in 1usize..(1 << k) {
            let members: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let m = members.len();
            let mut gram = vec![vec![0.0; m]; m];
            for (a, &i) in members.iter().enumerate() {
                for (b, &j) in members.iter().enumerate() {
                    gram[a][b] = dot(dirs[i], dirs[j]);
                }
            }
            let inv = invert_small(&gram);
            // pinv = G^-1 V_S^T
            let rows = (0..m)
                .map(|a| {
                    let mut row = [0.0; 3];
                    for (b, &j) in members.iter().enumerate() {
                        for c in 0..3 {
                            row[c] += inv[a][b] * dirs[j][c];
                        }
                    }
                    row
                })
                .collect();
            subsets.push((members, rows));
        }
        Solver { dirs, subsets }
    }

    fn solve(&self, od: [f64; 3]) -> ([f64; 3], f64) {
        let k = self.dirs.len();
        let fit = |members: &[usize], rows: &[[f64; 3]]| -> Option<([f64; 3], f64)> {
            let mut c = [0.0; 3];
            for (a, &i) in members.iter().enumerate() {
                let v = dot(rows[a], od);
                if v < 0.0 {
                    return None;
                }
                c[i] = v;
            }
            Some((c, self.residual(od, &c)))
        };
        // Unconstrained optimum is the answer whenever it is feasible.
        let (all_members, all_rows) = &self.subsets[(1 << k) - 2];
        if let Some(best) = fit(all_members, all_rows) {
            return best;
        }
        let mut best = ([0.0; 3], norm(od));
        for (members, rows) in &self.subsets {
            if let Some((c, r)) = fit(members, rows) {
                if r < best.1 {
                    best = (c, r);
                }
            }
        }
        best
    }

    fn residual(&self, od: [f64; 3], c: &[f64; 3]) -> f64 {
        let mut r = od;
        for (i, d) in self.dirs.iter().enumerate() {
            for ch in 0..3 {
                r[ch] -= c[i] * d[ch];
            }
        }
        norm(r)
    }
}

fn invert_small(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match m.len() {
        1 => vec![vec![1.0 / m[0][0]]],
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            vec![
                vec![m[1][1] / det, -m[0][1] / det],
                vec![-m[1][0] / det, m[0][0] / det],
            ]
        }
        3 => {
            let a = m;
            let cof = |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
            let det = a[0][0] * cof(1, 2, 1, 2) - a[0][1] * cof(1, 2, 0, 2) + a[0][2] * cof(1, 2, 0, 1);
            vec![
                vec![cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
                vec![-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
                vec![cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
            ]
        }
        _ => unreachable!("at most three dyes"),
    }
}

/// Concentrations for every pixel inside `roi`; pixels outside are zero.
pub fn unmix(image: &RasterImage, basis: &StainBasis, roi: &BinaryMask) -> Result<ConcentrationMap> {
    if image.channels() != 3 {
        return Err(Error::Input("unmixing needs an RGB image".into()));
    }
    if !roi.matches(image) {
        return Err(Error::Input("roi does not match image dimensions".into()));
    }
    let cond = basis.condition_number();
    if !(cond < MAX_CONDITION) {
        return Err(Error::Calibration(format!("ill-conditioned basis ({cond:.1})")));
    }
    let (w, h) = image.dims();
    let k = basis.dyes.len();
    let white = basis.white_point;
    let lut: Vec<[f64; 256]> = (0..3)
        .map(|c| {
            let mut t = [0.0; 256];
            for (v, slot) in t.iter_mut().enumerate() {
                let mut s = [white[0], white[1], white[2]];
                s[c] = v as f64;
                *slot = optical_density(s, white)[c];
            }
            t
        })
        .collect();
    let solver = Solver::new(basis);
    let mut concentrations = vec![vec![0f32; w * h]; k];
    let mut residual = vec![0f32; w * h];
    for (i, px) in image.pixels().chunks_exact(3).enumerate() {
        if !roi.bits()[i] {
            continue;
        }
        let od = [lut[0][px[0] as usize], lut[1][px[1] as usize], lut[2][px[2] as usize]];
        let (c, r) = solver.solve(od);
        for d in 0..k {
            concentrations[d][i] = c[d] as f32;
        }
        residual[i] = r as f32;
    }
    Ok(ConcentrationMap {
        width: w,
        height: h,
        dye_names: basis.dye_names(),
        concentrations,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyeRatio {
    /// (dye name, fraction); sums to 1 unless `empty`.
    pub fractions: Vec<(String, f64)>,
    pub empty: bool,
}

/// Fractions of summed dye concentration over a region's pixels.
pub fn dye_ratio(conc: &ConcentrationMap, region: &Region) -> Result<DyeRatio> {
    let b = region.bounding_box;
    if b.x1 >= conc.width || b.y1 >= conc.height {
        return Err(Error::Input("region lies outside the concentration map".into()));
    }
    let sums: Vec<f64> = conc
        .concentrations
        .iter()
        .map(|plane| {
            region
                .pixels()
                .iter()
                .map(|&(x, y)| plane[y as usize * conc.width + x as usize] as f64)
                .sum()
        })
        .collect();
    let total: f64 = sums.iter().sum();
    let empty = total < EMPTY_TOTAL;
    let fractions = conc
        .dye_names
        .iter()
        .zip(&sums)
        .map(|(n, s)| (n.clone(), if empty { 0.0 } else { s / total }))
        .collect();
    Ok(DyeRatio { fractions, empty })
}

/// The part of a round region within `fraction` of its equivalent radius from
/// the centroid. Keeps the dark refractive rim of a droplet out of unmixing.
pub fn droplet_interior(region: &Region, fraction: f64) -> Region {
    let r_eq = (region.area() / std::f64::consts::PI).sqrt();
    let limit = (fraction * r_eq).powi(2);
    let (cx, cy) = region.centroid;
    let inner: Vec<(u32, u32)> = region
        .pixels()
        .iter()
        .copied()
        .filter(|&(x, y)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= limit)
        .collect();
    if inner.is_empty() {
        return region.clone();
    }
    Region::from_pixels(region.label, inner).expect("non-empty pixel set")
}
