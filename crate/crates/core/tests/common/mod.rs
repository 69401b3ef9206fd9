#![allow(dead_code)]

use std::path::{Path, PathBuf};

use icell::pipeline::{io, InputSpec, Mode, PipelineConfig};
use icell::synth::{DropletSpec, DropletTruth, DyeSpec, GroundTruth, Modality, SceneSpec, render_sequence};
use icell::RasterImage;

/// Diameters spanning 70 to 240 px on a 1024 x 1024 field.
pub const FIVE_DROPLETS: [(f64, f64, f64); 5] = [
    (200.0, 200.0, 70.0),
    (600.0, 220.0, 240.0),
    (250.0, 650.0, 150.0),
    (700.0, 700.0, 200.0),
    (480.0, 900.0, 110.0),
];

pub fn droplet(x: f64, y: f64, d: f64) -> DropletSpec {
    DropletSpec {
        center: [x, y],
        diameter: d,
        concentrations: vec![],
        rim_darkness: 0.6,
        rim_width: 5.0,
    }
}

pub fn five_droplet_scene(noise: f64, speckles: usize, seed: u64) -> SceneSpec {
    let mut s = SceneSpec::blank(1024, 1024);
    s.background_texture = 6.0;
    s.noise_sigma = noise;
    s.speckles = speckles;
    s.seed = seed;
    s.droplets = FIVE_DROPLETS.iter().map(|&(x, y, d)| droplet(x, y, d)).collect();
    s
}

/// Small bright-field scene for multi-frame pipeline runs.
pub fn small_scene(seed: u64) -> SceneSpec {
    let mut s = SceneSpec::blank(192, 160);
    s.background_texture = 4.0;
    s.noise_sigma = 2.0;
    s.seed = seed;
    s.droplets = vec![droplet(50.0, 50.0, 44.0), droplet(130.0, 60.0, 56.0), droplet(90.0, 118.0, 36.0)];
    s
}

pub fn two_dyes() -> Vec<DyeSpec> {
    vec![
        DyeSpec {
            name: "blue".into(),
            od_vector: [0.75, 0.45, 0.1],
        },
        DyeSpec {
            name: "yellow".into(),
            od_vector: [0.05, 0.25, 0.9],
        },
    ]
}

pub fn nearest(truth: &[DropletTruth], c: (f64, f64)) -> &DropletTruth {
    truth
        .iter()
        .min_by(|a, b| {
            let da = (a.center[0] - c.0).hypot(a.center[1] - c.1);
            let db = (b.center[0] - c.0).hypot(b.center[1] - c.1);
            da.total_cmp(&db)
        })
        .unwrap()
}

/// Render `n` frames into `dir` as frame_0000.png, frame_0001.png, ...
pub fn write_frames(dir: &Path, spec: &SceneSpec, modality: Modality, n: usize) -> (Vec<PathBuf>, GroundTruth) {
    std::fs::create_dir_all(dir).unwrap();
    let (frames, truth) = render_sequence(spec, modality, n).unwrap();
    let paths = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(format!("frame_{i:04}.png"));
            io::write_png(&p, f).unwrap();
            p
        })
        .collect();
    (paths, truth)
}

pub fn write_image(path: &Path, image: &RasterImage) {
    io::write_png(path, image).unwrap();
}

pub fn batch_config(mode: Mode, input: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        mode: Some(mode),
        input: Some(InputSpec::Path(input.to_path_buf())),
        output_dir: Some(out.to_path_buf()),
        ..Default::default()
    }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Data rows of a CSV file, split into fields.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    read(path)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population coefficient of variation, in percent.
pub fn cv_percent(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    100.0 * var.sqrt() / m
}
