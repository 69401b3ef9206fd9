//! Batch and watch-folder execution: configuration, frame I/O, per-stage
//! timing, and CSV / JSON / overlay outputs.
//!
//! Frames flow through one ingest thread, a pool of analysis workers and a
//! single emitter that releases results strictly in frame order.

mod config;
pub mod io;
pub mod overlay;
mod report;
mod stream;

use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use crossbeam_channel::{bounded, unbounded};
use serde::{Deserialize, Serialize};

use crate::brightfield::{
    build_background, droplet_metrics, segment_droplets, subtract_background, BackgroundModel, DropletRecord,
};
use crate::error::{Error, Result};
use crate::fluor::{cells_from_regions, segment_bands, CellRecord};
use crate::raster::{BinaryMask, RasterImage};
use crate::region::{trace_contour, Region};
use crate::registration::{align_frame, FrameAlignment, Shift};
use crate::stainsep::{calibrate, droplet_interior, dye_ratio, unmix, StainBasis};
use crate::synth::{render_background, render_sequence, GroundTruth, Modality, SceneSpec};

pub use config::{
    CalibrateConfig, DyeSample, InputSpec, Mode, PipelineConfig, Roi, StreamConfig, SynthConfig, DEFAULT_BUDGET_MS,
};
pub use report::{brightfield_header, RunOutcome, TimingReport};
pub use stream::StreamSource;

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TIMING_CSV: &str = "timing.csv";
pub const EVENTS_NDJSON: &str = "events.ndjson";
pub const REGISTRATION_CSV: &str = "registration.csv";
pub const RUN_META_JSON: &str = "run_meta.json";
pub const CALIBRATION_FILE: &str = "calibration.stain";
pub const OVERLAY_DIR: &str = "overlays";

/// Milliseconds spent per stage on one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub read: f64,
    pub register: f64,
    pub segment: f64,
    pub analyze: f64,
    pub write: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.read + self.register + self.segment + self.analyze + self.write
    }
}

fn lap(t: &mut Instant) -> f64 {
    let now = Instant::now();
    let ms = (now - *t).as_secs_f64() * 1e3;
    *t = now;
    ms
}

/// A frame as delivered by a source, already decoded (or failed to decode).
#[derive(Debug)]
pub struct Ingested {
    pub index: usize,
    pub name: String,
    pub image: std::result::Result<RasterImage, String>,
    pub read_ms: f64,
}

pub(crate) fn ingest_file(index: usize, path: &Path, pitch: Option<f64>) -> Ingested {
    let t = Instant::now();
    let image = io::read_image(path)
        .and_then(|img| {
            let p = pitch.or(img.pixel_pitch());
            img.with_pixel_pitch(p)
        })
        .map_err(|e| e.to_string());
    Ingested {
        index,
        name: io::file_name(path),
        image,
        read_ms: t.elapsed().as_secs_f64() * 1e3,
    }
}

#[derive(Debug)]
pub(crate) enum Payload {
    Droplets(Vec<DropletRecord>),
    Cells(Vec<CellRecord>),
    Registration,
    Failed,
}

#[derive(Debug)]
pub(crate) struct FrameResult {
    pub index: usize,
    pub name: String,
    /// The analyzed (possibly aligned) frame, kept for overlays and aligned output.
    pub image: Option<RasterImage>,
    pub alignment: Option<FrameAlignment>,
    pub payload: Payload,
    pub contours: Vec<Vec<(f64, f64)>>,
    pub warning: Option<String>,
    pub times: StageTimes,
}

/// Immutable per-run context shared by the workers.
pub(crate) struct Analyzer {
    mode: Mode,
    cfg: PipelineConfig,
    background: Option<BackgroundModel>,
    basis: Option<StainBasis>,
}

fn load_background(path: &Path, pitch: Option<f64>) -> Result<BackgroundModel> {
    let files = if path.is_dir() {
        io::list_frames(path)?
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Config(format!("background directory {} holds no images", path.display())));
    }
    let frames = files
        .iter()
        .map(|f| io::read_image(f)?.with_pixel_pitch(pitch))
        .collect::<Result<Vec<_>>>()?;
    build_background(&frames)
}

pub fn load_stain_basis(path: &Path) -> Result<StainBasis> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    StainBasis::from_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Uniform background at the frame's per-channel median.
fn flat_background(image: &RasterImage) -> Result<BackgroundModel> {
    let (w, h) = image.dims();
    Ok(BackgroundModel {
        mean_image: RasterImage::filled(w, h, &image.channel_medians())?,
        frame_count: 1,
    })
}

impl Analyzer {
    pub(crate) fn prepare(cfg: &PipelineConfig, mode: Mode) -> Result<Analyzer> {
        let background = match (&cfg.background, mode) {
            (Some(p), Mode::Brightfield) => Some(load_background(p, cfg.pixel_pitch)?),
            _ => None,
        };
        let basis = match (&cfg.stain_basis, mode) {
            (Some(p), Mode::Brightfield) => Some(load_stain_basis(p)?),
            _ => None,
        };
        Ok(Analyzer {
            mode,
            cfg: cfg.clone(),
            background,
            basis,
        })
    }

    pub(crate) fn dye_names(&self) -> Vec<String> {
        self.basis.as_ref().map(|b| b.dye_names()).unwrap_or_default()
    }

    fn needs_reference(&self) -> bool {
        self.mode == Mode::Register || self.cfg.align
    }

    pub(crate) fn process(&self, item: Ingested, reference: Option<&(usize, RasterImage)>) -> FrameResult {
        let mut result = FrameResult {
            index: item.index,
            name: item.name,
            image: None,
            alignment: None,
            payload: Payload::Failed,
            contours: Vec::new(),
            warning: None,
            times: StageTimes {
                read: item.read_ms,
                ..Default::default()
            },
        };
        let image = match item.image {
            Ok(img) => img,
            Err(msg) => {
                result.warning = Some(msg);
                return result;
            }
        };
        if let Err(e) = self.analyze(image, reference, &mut result) {
            result.payload = Payload::Failed;
            result.warning = Some(e.to_string());
        }
        result
    }

    fn analyze(&self, image: RasterImage, reference: Option<&(usize, RasterImage)>, out: &mut FrameResult) -> Result<()> {
        let mut t = Instant::now();
        let image = match (self.needs_reference(), reference) {
            (true, Some((ri, _))) if *ri == out.index => {
                out.alignment = Some(FrameAlignment {
                    shift: Shift::ZERO,
                    gains: vec![1.0; image.channels()],
                    warning: None,
                });
                image
            }
            (true, Some((_, reference))) => {
                let (aligned, a) = align_frame(reference, &image, self.cfg.max_shift)?;
                out.warning = a.warning.clone();
                out.alignment = Some(a);
                aligned
            }
            _ => image,
        };
        out.times.register = lap(&mut t);
        let overlays = self.cfg.emit_overlays;
        match self.mode {
            Mode::Brightfield => {
                let diff = match &self.background {
                    Some(bg) => subtract_background(&image, bg)?,
                    None => subtract_background(&image, &flat_background(&image)?)?,
                };
                let regions = segment_droplets(&diff, &self.cfg.segmentation)?;
                out.times.segment = lap(&mut t);
                let mut records = droplet_metrics(&regions, image.pixel_pitch());
                if let Some(basis) = &self.basis {
                    self.unmix_droplets(&image, basis, &regions, &mut records)?;
                }
                if overlays {
                    out.contours = contours(&regions);
                }
                out.times.analyze = lap(&mut t);
                out.payload = Payload::Droplets(records);
            }
            Mode::Fluorescence => {
                let f = &self.cfg.fluorescence;
                let regions = segment_bands(&image, &f.segment_bands, f.min_area)?;
                out.times.segment = lap(&mut t);
                let field = cells_from_regions(&image, f, &regions, out.index)?;
                if overlays {
                    out.contours = contours(&regions);
                }
                out.times.analyze = lap(&mut t);
                out.payload = Payload::Cells(field.cells);
            }
            _ => out.payload = Payload::Registration,
        }
        out.image = Some(image);
        Ok(())
    }

    fn unmix_droplets(
        &self,
        image: &RasterImage,
        basis: &StainBasis,
        regions: &[Region],
        records: &mut [DropletRecord],
    ) -> Result<()> {
        let (w, h) = image.dims();
        let interiors: Vec<Region> = regions
            .iter()
            .map(|r| droplet_interior(r, self.cfg.interior_fraction))
            .collect();
        let mut roi = BinaryMask::new(w, h);
        for r in &interiors {
            for &(x, y) in r.pixels() {
                roi.set(x as usize, y as usize, true);
            }
        }
        let conc = unmix(image, basis, &roi)?;
        for (rec, interior) in records.iter_mut().zip(&interiors) {
            let ratio = dye_ratio(&conc, interior)?;
            rec.dye_fractions = ratio.fractions;
            rec.empty = ratio.empty;
        }
        Ok(())
    }
}

fn contours(regions: &[Region]) -> Vec<Vec<(f64, f64)>> {
    regions.iter().map(|r| trace_contour(r).vertices).collect()
}

/// Run frames from `source` through the worker pool and emit outputs in order.
pub(crate) fn execute<I>(cfg: &PipelineConfig, mode: Mode, source: I, streaming: bool) -> Result<RunOutcome>
where
    I: Iterator<Item = Ingested> + Send,
{
    let out_dir = cfg.output_dir()?.to_path_buf();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let analyzer = Analyzer::prepare(cfg, mode)?;
    let mut emitter = report::Emitter::create(cfg, mode, &out_dir, analyzer.dye_names(), streaming)?;
    let workers = cfg.worker_count().max(1);
    let reference: OnceLock<(usize, RasterImage)> = OnceLock::new();
    let needs_reference = analyzer.needs_reference();
    let (job_tx, job_rx) = bounded::<Ingested>(workers * 2);
    let (res_tx, res_rx) = unbounded::<FrameResult>();
    let started = Instant::now();
    let mut failure: Option<Error> = None;
    std::thread::scope(|s| {
        let reference = &reference;
        let analyzer = &analyzer;
        s.spawn(move || {
            for item in source {
                if needs_reference && reference.get().is_none() {
                    if let Ok(img) = &item.image {
                        let _ = reference.set((item.index, img.clone()));
                    }
                }
                if job_tx.send(item).is_err() {
                    break;
                }
            }
        });
        for _ in 0..workers {
            let rx = job_rx.clone();
            let tx = res_tx.clone();
            s.spawn(move || {
                for item in rx {
                    if tx.send(analyzer.process(item, reference.get())).is_err() {
                        break;
                    }
                }
            });
        }
        drop(job_rx);
        drop(res_tx);
        for r in res_rx {
            if failure.is_none() {
                if let Err(e) = emitter.accept(r) {
                    failure = Some(e);
                }
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    emitter.finish(started.elapsed().as_secs_f64() * 1e3)
}

/// Frame paths named by the input spec, in processing order.
pub fn resolve_inputs(input: &InputSpec) -> Result<Vec<PathBuf>> {
    match input {
        InputSpec::Path(p) if p.is_dir() => io::list_frames(p),
        InputSpec::Path(p) if p.exists() => Ok(vec![p.clone()]),
        InputSpec::Path(p) => Err(Error::NoInput(format!("no input frames: {} does not exist", p.display()))),
        InputSpec::Files(files) => Ok(files.clone()),
    }
}

/// Process every input frame once. Calibrate and synth modes dispatch to
/// their own runners.
pub fn run_batch(cfg: &PipelineConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mode = cfg.mode()?;
    match mode {
        Mode::Calibrate => return run_calibrate(cfg).map(|_| RunOutcome::default()),
        Mode::Synth => return run_synth(cfg).map(|_| RunOutcome::default()),
        _ => {}
    }
    let input = cfg.input.as_ref().expect("validated");
    let files = resolve_inputs(input)?;
    if files.is_empty() {
        return Err(Error::NoInput("no input frames".into()));
    }
    let pitch = cfg.pixel_pitch;
    let source = files.into_iter().enumerate().map(move |(i, p)| ingest_file(i, &p, pitch));
    execute(cfg, mode, source, false)
}

/// Watch the input directory and process frames as they arrive, until `stop`
/// is raised or the idle timeout passes. In-flight frames are drained first.
pub fn run_stream(cfg: &PipelineConfig, stop: Arc<AtomicBool>) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    let analysis = cfg.stream.analysis;
    cfg.mode = Some(analysis);
    cfg.validate()?;
    let dir = match cfg.input.as_ref().expect("validated") {
        InputSpec::Path(p) if p.is_dir() => p.clone(),
        _ => return Err(Error::Config("stream input must be a directory".into())),
    };
    let source = StreamSource::new(dir, &cfg.stream, cfg.pixel_pitch, stop);
    execute(&cfg, analysis, source, true)
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub basis: StainBasis,
    pub path: PathBuf,
}

fn roi_pixels(image: &RasterImage, roi: Roi, what: &str) -> Result<Vec<[u8; 3]>> {
    let [x, y, w, h] = roi;
    if image.channels() != 3 {
        return Err(Error::Calibration(format!("{what}: calibration images must be RGB")));
    }
    if w == 0 || h == 0 || x + w > image.width() || y + h > image.height() {
        return Err(Error::Calibration(format!(
            "{what}: roi {roi:?} does not fit the {}x{} image",
            image.width(),
            image.height()
        )));
    }
    Ok((y..y + h).flat_map(|yy| (x..x + w).map(move |xx| (xx, yy))).map(|(xx, yy)| image.rgb(xx, yy)).collect())
}

/// Build a stain basis from single-dye ROIs and write `calibration.stain`.
pub fn run_calibrate(cfg: &PipelineConfig) -> Result<CalibrationOutcome> {
    let c = &cfg.calibrate;
    let bg_roi = c
        .background_roi
        .ok_or_else(|| Error::Config("calibrate: missing background_roi".into()))?;
    let first = c
        .dye
        .first()
        .ok_or_else(|| Error::Config("calibrate: no dyes given".into()))?;
    let mut samples = Vec::new();
    for d in &c.dye {
        let img = io::read_image(&d.image)?;
        let what = format!("dye {} ({})", d.name, d.image.display());
        samples.push((d.name.clone(), roi_pixels(&img, d.roi, &what)?));
    }
    let bg_path = c.background_image.as_ref().unwrap_or(&first.image);
    let bg = roi_pixels(&io::read_image(bg_path)?, bg_roi, &format!("background ({})", bg_path.display()))?;
    let basis = calibrate(&samples, &bg).map_err(|e| match e {
        Error::Calibration(m) => Error::Calibration(format!(
            "{m} [sources: {}]",
            c.dye.iter().map(|d| format!("{} {:?} in {}", d.name, d.roi, d.image.display())).collect::<Vec<_>>().join("; ")
        )),
        other => other,
    })?;
    let out = cfg.output_dir()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(CALIBRATION_FILE);
    std::fs::write(&path, basis.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(CalibrationOutcome { basis, path })
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub frames: Vec<PathBuf>,
    pub backgrounds: Vec<PathBuf>,
    pub truth: GroundTruth,
}

pub fn synth_scene(cfg: &PipelineConfig) -> Result<SceneSpec> {
    let mut spec = match (&cfg.synth.scene, &cfg.synth.scene_file) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => SceneSpec::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        (None, None) => return Err(Error::Config("synth: no scene given".into())),
    };
    if cfg.pixel_pitch.is_some() {
        spec.pixel_pitch = cfg.pixel_pitch;
    }
    Ok(spec)
}

/// Render a synthetic corpus: `frames/`, `background/`, `truth.json` and `scene.toml`.
pub fn run_synth(cfg: &PipelineConfig) -> Result<SynthOutcome> {
    let spec = synth_scene(cfg)?;
    let s = &cfg.synth;
    let (frames, truth) = render_sequence(&spec, s.modality, s.frames)?;
    let out = cfg.output_dir()?;
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let frame_dir = out.join("frames");
    mkdir(&frame_dir)?;
    let mut frame_paths = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let p = frame_dir.join(format!("frame_{i:04}.png"));
        io::write_png(&p, f)?;
        frame_paths.push(p);
    }
    let mut backgrounds = Vec::new();
    if s.modality == Modality::Brightfield && s.background_frames > 0 {
        let bg_dir = out.join("background");
        mkdir(&bg_dir)?;
        for k in 0..s.background_frames {
            let mut bg_spec = spec.clone();
            bg_spec.seed = spec.seed.wrapping_add(k as u64 + 1).wrapping_mul(0x2545_f491_4f6c_dd1d);
            let p = bg_dir.join(format!("background_{k:04}.png"));
            io::write_png(&p, &render_background(&bg_spec)?)?;
            backgrounds.push(p);
        }
    }
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("truth.json", serde_json::to_string_pretty(&truth).expect("truth serializes"))?;
    write("scene.toml", spec.to_toml())?;
    Ok(SynthOutcome {
        frames: frame_paths,
        backgrounds,
        truth,
    })
}
