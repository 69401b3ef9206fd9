//! Run configuration, loaded from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::brightfield::SegmentationConfig;
use crate::error::{Error, Result};
use crate::fluor::FluorConfig;
use crate::registration::DEFAULT_MAX_SHIFT;
use crate::synth::{Modality, SceneSpec};

pub const DEFAULT_BUDGET_MS: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Brightfield,
    Fluorescence,
    Register,
    Calibrate,
    Synth,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Brightfield => "brightfield",
            Mode::Fluorescence => "fluorescence",
            Mode::Register => "register",
            Mode::Calibrate => "calibrate",
            Mode::Synth => "synth",
        }
    }

    /// Modes that process a sequence of frames.
    pub fn is_frame_mode(self) -> bool {
        matches!(self, Mode::Brightfield | Mode::Fluorescence | Mode::Register)
    }
}

/// A directory of frames or an explicit file list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSpec {
    Path(PathBuf),
    Files(Vec<PathBuf>),
}

/// Axis-aligned pixel rectangle `[x, y, width, height]`.
pub type Roi = [usize; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyeSample {
    pub name: String,
    pub image: PathBuf,
    pub roi: Roi,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    /// Image holding the background ROI; defaults to the first dye image.
    pub background_image: Option<PathBuf>,
    pub background_roi: Option<Roi>,
    pub dye: Vec<DyeSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub frames: usize,
    pub modality: Modality,
    /// Static droplet-free frames written for background modeling.
    pub background_frames: usize,
    pub scene: Option<SceneSpec>,
    pub scene_file: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frames: 1,
            modality: Modality::Brightfield,
            background_frames: 1,
            scene: None,
            scene_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Analysis run on each arriving frame (brightfield, fluorescence or register).
    pub analysis: Mode,
    pub poll_ms: u64,
    /// Consecutive polls with an unchanged size before a file is read.
    pub stable_polls: u32,
    pub max_retries: u32,
    /// Stop after this long without a new frame; run until interrupted if unset.
    pub idle_timeout_ms: Option<u64>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            analysis: Mode::Brightfield,
            poll_ms: 100,
            stable_polls: 2,
            max_retries: 3,
            idle_timeout_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Option<Mode>,
    pub input: Option<InputSpec>,
    pub output_dir: Option<PathBuf>,
    /// Micrometers per pixel.
    pub pixel_pitch: Option<f64>,
    pub max_shift: usize,
    pub latency_budget_ms: f64,
    pub emit_overlays: bool,
    /// Analysis worker threads; 0 uses the available parallelism.
    pub workers: usize,
    /// Register every frame to the first before analysis.
    pub align: bool,
    /// Static droplet-free frame(s): one image or a directory. Without it,
    /// each frame's per-channel median serves as a flat background.
    pub background: Option<PathBuf>,
    /// Stain calibration file; enables dye unmixing in brightfield mode.
    pub stain_basis: Option<PathBuf>,
    /// Fraction of the equivalent radius sampled for unmixing.
    pub interior_fraction: f64,
    pub segmentation: SegmentationConfig,
    pub fluorescence: FluorConfig,
    pub calibrate: CalibrateConfig,
    pub synth: SynthConfig,
    pub stream: StreamConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: None,
            input: None,
            output_dir: None,
            pixel_pitch: None,
            max_shift: DEFAULT_MAX_SHIFT,
            latency_budget_ms: DEFAULT_BUDGET_MS,
            emit_overlays: false,
            workers: 0,
            align: false,
            background: None,
            stain_basis: None,
            interior_fraction: 0.8,
            segmentation: SegmentationConfig::default(),
            fluorescence: FluorConfig::default(),
            calibrate: CalibrateConfig::default(),
            synth: SynthConfig::default(),
            stream: StreamConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut cfg.input {
            Some(InputSpec::Path(p)) => rebase(base, p),
            Some(InputSpec::Files(fs)) => fs.iter_mut().for_each(|p| rebase(base, p)),
            None => {}
        }
        for p in [&mut cfg.output_dir, &mut cfg.background, &mut cfg.stain_basis, &mut cfg.calibrate.background_image, &mut cfg.synth.scene_file]
            .into_iter()
            .flatten()
        {
            rebase(base, p);
        }
        for d in &mut cfg.calibrate.dye {
            rebase(base, &mut d.image);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn mode(&self) -> Result<Mode> {
        self.mode.ok_or_else(|| Error::Config("no mode given".into()))
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory given".into()))
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Check values and referenced paths before any processing starts.
    pub fn validate(&self) -> Result<()> {
        let mode = self.mode()?;
        self.output_dir()?;
        if !(self.latency_budget_ms > 0.0) {
            return Err(Error::Config("latency_budget_ms must be positive".into()));
        }
        if let Some(p) = self.pixel_pitch {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config("pixel_pitch must be positive".into()));
            }
        }
        if !(self.interior_fraction > 0.0 && self.interior_fraction <= 1.0) {
            return Err(Error::Config("interior_fraction must lie in (0, 1]".into()));
        }
        self.segmentation
            .validate()
            .map_err(|e| Error::Config(format!("segmentation: {e}")))?;
        self.fluorescence
            .validate()
            .map_err(|e| Error::Config(format!("fluorescence: {e}")))?;
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        if let Some(p) = &self.background {
            must_exist(p, "background")?;
        }
        if let Some(p) = &self.stain_basis {
            must_exist(p, "stain basis")?;
        }
        match mode {
            Mode::Brightfield | Mode::Fluorescence | Mode::Register => {
                if self.input.is_none() {
                    return Err(Error::Config("no input given".into()));
                }
            }
            Mode::Calibrate => {
                let c = &self.calibrate;
                if c.dye.is_empty() {
                    return Err(Error::Config("calibrate: at least one [[calibrate.dye]] entry is required".into()));
                }
                if c.background_roi.is_none() {
                    return Err(Error::Config("calibrate: missing background_roi".into()));
                }
                for d in &c.dye {
                    must_exist(&d.image, &format!("calibration image for dye {}", d.name))?;
                }
                if let Some(p) = &c.background_image {
                    must_exist(p, "calibration background image")?;
                }
            }
            Mode::Synth => {
                let s = &self.synth;
                if s.scene.is_some() == s.scene_file.is_some() {
                    return Err(Error::Config("synth: give exactly one of scene or scene_file".into()));
                }
                if s.frames == 0 {
                    return Err(Error::Config("synth: frames must be >= 1".into()));
                }
                if let Some(p) = &s.scene_file {
                    must_exist(p, "scene file")?;
                }
            }
        }
        if !self.stream.analysis.is_frame_mode() {
            return Err(Error::Config("stream.analysis must be brightfield, fluorescence or register".into()));
        }
        if self.stream.poll_ms == 0 || self.stream.stable_polls == 0 {
            return Err(Error::Config("stream: poll_ms and stable_polls must be positive".into()));
        }
        Ok(())
    }
}
