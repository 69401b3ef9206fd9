use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use icell::pipeline::{self, InputSpec, Mode, PipelineConfig, RunOutcome};
use icell::Error;

#[derive(Parser)]
#[command(name = "icell", version, about = "Droplet and cell image analysis for microfluidic time-lapse frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment droplets in bright-field frames and unmix dye content.
    AnalyzeBrightfield(Common),
    /// Segment fluorescent cells, score circularity and viability.
    AnalyzeFluorescence(Common),
    /// Align every frame to the first and write the aligned frames.
    Register(Common),
    /// Build a stain basis from single-dye droplet regions.
    Calibrate(Common),
    /// Render a synthetic corpus with ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Number of frames to render.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Watch the input directory and analyze frames as they land.
    Stream {
        #[command(flatten)]
        common: Common,
        /// Analysis applied to each arriving frame.
        #[arg(long, value_enum)]
        analysis: Option<Analysis>,
        /// Stop after this long without new files (default: run until Ctrl-C).
        #[arg(long, value_name = "MS")]
        idle_timeout_ms: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Analysis {
    Brightfield,
    Fluorescence,
    Register,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags given here override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Frame directory or single image.
    #[arg(long, value_name = "DIR")]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write annotated overlay images.
    #[arg(long)]
    overlays: bool,
    /// Per-frame latency budget in milliseconds.
    #[arg(long, value_name = "N")]
    budget_ms: Option<f64>,
    /// Pixel pitch in micrometers per pixel.
    #[arg(long, value_name = "UM")]
    pixel_pitch: Option<f64>,
}

impl Common {
    fn config(&self, mode: Mode) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        cfg.mode = Some(mode);
        if let Some(p) = &self.input {
            cfg.input = Some(InputSpec::Path(p.clone()));
        }
        if let Some(p) = &self.out {
            cfg.output_dir = Some(p.clone());
        }
        if self.overlays {
            cfg.emit_overlays = true;
        }
        if let Some(b) = self.budget_ms {
            cfg.latency_budget_ms = b;
        }
        if self.pixel_pitch.is_some() {
            cfg.pixel_pitch = self.pixel_pitch;
        }
        Ok(cfg)
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::NoInput(_) => 2,
        _ => 1,
    }
}

fn report(outcome: &RunOutcome, cfg: &PipelineConfig) {
    println!(
        "{} of {} frames processed, {} records, {} warnings, {} over budget -> {}",
        outcome.frames_processed,
        outcome.frames_total,
        outcome.records,
        outcome.warnings,
        outcome.frames_over_budget,
        cfg.output_dir.as_deref().unwrap_or(".".as_ref()).display()
    );
}

fn run(command: Command) -> Result<u8, Error> {
    let (mode, common) = match &command {
        Command::AnalyzeBrightfield(c) => (Mode::Brightfield, c),
        Command::AnalyzeFluorescence(c) => (Mode::Fluorescence, c),
        Command::Register(c) => (Mode::Register, c),
        Command::Calibrate(c) => (Mode::Calibrate, c),
        Command::Synth { common, .. } => (Mode::Synth, common),
        Command::Stream { common, .. } => (Mode::Brightfield, common),
    };
    let mut cfg = common.config(mode)?;
    match command {
        Command::Calibrate(_) => {
            cfg.validate()?;
            let out = pipeline::run_calibrate(&cfg)?;
            for d in out.basis.dyes() {
                println!("{:<12} od [{:.4}, {:.4}, {:.4}]", d.name, d.od_vector[0], d.od_vector[1], d.od_vector[2]);
            }
            println!("condition number {:.3}", out.basis.condition_number());
            println!("wrote {}", out.path.display());
            Ok(0)
        }
        Command::Synth { frames, .. } => {
            if let Some(n) = frames {
                cfg.synth.frames = n;
            }
            cfg.validate()?;
            let out = pipeline::run_synth(&cfg)?;
            println!(
                "rendered {} frames and {} background frames -> {}",
                out.frames.len(),
                out.backgrounds.len(),
                cfg.output_dir()?.display()
            );
            Ok(0)
        }
        Command::Stream { analysis, idle_timeout_ms, .. } => {
            if let Some(a) = analysis {
                cfg.stream.analysis = match a {
                    Analysis::Brightfield => Mode::Brightfield,
                    Analysis::Fluorescence => Mode::Fluorescence,
                    Analysis::Register => Mode::Register,
                };
            }
            if idle_timeout_ms.is_some() {
                cfg.stream.idle_timeout_ms = idle_timeout_ms;
            }
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed))
                .map_err(|e| Error::Config(format!("cannot install interrupt handler: {e}")))?;
            let outcome = pipeline::run_stream(&cfg, stop)?;
            report(&outcome, &cfg);
            Ok(outcome.exit_code() as u8)
        }
        _ => {
            let outcome = pipeline::run_batch(&cfg)?;
            report(&outcome, &cfg);
            Ok(outcome.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("icell: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
