//! Ordered emission of per-frame rows, timing, events, overlays and the run summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::overlay::{cell_label, emit_overlay, text_scale, Annotation};
use super::{io, FrameResult, Mode, Payload, PipelineConfig, StageTimes};
use super::{EVENTS_NDJSON, OVERLAY_DIR, REGISTRATION_CSV, RESULTS_CSV, RUN_META_JSON, SUMMARY_JSON, TIMING_CSV};
use crate::brightfield::diameter_stats;
use crate::error::{Error, Result};
use crate::fluor::{Tracker, Viability};
use crate::registration::FrameAlignment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub frame_index: usize,
    pub read_ms: f64,
    pub register_ms: f64,
    pub segment_ms: f64,
    pub deconvolve_or_morph_ms: f64,
    pub write_ms: f64,
    pub total_ms: f64,
    pub budget_exceeded: bool,
}

impl TimingReport {
    pub fn new(frame_index: usize, t: &StageTimes, budget_ms: f64) -> TimingReport {
        let total = t.total();
        TimingReport {
            frame_index,
            read_ms: t.read,
            register_ms: t.register,
            segment_ms: t.segment,
            deconvolve_or_morph_ms: t.analyze,
            write_ms: t.write,
            total_ms: total,
            budget_exceeded: total > budget_ms,
        }
    }

    pub const CSV_HEADER: &'static str =
        "frame_index,read_ms,register_ms,segment_ms,deconvolve_or_morph_ms,write_ms,total_ms,budget_exceeded";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{}",
            self.frame_index,
            self.read_ms,
            self.register_ms,
            self.segment_ms,
            self.deconvolve_or_morph_ms,
            self.write_ms,
            self.total_ms,
            self.budget_exceeded
        )
    }
}

/// Counts from a finished run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub frames_total: usize,
    pub frames_processed: usize,
    pub warnings: usize,
    pub records: usize,
    pub frames_over_budget: usize,
}

impl RunOutcome {
    /// 0 success, 2 nothing processable, 3 completed with frame warnings.
    pub fn exit_code(&self) -> i32 {
        if self.frames_total > 0 && self.frames_processed == 0 {
            2
        } else if self.warnings > 0 {
            3
        } else {
            0
        }
    }
}

pub fn brightfield_header(dye_names: &[String]) -> String {
    let mut h = String::from("frame_index,droplet_id,cx,cy,area_px2,diameter_px,diameter_um,circularity");
    for d in dye_names {
        write!(h, ",fraction_{d}").unwrap();
    }
    h.push_str(",empty_flag");
    h
}

pub const FLUORESCENCE_HEADER: &str =
    "frame_index,cell_id,track_id,area,perimeter,circularity,mean_green,mean_red,viability_class";
pub const REGISTRATION_HEADER: &str = "frame_index,dx,dy,confidence,gain_r,gain_g,gain_b";

fn registration_row(index: usize, a: &FrameAlignment) -> String {
    let g = |c: usize| a.gains.get(c).or(a.gains.first()).copied().unwrap_or(1.0);
    format!(
        "{index},{:.3},{:.3},{:.4},{:.4},{:.4},{:.4}",
        a.shift.dx,
        a.shift.dy,
        a.shift.confidence,
        g(0),
        g(1),
        g(2)
    )
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

struct Out {
    path: PathBuf,
    w: BufWriter<File>,
}

impl Out {
    fn new(dir: &Path, name: &str, header: Option<&str>) -> Result<Out> {
        let path = dir.join(name);
        let mut out = Out {
            w: create(path.clone())?,
            path,
        };
        if let Some(h) = header {
            out.line(h)?;
        }
        Ok(out)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.w, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Default)]
struct Tally {
    warnings: Vec<serde_json::Value>,
    processed: usize,
    records: usize,
    per_frame_counts: Vec<usize>,
    diameters_px: Vec<f64>,
    diameters_um: Vec<f64>,
    empty_droplets: usize,
    viability: BTreeMap<&'static str, usize>,
    dim: usize,
    field_ratios: Vec<f64>,
    max_abs_shift: f64,
    timings: Vec<TimingReport>,
}

pub(crate) struct Emitter {
    mode: Mode,
    dir: PathBuf,
    budget_ms: f64,
    overlays: bool,
    dye_names: Vec<String>,
    results: Out,
    timing: Out,
    registration: Option<Out>,
    events: Option<Out>,
    tracker: Tracker,
    next: usize,
    pending: BTreeMap<usize, FrameResult>,
    tally: Tally,
}

impl Emitter {
    pub(crate) fn create(
        cfg: &PipelineConfig,
        mode: Mode,
        dir: &Path,
        dye_names: Vec<String>,
        streaming: bool,
    ) -> Result<Emitter> {
        let header = match mode {
            Mode::Brightfield => brightfield_header(&dye_names),
            Mode::Fluorescence => FLUORESCENCE_HEADER.to_string(),
            _ => REGISTRATION_HEADER.to_string(),
        };
        let registration = if cfg.align && mode != Mode::Register {
            Some(Out::new(dir, REGISTRATION_CSV, Some(REGISTRATION_HEADER))?)
        } else {
            None
        };
        let mkdir = |p: PathBuf| std::fs::create_dir_all(&p).map_err(|e| Error::io(p, e));
        if cfg.emit_overlays {
            mkdir(dir.join(OVERLAY_DIR))?;
        }
        if mode == Mode::Register {
            mkdir(dir.join("aligned"))?;
        }
        Ok(Emitter {
            mode,
            dir: dir.to_path_buf(),
            budget_ms: cfg.latency_budget_ms,
            overlays: cfg.emit_overlays,
            dye_names,
            results: Out::new(dir, RESULTS_CSV, Some(&header))?,
            timing: Out::new(dir, TIMING_CSV, Some(TimingReport::CSV_HEADER))?,
            registration,
            events: if streaming {
                Some(Out::new(dir, EVENTS_NDJSON, None)?)
            } else {
                None
            },
            tracker: Tracker::new(cfg.fluorescence.track_radius),
            next: 0,
            pending: BTreeMap::new(),
            tally: Tally::default(),
        })
    }

    /// Buffer a result and emit every frame that is now next in order.
    pub(crate) fn accept(&mut self, r: FrameResult) -> Result<()> {
        self.pending.insert(r.index, r);
        while let Some(r) = self.pending.remove(&self.next) {
            self.emit(r)?;
            self.next += 1;
        }
        Ok(())
    }

    fn emit(&mut self, mut r: FrameResult) -> Result<()> {
        let t = Instant::now();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut header = format!("frame {}", r.index);
        if let Some(a) = &r.alignment {
            write!(header, "  shift ({:.2}, {:.2})", a.shift.dx, a.shift.dy).unwrap();
            self.tally.max_abs_shift = self.tally.max_abs_shift.max(a.shift.dx.abs()).max(a.shift.dy.abs());
        }
        match &r.payload {
            Payload::Droplets(records) => {
                write!(header, "  droplets {}", records.len()).unwrap();
                for d in records {
                    let mut row = format!(
                        "{},{},{:.3},{:.3},{:.0},{:.3},{},{:.4}",
                        r.index,
                        d.id,
                        d.centroid.0,
                        d.centroid.1,
                        d.area,
                        d.diameter_px,
                        d.diameter_um.map(|v| format!("{v:.3}")).unwrap_or_default(),
                        d.circularity
                    );
                    let unmixed = !self.dye_names.is_empty();
                    for name in &self.dye_names {
                        let f = d.dye_fractions.iter().find(|(n, _)| n == name).map_or(0.0, |(_, f)| *f);
                        write!(row, ",{:.2}", 100.0 * f).unwrap();
                    }
                    row.push(',');
                    if unmixed {
                        row.push_str(if d.empty { "1" } else { "0" });
                    }
                    rows.push(row);
                    let mut label = format!("{}: {:.1}", d.id, d.diameter_um.unwrap_or(d.diameter_px));
                    if unmixed && !d.empty {
                        for (n, f) in &d.dye_fractions {
                            write!(label, " {n} {:.1}%", 100.0 * f).unwrap();
                        }
                    }
                    labels.push((d.centroid, label));
                    self.tally.diameters_px.push(d.diameter_px);
                    if let Some(um) = d.diameter_um {
                        self.tally.diameters_um.push(um);
                    }
                    self.tally.empty_droplets += d.empty as usize;
                }
                self.tally.per_frame_counts.push(records.len());
            }
            Payload::Cells(cells) => {
                write!(header, "  cells {}", cells.len()).unwrap();
                let centroids: Vec<_> = cells.iter().map(|c| c.centroid).collect();
                let tracks = self.tracker.assign(&centroids);
                for (c, track) in cells.iter().zip(tracks) {
                    let area = c.area_um2.unwrap_or(c.area);
                    rows.push(format!(
                        "{},{},{},{:.3},{:.3},{:.4},{:.2},{:.2},{}",
                        r.index,
                        c.id,
                        track,
                        area,
                        c.perimeter,
                        c.circularity,
                        c.mean_green,
                        c.mean_red,
                        c.viability.as_str()
                    ));
                    labels.push((c.centroid, cell_label(track, area, c.circularity, c.viability.as_str())));
                    *self.tally.viability.entry(c.viability.as_str()).or_default() += 1;
                    self.tally.dim += c.dim as usize;
                }
                if let Some(ratio) = cells.first().and_then(|c| c.live_fraction_context) {
                    self.tally.field_ratios.push(ratio);
                }
                self.tally.per_frame_counts.push(cells.len());
            }
            Payload::Registration => {
                if let Some(a) = &r.alignment {
                    rows.push(registration_row(r.index, a));
                }
            }
            Payload::Failed => {
                if self.mode == Mode::Fluorescence {
                    self.tracker.assign(&[]);
                }
            }
        }
        let failed = matches!(r.payload, Payload::Failed);
        if !failed {
            self.tally.processed += 1;
            self.tally.records += rows.len();
        }
        for row in &rows {
            self.results.line(row)?;
        }
        self.results.flush()?;
        if let (Some(out), Some(a)) = (&mut self.registration, &r.alignment) {
            out.line(&registration_row(r.index, a))?;
            out.flush()?;
        }
        if let Some(image) = r.image.take() {
            if self.mode == Mode::Register {
                io::write_png(&self.dir.join("aligned").join(format!("frame_{}.png", r.index)), &image)?;
            }
            if self.overlays {
                let scale = text_scale(&image) as f64;
                let annotations: Vec<Annotation> = labels
                    .into_iter()
                    .enumerate()
                    .map(|(i, (c, label))| Annotation {
                        contour: r.contours.get(i).cloned().unwrap_or_default(),
                        anchor: (c.0 - 4.0 * scale, c.1 - 4.0 * scale),
                        label,
                    })
                    .collect();
                let overlay = emit_overlay(&image, &header, &annotations);
                io::write_png(&self.dir.join(OVERLAY_DIR).join(format!("frame_{}.png", r.index)), &overlay)?;
            }
        }
        r.times.write = t.elapsed().as_secs_f64() * 1e3;
        let timing = TimingReport::new(r.index, &r.times, self.budget_ms);
        self.timing.line(&timing.csv_row())?;
        self.timing.flush()?;
        if let Some(w) = &r.warning {
            log::warn!("frame {} ({}): {w}", r.index, r.name);
            self.tally.warnings.push(json!({"frame_index": r.index, "file": r.name, "message": w}));
        }
        if let Some(events) = &mut self.events {
            let ev = json!({
                "event": "frame",
                "frame_index": r.index,
                "file": r.name,
                "records": rows.len(),
                "warning": r.warning,
                "timing": timing,
            });
            events.line(&ev.to_string())?;
            events.flush()?;
        }
        self.tally.timings.push(timing);
        Ok(())
    }

    pub(crate) fn finish(mut self, wall_ms: f64) -> Result<RunOutcome> {
        if !self.pending.is_empty() {
            return Err(Error::Input(format!("frames missing before index {:?}", self.pending.keys().next())));
        }
        let t = &self.tally;
        let frames_total = self.next;
        let mut summary = json!({
            "mode": self.mode.as_str(),
            "frames_total": frames_total,
            "frames_processed": t.processed,
            "warning_count": t.warnings.len(),
            "warnings": t.warnings,
            "records": t.records,
            "latency_budget_ms": self.budget_ms,
        });
        let obj = summary.as_object_mut().expect("object");
        match self.mode {
            Mode::Brightfield => {
                obj.insert("per_frame_counts".into(), json!(t.per_frame_counts));
                let stats = diameter_stats(&t.diameters_px).ok();
                obj.insert(
                    "droplets".into(),
                    json!({
                        "count": t.diameters_px.len(),
                        "empty": t.empty_droplets,
                        "diameter_px": stats,
                        "diameter_um": diameter_stats(&t.diameters_um).ok(),
                    }),
                );
            }
            Mode::Fluorescence => {
                obj.insert("per_frame_counts".into(), json!(t.per_frame_counts));
                let count = |v: Viability| t.viability.get(v.as_str()).copied().unwrap_or(0);
                let mean_ratio = if t.field_ratios.is_empty() {
                    None
                } else {
                    Some(t.field_ratios.iter().sum::<f64>() / t.field_ratios.len() as f64)
                };
                obj.insert(
                    "cells".into(),
                    json!({
                        "count": t.per_frame_counts.iter().sum::<usize>(),
                        "live": count(Viability::Live),
                        "dead": count(Viability::Dead),
                        "ambiguous": count(Viability::Ambiguous),
                        "dim": t.dim,
                        "mean_field_ratio": mean_ratio,
                    }),
                );
            }
            _ => {
                obj.insert("max_abs_shift_px".into(), json!(t.max_abs_shift));
            }
        }
        let path = self.dir.join(SUMMARY_JSON);
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

        let over = t.timings.iter().filter(|x| x.budget_exceeded).count();
        let n = t.timings.len().max(1) as f64;
        let mean = |f: fn(&TimingReport) -> f64| t.timings.iter().map(f).sum::<f64>() / n;
        let meta = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "finished_unix_s": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            "wall_ms": wall_ms,
            "frames_over_budget": over,
            "mean_ms": {
                "read": mean(|x| x.read_ms),
                "register": mean(|x| x.register_ms),
                "segment": mean(|x| x.segment_ms),
                "deconvolve_or_morph": mean(|x| x.deconvolve_or_morph_ms),
                "write": mean(|x| x.write_ms),
                "total": mean(|x| x.total_ms),
            },
            "max_total_ms": t.timings.iter().map(|x| x.total_ms).fold(0.0, f64::max),
        });
        let path = self.dir.join(RUN_META_JSON);
        std::fs::write(&path, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")
            .map_err(|e| Error::io(&path, e))?;
        if let Some(events) = &mut self.events {
            events.line(&json!({"event": "end", "frames": frames_total, "warnings": t.warnings.len()}).to_string())?;
            events.flush()?;
        }
        Ok(RunOutcome {
            frames_total,
            frames_processed: t.processed,
            warnings: t.warnings.len(),
            records: t.records,
            frames_over_budget: over,
        })
    }
}
