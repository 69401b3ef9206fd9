//! Watch-folder frame source.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::{ingest_file, io, Ingested, StreamConfig};

#[derive(Debug, Clone, Copy)]
struct Watch {
    size: u64,
    unchanged: u32,
}

/// Yields frames from a directory as they arrive and settle.
///
/// A file is read once its size has stayed the same for `stable_polls`
/// consecutive polls. Decoding is retried up to `max_retries` times, after
/// which the frame is delivered as failed so it shows up as a warning.
/// Files that settle in the same poll are ordered by natural filename order.
pub struct StreamSource {
    dir: PathBuf,
    poll: Duration,
    stable_polls: u32,
    max_retries: u32,
    idle_timeout: Option<Duration>,
    pitch: Option<f64>,
    stop: Arc<AtomicBool>,
    watching: BTreeMap<PathBuf, Watch>,
    done: HashSet<PathBuf>,
    ready: VecDeque<PathBuf>,
    retries: BTreeMap<PathBuf, u32>,
    next_index: usize,
    last_activity: Instant,
}

impl StreamSource {
    pub fn new(dir: PathBuf, cfg: &StreamConfig, pitch: Option<f64>, stop: Arc<AtomicBool>) -> StreamSource {
        StreamSource {
            dir,
            poll: Duration::from_millis(cfg.poll_ms.max(1)),
            stable_polls: cfg.stable_polls,
            max_retries: cfg.max_retries,
            idle_timeout: cfg.idle_timeout_ms.map(Duration::from_millis),
            pitch,
            stop,
            watching: BTreeMap::new(),
            done: HashSet::new(),
            ready: VecDeque::new(),
            retries: BTreeMap::new(),
            next_index: 0,
            last_activity: Instant::now(),
        }
    }

    fn scan(&mut self) {
        let Ok(files) = io::list_frames(&self.dir) else {
            return;
        };
        let mut settled = Vec::new();
        for path in files {
            if self.done.contains(&path) || self.ready.contains(&path) {
                continue;
            }
            let Ok(size) = std::fs::metadata(&path).map(|m| m.len()) else {
                continue;
            };
            let w = self.watching.entry(path.clone()).or_insert(Watch { size, unchanged: 0 });
            if w.size == size {
                w.unchanged += 1;
            } else {
                *w = Watch { size, unchanged: 0 };
                self.last_activity = Instant::now();
            }
            if size > 0 && w.unchanged >= self.stable_polls.max(1) {
                settled.push(path);
            }
        }
        settled.sort_by(|a, b| io::natural_cmp(&io::file_name(a), &io::file_name(b)));
        for p in settled {
            self.watching.remove(&p);
            self.ready.push_back(p);
        }
    }

    fn idle(&self) -> bool {
        self.idle_timeout
            .is_some_and(|t| self.watching.is_empty() && self.last_activity.elapsed() >= t)
    }
}

impl Iterator for StreamSource {
    type Item = Ingested;

    fn next(&mut self) -> Option<Ingested> {
        loop {
            if self.stop.load(Ordering::Relaxed) {
                return None;
            }
            while let Some(path) = self.ready.pop_front() {
                let item = ingest_file(self.next_index, &path, self.pitch);
                let tries = self.retries.entry(path.clone()).or_insert(0);
                if item.image.is_err() && *tries < self.max_retries {
                    // Possibly still being written; give it another settle cycle.
                    *tries += 1;
                    log::debug!("retrying {} ({} of {})", path.display(), tries, self.max_retries);
                    continue;
                }
                self.retries.remove(&path);
                self.done.insert(path);
                self.next_index += 1;
                self.last_activity = Instant::now();
                return Some(item);
            }
            if self.idle() {
                return None;
            }
            std::thread::sleep(self.poll);
            self.scan();
        }
    }
}
