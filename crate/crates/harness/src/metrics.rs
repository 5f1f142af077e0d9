//! Per-episode metrics files.
//!
//! The main CSV is part of the reproducibility contract: identical config and
//! seed must reproduce it byte for byte. Wall-clock time is inherently not
//! reproducible, so the `seconds` column is pinned to `0.0` and real timings
//! go to a `_timing.csv` sidecar that makes no byte-stability promise.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::HarnessError;

pub const METRICS_HEADER: &str = "episode,return,violations_obstacle,violations_battery,seconds";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u32,
    pub ret: f64,
    pub violations_obstacle: u32,
    pub violations_battery: u32,
}

pub struct MetricsWriter {
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    metrics_path: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

impl MetricsWriter {
    /// Creates `<stem>.csv` and `<stem>_timing.csv` under `dir`, headers
    /// included.
    pub fn create(dir: &Path, stem: &str) -> Result<Self, HarnessError> {
        let metrics_path = dir.join(format!("{stem}.csv"));
        let timing_path = dir.join(format!("{stem}_timing.csv"));
        let mut metrics = create(&metrics_path)?;
        let mut timing = create(&timing_path)?;
        let io_err = |e, p: &PathBuf| HarnessError::Io {
            path: p.clone(),
            source: e,
        };
        writeln!(metrics, "{METRICS_HEADER}").map_err(|e| io_err(e, &metrics_path))?;
        writeln!(timing, "episode,seconds").map_err(|e| io_err(e, &timing_path))?;
        Ok(MetricsWriter {
            metrics,
            timing,
            metrics_path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.metrics_path
    }

    /// One episode row, flushed immediately so partial runs stay inspectable.
    pub fn write(&mut self, rec: &EpisodeRecord, seconds: f64) -> Result<(), HarnessError> {
        let io_err = |e| HarnessError::Io {
            path: self.metrics_path.clone(),
            source: e,
        };
        writeln!(
            self.metrics,
            "{},{},{},{},0.0",
            rec.episode, rec.ret, rec.violations_obstacle, rec.violations_battery
        )
        .map_err(io_err)?;
        self.metrics.flush().map_err(io_err)?;
        writeln!(self.timing, "{},{}", rec.episode, seconds).map_err(io_err)?;
        self.timing.flush().map_err(io_err)?;
        Ok(())
    }
}

/// Reads a metrics CSV back; the `seconds` column is ignored.
pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let io_err = |e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let bad = |line: usize, what: &str| {
        HarnessError::Metrics(format!("{}:{line}: {what}", path.display()))
    };
    let file = File::open(path).map_err(io_err)?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h == METRICS_HEADER => {}
        Some(Ok(h)) => return Err(bad(1, &format!("unexpected header {h:?}"))),
        Some(Err(e)) => return Err(io_err(e)),
        None => return Err(bad(1, "empty file")),
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(k + 2, "expected 5 fields"));
        }
        let parse = |s: &str, what: &str| -> Result<f64, HarnessError> {
            s.parse().map_err(|_| bad(k + 2, &format!("bad {what} {s:?}")))
        };
        out.push(EpisodeRecord {
            episode: parse(fields[0], "episode")? as u32,
            ret: parse(fields[1], "return")?,
            violations_obstacle: parse(fields[2], "violation count")? as u32,
            violations_battery: parse(fields[3], "violation count")? as u32,
        });
    }
    Ok(out)
}
