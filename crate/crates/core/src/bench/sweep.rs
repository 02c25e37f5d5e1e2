//! Detector-settings sweep: replays precomputed detections for every
//! (confidence threshold × input resolution × tracker) cell and records
//! accuracy next to whole-pipeline FPS.
//!
//! Per-resolution inputs live under the sequence directory:
//!
//! ```text
//! <sequence>/sweep/<resolution>/det.txt
//! <sequence>/sweep/<resolution>/features/{frame:06}.litefm   (lite-deepsort only)
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{timed_run, BenchReport};
use crate::ingest::{parse_mot_dir_with, ReplaySource};
use crate::metrics::{evaluate_sequence, EvalReport};
use crate::tracker::{Tracker, TrackerConfig, TrackerVariant};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub confidences: Vec<f64>,
    pub resolutions: Vec<String>,
    pub variants: Vec<TrackerVariant>,
    pub sequences: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // a sweep has tens of cells at most
pub enum SweepOutcome {
    Done { eval: EvalReport, bench: BenchReport },
    /// Inputs for this cell were missing or unusable; the sweep carried on.
    Absent { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub tracker: TrackerVariant,
    pub confidence: f64,
    pub resolution: String,
    pub sequence: String,
    pub outcome: SweepOutcome,
}

fn sequence_name(root: &Path) -> String {
    root.file_name().map_or_else(|| root.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn run_cell(root: &Path, variant: TrackerVariant, confidence: f64, resolution: &str, base: &TrackerConfig) -> SweepOutcome {
    let absent = |reason: String| {
        log::warn!("sweep cell {} / {variant} / {confidence} / {resolution} skipped: {reason}", root.display());
        SweepOutcome::Absent { reason }
    };
    let cell_dir = root.join("sweep").join(resolution);
    let det_path = cell_dir.join("det.txt");
    if !det_path.is_file() {
        return absent(format!("missing {}", det_path.display()));
    }
    let features = (variant == TrackerVariant::LiteDeepSort).then(|| cell_dir.join("features"));
    if let Some(f) = &features {
        if !f.is_dir() {
            return absent(format!("missing {}", f.display()));
        }
    }
    let seq = match parse_mot_dir_with(root, Some(&det_path)) {
        Ok(s) => s,
        Err(e) => return absent(e.to_string()),
    };
    let Some(gt) = seq.gt.clone() else {
        return absent(format!("no ground truth under {}", root.display()));
    };
    let config = TrackerConfig { min_confidence: confidence, ..base.clone() };
    let mut tracker = match Tracker::new(variant, config) {
        Ok(t) => t,
        Err(e) => return absent(e.to_string()),
    };
    let meta = seq.meta.clone();
    let mut source = ReplaySource::from_sequence(seq, features);
    let (file, bench) = match timed_run(&mut tracker, &mut source) {
        Ok(r) => r,
        Err(e) => return absent(e.to_string()),
    };
    match evaluate_sequence(&meta.name, &gt, &file.records, meta.num_frames) {
        Ok((_, eval)) => SweepOutcome::Done { eval, bench: bench.with_config("resolution", resolution) },
        Err(e) => absent(e.to_string()),
    }
}

/// Runs every grid cell, `jobs` cells at a time. Each cell is timed serially
/// on its own worker; results come back in grid order
/// (sequence, resolution, confidence, tracker).
pub fn sweep(grid: &SweepGrid, base: &TrackerConfig, jobs: usize) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for root in &grid.sequences {
        for resolution in &grid.resolutions {
            for &confidence in &grid.confidences {
                for &tracker in &grid.variants {
                    cells.push((root, resolution, confidence, tracker));
                }
            }
        }
    }
    let run = |&(root, resolution, confidence, tracker): &(&PathBuf, &String, f64, TrackerVariant)| SweepCell {
        tracker,
        confidence,
        resolution: resolution.clone(),
        sequence: sequence_name(root),
        outcome: run_cell(root, tracker, confidence, resolution, base),
    };
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| cells.par_iter().map(run).collect()),
        Err(e) => {
            log::warn!("could not start worker pool ({e}); running serially");
            cells.iter().map(run).collect()
        }
    }
}

pub const SWEEP_CSV_HEADER: [&str; 10] = ["tracker", "confidence", "resolution", "sequence", "hota", "deta", "assa", "mota", "idf1", "fps"];

/// Long-format table, one row per cell. Absent cells keep their grid
/// coordinates and leave the measurement columns empty.
pub fn write_sweep_csv(cells: &[SweepCell]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER)?;
    for c in cells {
        let mut row = vec![c.tracker.to_string(), c.confidence.to_string(), c.resolution.clone(), c.sequence.clone()];
        match &c.outcome {
            SweepOutcome::Done { eval, bench } => {
                row.extend([eval.hota, eval.deta, eval.assa, eval.mota, eval.idf1, bench.fps].map(|v| v.to_string()));
            }
            SweepOutcome::Absent { .. } => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
