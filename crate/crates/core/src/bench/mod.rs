//! Whole-pipeline timing: every frame is split into contiguous stages timed
//! with one monotonic clock, and FPS is always frames over total wall time.

mod overlay;
mod sweep;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::ingest::{write_result_line, DetectionSource, FrameInput, IngestError, ResultRecord};
use crate::tracker::{FrameTracker, TrackOutput, TrackerError};
use crate::types::Detection;

pub use overlay::{id_color, render_overlay, OverlayError, OverlayStats};
pub use sweep::{sweep, write_sweep_csv, SweepCell, SweepGrid, SweepOutcome, SWEEP_CSV_HEADER};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("frame {frame}: {source}")]
    Ingest {
        frame: u32,
        #[source]
        source: IngestError,
    },
    #[error("frame {frame}: {source}")]
    Tracker {
        frame: u32,
        #[source]
        source: TrackerError,
    },
    #[error("clock went backwards during frame {frame}")]
    Clock { frame: u32 },
    #[error("bench report: {0}")]
    Report(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Reading the frame from the source and confidence filtering.
    Pre,
    /// Appearance descriptors.
    Feat,
    /// Kalman predict, association, track update.
    Track,
    /// Formatting output lines.
    Post,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Pre, Stage::Feat, Stage::Track, Stage::Post];
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTiming {
    /// One entry per frame, indexed by `Stage as usize`.
    pub per_frame: Vec<[Duration; 4]>,
    /// Wall time from the first read to the end of the last frame.
    pub total: Duration,
}

impl StageTiming {
    pub fn stage_total(&self, stage: Stage) -> Duration {
        self.per_frame.iter().map(|f| f[stage as usize]).sum()
    }

    pub fn stage_sum(&self) -> Duration {
        Stage::ALL.iter().map(|&s| self.stage_total(s)).sum()
    }

    /// Fraction of total wall time attributed to some stage.
    pub fn coverage(&self) -> f64 {
        if self.total.is_zero() {
            1.0
        } else {
            self.stage_sum().as_secs_f64() / self.total.as_secs_f64()
        }
    }
}

/// Table-2-style row: totals, FPS and the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub sequence: String,
    pub frames: u32,
    pub total_s: f64,
    pub fps: f64,
    /// Seconds per stage, in [`Stage::ALL`] order.
    pub stage_s: [f64; 4],
    pub config: Vec<(String, String)>,
}

impl BenchReport {
    pub fn new(sequence: impl Into<String>, timing: &StageTiming, config: Vec<(String, String)>) -> Self {
        let frames = timing.per_frame.len() as u32;
        let total_s = timing.total.as_secs_f64();
        Self {
            sequence: sequence.into(),
            frames,
            total_s,
            fps: fps(frames, total_s),
            stage_s: Stage::ALL.map(|s| timing.stage_total(s).as_secs_f64()),
            config,
        }
    }

    pub fn with_config(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.config.push((key.into(), value.into()));
        self
    }
}

/// `frames / total_s`; zero when no time elapsed.
pub fn fps(frames: u32, total_s: f64) -> f64 {
    if total_s > 0.0 {
        f64::from(frames) / total_s
    } else {
        0.0
    }
}

pub const BENCH_CSV_FIXED: [&str; 8] = [
    "sequence",
    "frames",
    "total_s",
    "fps",
    "stage_pre_s",
    "stage_feat_s",
    "stage_track_s",
    "stage_post_s",
];

fn bench_header(reports: &[BenchReport]) -> Vec<String> {
    let mut header: Vec<String> = BENCH_CSV_FIXED.iter().map(|s| s.to_string()).collect();
    for r in reports {
        for (k, _) in &r.config {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
    }
    header
}

fn bench_row(r: &BenchReport, header: &[String]) -> Vec<String> {
    let mut row = vec![r.sequence.clone(), r.frames.to_string(), r.total_s.to_string(), r.fps.to_string()];
    row.extend(r.stage_s.iter().map(f64::to_string));
    for key in &header[BENCH_CSV_FIXED.len()..] {
        row.push(r.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap_or_default());
    }
    row
}

/// Bench reports as CSV. Config keys become trailing columns (union over all
/// reports, first-seen order). Floats use shortest round-trip formatting.
pub fn write_bench_csv(reports: &[BenchReport]) -> Result<String, BenchError> {
    let header = bench_header(reports);
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| BenchError::Report(e.to_string());
    w.write_record(&header).map_err(err)?;
    for r in reports {
        w.write_record(bench_row(r, &header)).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Report(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_bench_csv(text: &str) -> Result<Vec<BenchReport>, BenchError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers().map_err(|e| BenchError::Report(e.to_string()))?.iter().map(str::to_string).collect();
    if header.len() < BENCH_CSV_FIXED.len() || header[..BENCH_CSV_FIXED.len()] != BENCH_CSV_FIXED {
        return Err(BenchError::Report(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| BenchError::Report(e.to_string()))?;
        let num = |j: usize| -> Result<f64, BenchError> {
            rec[j].parse().map_err(|_| BenchError::Report(format!("row {}: column {} is not a number: {:?}", i + 1, header[j], &rec[j])))
        };
        let frames = rec[1]
            .parse()
            .map_err(|_| BenchError::Report(format!("row {}: frames is not an integer: {:?}", i + 1, &rec[1])))?;
        out.push(BenchReport {
            sequence: rec[0].to_string(),
            frames,
            total_s: num(2)?,
            fps: num(3)?,
            stage_s: [num(4)?, num(5)?, num(6)?, num(7)?],
            config: header[BENCH_CSV_FIXED.len()..]
                .iter()
                .zip(rec.iter().skip(BENCH_CSV_FIXED.len()))
                .filter(|(_, v)| !v.is_empty())
                .map(|(k, v)| (k.clone(), v.to_string()))
                .collect(),
        });
    }
    Ok(out)
}

/// Appends reports to a CSV file, creating it with a header if needed.
/// Existing rows are never rewritten; the header must match.
pub fn append_bench_csv(path: &Path, reports: &[BenchReport]) -> Result<(), BenchError> {
    let io = |source| BenchError::Io { path: path.to_path_buf(), source };
    let fresh = write_bench_csv(reports)?;
    let (header, rows) = fresh.split_once('\n').unwrap_or((&fresh, ""));
    match fs::read_to_string(path) {
        Ok(existing) => {
            let existing_header = existing.lines().next().unwrap_or_default();
            if existing_header != header {
                return Err(BenchError::Report(format!(
                    "{}: header {existing_header:?} does not match {header:?}",
                    path.display()
                )));
            }
            let mut f = fs::OpenOptions::new().append(true).open(path).map_err(io)?;
            f.write_all(rows.as_bytes()).map_err(io)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => fs::write(path, fresh).map_err(io),
        Err(e) => Err(io(e)),
    }
}

/// Tracker output in MOT result format.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackFile {
    pub records: Vec<ResultRecord>,
    pub text: String,
}

impl TrackFile {
    fn push(&mut self, frame: u32, outputs: Vec<TrackOutput>) {
        for o in outputs {
            let r = ResultRecord { frame, id: o.id as i64, bbox: o.bbox, confidence: o.confidence };
            write_result_line(&mut self.text, &r);
            self.records.push(r);
        }
    }
}

/// Runs `source` through `tracker`, timing every stage with [`Instant`].
pub fn timed_run(
    tracker: &mut dyn FrameTracker,
    source: &mut dyn DetectionSource,
) -> Result<(TrackFile, BenchReport), BenchError> {
    timed_run_with_clock(tracker, source, Instant::now)
}

/// [`timed_run`] with an injectable clock.
///
/// Stages are laps of one stopwatch: each stage ends exactly where the next
/// begins, so only the final end-of-stream poll falls outside the stages.
pub fn timed_run_with_clock(
    tracker: &mut dyn FrameTracker,
    source: &mut dyn DetectionSource,
    mut clock: impl FnMut() -> Instant,
) -> Result<(TrackFile, BenchReport), BenchError> {
    let mut file = TrackFile::default();
    let mut timing = StageTiming::default();
    let start = clock();
    let mut mark = start;
    let mut frame = 0;
    let mut lap = |frame: u32, mark: &mut Instant| -> Result<Duration, BenchError> {
        let now = clock();
        let d = now.checked_duration_since(*mark).ok_or(BenchError::Clock { frame })?;
        *mark = now;
        Ok(d)
    };
    while let Some(next) = source.next_frame() {
        let input: FrameInput = next.map_err(|source| BenchError::Ingest { frame: frame + 1, source })?;
        frame = input.frame;
        let mut detections: Vec<Detection> = tracker.select(&input);
        let pre = lap(frame, &mut mark)?;

        tracker
            .describe(&input, &mut detections)
            .map_err(|source| BenchError::Tracker { frame, source })?;
        let feat = lap(frame, &mut mark)?;

        let outputs = tracker
            .advance(frame, &detections)
            .map_err(|source| BenchError::Tracker { frame, source })?;
        let track = lap(frame, &mut mark)?;

        file.push(frame, outputs);
        drop(input);
        let post = lap(frame, &mut mark)?;
        timing.per_frame.push([pre, feat, track, post]);
    }
    // The end-of-stream poll is the only time not attributed to a stage.
    lap(frame, &mut mark)?;
    timing.total = mark - start;
    let report = BenchReport::new(source.meta().name.clone(), &timing, tracker.config_snapshot());
    Ok((file, report))
}

/// Same pipeline as [`timed_run`] without any clock reads.
pub fn untimed_run(tracker: &mut dyn FrameTracker, source: &mut dyn DetectionSource) -> Result<TrackFile, BenchError> {
    let mut file = TrackFile::default();
    let mut frame = 0;
    while let Some(next) = source.next_frame() {
        let input = next.map_err(|source| BenchError::Ingest { frame: frame + 1, source })?;
        frame = input.frame;
        let mut detections = tracker.select(&input);
        tracker
            .describe(&input, &mut detections)
            .map_err(|source| BenchError::Tracker { frame, source })?;
        let outputs = tracker
            .advance(frame, &detections)
            .map_err(|source| BenchError::Tracker { frame, source })?;
        file.push(frame, outputs);
    }
    Ok(file)
}

/// A tracker that does nothing; isolates the cost of ingestion and timing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopTracker;

impl FrameTracker for NoopTracker {
    fn name(&self) -> String {
        "noop".into()
    }
    fn config_snapshot(&self) -> Vec<(String, String)> {
        vec![("variant".into(), "noop".into())]
    }
    fn select(&self, input: &FrameInput) -> Vec<Detection> {
        input.detections.clone()
    }
    fn describe(&mut self, _: &FrameInput, _: &mut [Detection]) -> Result<(), TrackerError> {
        Ok(())
    }
    fn advance(&mut self, _: u32, _: &[Detection]) -> Result<Vec<TrackOutput>, TrackerError> {
        Ok(Vec::new())
    }
}
