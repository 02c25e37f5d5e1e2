//! Data ingestion: MOT-Challenge directories, feature-map files, frame
//! sources for the trackers, and the synthetic scenario generator.

mod mot;
mod synth;

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::lite::{FeatureMap, FeatureMapError};
use crate::types::Detection;

pub use mot::{
    parse_det, parse_gt, parse_mot_dir, parse_mot_dir_with, parse_results, parse_seqinfo, write_det, write_gt, write_result_line,
    write_results, write_seqinfo, GtRecord, MotSequence, ParseError, ResultRecord,
};
pub(crate) use mot::parse_gt_dir;
pub use synth::{SynthConfig, SynthScenario, SynthSource, TrajectoryKind};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    FeatureMap {
        path: PathBuf,
        #[source]
        source: FeatureMapError,
    },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("invalid synthetic scenario: {0}")]
    Synth(String),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Self::MissingFile(path.to_path_buf())
        } else {
            Self::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub(crate) fn parse(path: &Path, e: ParseError) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            line: e.line,
            message: e.message,
        }
    }
}

/// Sequence-level metadata (`seqinfo.ini`).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub frame_rate: f64,
    pub num_frames: u32,
}

/// Everything the tracker receives for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub frame: u32,
    pub detections: Vec<Detection>,
    pub feature_map: Option<FeatureMap>,
}

/// Ordered producer of frames, contiguous from 1.
///
/// The replay backend reads recorded detections and feature maps; a live
/// detector backend implements the same trait.
pub trait DetectionSource {
    fn meta(&self) -> &SequenceMeta;
    fn next_frame(&mut self) -> Option<Result<FrameInput, IngestError>>;
}

impl<S: DetectionSource + ?Sized> DetectionSource for Box<S> {
    fn meta(&self) -> &SequenceMeta {
        (**self).meta()
    }
    fn next_frame(&mut self) -> Option<Result<FrameInput, IngestError>> {
        (**self).next_frame()
    }
}

/// Frames held in memory.
#[derive(Debug, Clone)]
pub struct MemorySource {
    meta: SequenceMeta,
    frames: VecDeque<FrameInput>,
}

impl MemorySource {
    pub fn new(meta: SequenceMeta, frames: Vec<FrameInput>) -> Self {
        Self {
            meta,
            frames: frames.into(),
        }
    }

    /// Groups detections by frame and fills gaps with empty frames up to `meta.num_frames`.
    pub fn from_detections(meta: SequenceMeta, detections: Vec<Detection>) -> Self {
        let mut by_frame = group_by_frame(detections);
        let frames = (1..=meta.num_frames)
            .map(|f| FrameInput {
                frame: f,
                detections: by_frame.remove(&f).unwrap_or_default(),
                feature_map: None,
            })
            .collect();
        Self::new(meta, frames)
    }
}

impl DetectionSource for MemorySource {
    fn meta(&self) -> &SequenceMeta {
        &self.meta
    }
    fn next_frame(&mut self) -> Option<Result<FrameInput, IngestError>> {
        self.frames.pop_front().map(Ok)
    }
}

fn group_by_frame(detections: Vec<Detection>) -> BTreeMap<u32, Vec<Detection>> {
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(d);
    }
    by_frame
}

/// Replays recorded detections, loading one feature-map file per frame on
/// demand. Past maps are dropped as soon as the frame is handed out.
#[derive(Debug)]
pub struct ReplaySource {
    meta: SequenceMeta,
    detections: BTreeMap<u32, Vec<Detection>>,
    features_dir: Option<PathBuf>,
    next: u32,
}

impl ReplaySource {
    pub fn new(meta: SequenceMeta, detections: Vec<Detection>, features_dir: Option<PathBuf>) -> Self {
        Self {
            meta,
            detections: group_by_frame(detections),
            features_dir,
            next: 1,
        }
    }

    /// Source over a parsed MOT directory.
    pub fn from_sequence(seq: MotSequence, features_dir: Option<PathBuf>) -> Self {
        Self::new(seq.meta, seq.detections, features_dir)
    }
}

impl DetectionSource for ReplaySource {
    fn meta(&self) -> &SequenceMeta {
        &self.meta
    }

    fn next_frame(&mut self) -> Option<Result<FrameInput, IngestError>> {
        if self.next > self.meta.num_frames {
            return None;
        }
        let frame = self.next;
        self.next += 1;
        let feature_map = match &self.features_dir {
            Some(dir) => match read_feature_map(&feature_map_path(dir, frame)) {
                Ok(fm) => Some(fm),
                Err(e) => return Some(Err(e)),
            },
            None => None,
        };
        Some(Ok(FrameInput {
            frame,
            detections: self.detections.remove(&frame).unwrap_or_default(),
            feature_map,
        }))
    }
}

/// `{dir}/{frame:06}.litefm`
pub fn feature_map_path(dir: &Path, frame: u32) -> PathBuf {
    dir.join(format!("{frame:06}.litefm"))
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    FeatureMap::from_bytes(&bytes).map_err(|source| IngestError::FeatureMap {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_feature_map(path: &Path, fm: &FeatureMap) -> Result<(), IngestError> {
    fs::write(path, fm.to_bytes()).map_err(|e| IngestError::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|e| IngestError::io(path, e))
}
