//! Track lifecycle and the three tracker compositions: motion-only SORT,
//! DeepSORT with externally supplied descriptors, and LITE:DeepSORT with
//! descriptors pooled from the detector's feature map.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::association::{cosine_cost, gated_cost, iou_match, matching_cascade, Gallery, MAX_COSINE_COST};
use crate::assignment::{AssignmentResult, CostMatrix};
use crate::bench::{self, BenchError, BenchReport, TrackFile};
use crate::ingest::{DetectionSource, FrameInput};
use crate::kalman::{KalmanConfig, KalmanError, KalmanFilter, KalmanState, CHI2_95_4DOF};
use crate::lite::attach_descriptors;
use crate::types::{BBox, Descriptor, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackerVariant {
    Sort,
    DeepSort,
    LiteDeepSort,
}

impl TrackerVariant {
    pub const ALL: [TrackerVariant; 3] = [Self::Sort, Self::DeepSort, Self::LiteDeepSort];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sort => "sort",
            Self::DeepSort => "deepsort",
            Self::LiteDeepSort => "lite-deepsort",
        }
    }

    pub fn uses_appearance(self) -> bool {
        self != Self::Sort
    }
}

impl fmt::Display for TrackerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackerVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown tracker variant {s:?} (expected sort, deepsort or lite-deepsort)"))
    }
}

/// Which box a track reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    /// Kalman posterior mean converted back to `tlwh`.
    Posterior,
    /// The detection box that updated the track this frame.
    Detection,
}

impl FromStr for OutputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "posterior" => Ok(Self::Posterior),
            "detection" => Ok(Self::Detection),
            _ => Err(format!("unknown output mode {s:?} (expected posterior or detection)")),
        }
    }
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Posterior => "posterior",
            Self::Detection => "detection",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Consecutive hits before a tentative track is confirmed.
    pub n_init: u32,
    /// Frames a confirmed track may go unmatched before deletion.
    pub max_age: u32,
    pub min_confidence: f64,
    pub max_iou_distance: f64,
    pub max_cosine_distance: f64,
    pub gallery_budget: usize,
    /// Squared Mahalanobis distance above which a track/detection pair is forbidden.
    pub gating_threshold: f64,
    pub kalman: KalmanConfig,
    pub output: OutputMode,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            n_init: 3,
            max_age: 30,
            min_confidence: 0.25,
            max_iou_distance: 0.7,
            max_cosine_distance: 0.2,
            gallery_budget: 100,
            gating_threshold: CHI2_95_4DOF,
            kalman: KalmanConfig::default(),
            output: OutputMode::Posterior,
        }
    }
}

impl TrackerConfig {
    /// Keys accepted by [`TrackerConfig::set`], in snapshot order.
    pub const KEYS: [&'static str; 10] = [
        "n_init",
        "max_age",
        "min_confidence",
        "max_iou_distance",
        "max_cosine_distance",
        "gallery_budget",
        "gating_threshold",
        "std_weight_position",
        "std_weight_velocity",
        "output_mode",
    ];

    pub fn validate(&self) -> Result<(), TrackerError> {
        let fail = |m: String| Err(TrackerError::Config(m));
        if self.n_init == 0 || self.max_age == 0 || self.gallery_budget == 0 {
            return fail("n_init, max_age and gallery_budget must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return fail(format!("min_confidence {} outside [0, 1]", self.min_confidence));
        }
        for (name, v, hi) in [
            ("max_iou_distance", self.max_iou_distance, 1.0),
            ("max_cosine_distance", self.max_cosine_distance, MAX_COSINE_COST),
            ("gating_threshold", self.gating_threshold, f64::INFINITY),
            ("std_weight_position", self.kalman.std_weight_position, f64::INFINITY),
            ("std_weight_velocity", self.kalman.std_weight_velocity, f64::INFINITY),
        ] {
            if !(v > 0.0 && v <= hi) || v.is_nan() {
                return fail(format!("{name} {v} must be positive (and at most {hi})"));
            }
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.trim().parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
        }
        match key {
            "n_init" => self.n_init = num(key, value)?,
            "max_age" => self.max_age = num(key, value)?,
            "min_confidence" => self.min_confidence = num(key, value)?,
            "max_iou_distance" => self.max_iou_distance = num(key, value)?,
            "max_cosine_distance" => self.max_cosine_distance = num(key, value)?,
            "gallery_budget" => self.gallery_budget = num(key, value)?,
            "gating_threshold" => self.gating_threshold = num(key, value)?,
            "std_weight_position" => self.kalman.std_weight_position = num(key, value)?,
            "std_weight_velocity" => self.kalman.std_weight_velocity = num(key, value)?,
            "output_mode" => self.output = value.trim().parse()?,
            _ => return Err(format!("unknown tracker setting {key:?}")),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`; parsing the values back with
    /// [`TrackerConfig::set`] reproduces the config exactly.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        let values = [
            self.n_init.to_string(),
            self.max_age.to_string(),
            self.min_confidence.to_string(),
            self.max_iou_distance.to_string(),
            self.max_cosine_distance.to_string(),
            self.gallery_budget.to_string(),
            self.gating_threshold.to_string(),
            self.kalman.std_weight_position.to_string(),
            self.kalman.std_weight_velocity.to_string(),
            self.output.to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("frame {frame}: lite-deepsort needs a feature map for every frame")]
    MissingFeatureMap { frame: u32 },
    #[error("frame {frame}: feature map is labelled frame {map_frame}")]
    FeatureMapFrame { frame: u32, map_frame: u32 },
    #[error("frame {frame}: detection {index} has no external descriptor")]
    MissingDescriptor { frame: u32, index: usize },
    #[error("frame {got} received after frame {previous}; frames must strictly increase")]
    Sequencing { previous: u32, got: u32 },
    #[error("frame {frame}, track {track}: {source}")]
    Kalman {
        frame: u32,
        track: u64,
        #[source]
        source: KalmanError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    pub kalman: KalmanState,
    pub gallery: Gallery,
    pub hits: u32,
    /// Frames since creation.
    pub age: u32,
    pub time_since_update: u32,
    last_detection: Option<(BBox, f64)>,
}

impl Track {
    pub fn bbox(&self) -> BBox {
        BBox::from_xyah(self.kalman.measurement())
    }

    pub fn is_confirmed(&self) -> bool {
        self.state == TrackState::Confirmed
    }
}

/// One reported track position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub id: u64,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Source of externally computed appearance descriptors.
pub trait ExternalReid: Send {
    fn describe(&mut self, frame: u32, detections: &mut [Detection]) -> Result<(), TrackerError>;
}

/// Descriptors precomputed and stored alongside the detections
/// (trailing columns of `det.txt`).
#[derive(Debug, Clone, Copy, Default)]
pub struct FileDescriptors;

impl ExternalReid for FileDescriptors {
    fn describe(&mut self, frame: u32, detections: &mut [Detection]) -> Result<(), TrackerError> {
        match detections.iter().position(|d| d.descriptor.is_none()) {
            Some(index) => Err(TrackerError::MissingDescriptor { frame, index }),
            None => Ok(()),
        }
    }
}

/// File descriptors plus a fixed per-frame delay standing in for the
/// inference time of a separate ReID network.
#[derive(Debug, Clone, Copy)]
pub struct SimulatedReid {
    pub per_frame: Duration,
}

impl ExternalReid for SimulatedReid {
    fn describe(&mut self, frame: u32, detections: &mut [Detection]) -> Result<(), TrackerError> {
        std::thread::sleep(self.per_frame);
        FileDescriptors.describe(frame, detections)
    }
}

/// The per-frame pipeline split into the stages that the benchmark times.
pub trait FrameTracker {
    fn name(&self) -> String;
    fn config_snapshot(&self) -> Vec<(String, String)>;
    /// Detections that enter association.
    fn select(&self, input: &FrameInput) -> Vec<Detection>;
    /// Attaches appearance descriptors.
    fn describe(&mut self, input: &FrameInput, detections: &mut [Detection]) -> Result<(), TrackerError>;
    /// Predict, associate, update; returns tracks to report for this frame.
    fn advance(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackOutput>, TrackerError>;
}

pub struct Tracker {
    variant: TrackerVariant,
    config: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
    reid: Box<dyn ExternalReid>,
}

impl fmt::Debug for Tracker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tracker")
            .field("variant", &self.variant)
            .field("config", &self.config)
            .field("tracks", &self.tracks.len())
            .field("next_id", &self.next_id)
            .finish()
    }
}

impl Tracker {
    /// The DeepSORT variant reads descriptors attached to detections.
    pub fn new(variant: TrackerVariant, config: TrackerConfig) -> Result<Self, TrackerError> {
        Self::with_reid(variant, config, Box::new(FileDescriptors))
    }

    pub fn with_reid(
        variant: TrackerVariant,
        config: TrackerConfig,
        reid: Box<dyn ExternalReid>,
    ) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            variant,
            kf: KalmanFilter::new(config.kalman),
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            reid,
        })
    }

    pub fn variant(&self) -> TrackerVariant {
        self.variant
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live (not deleted) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Runs all stages for one frame.
    pub fn step(&mut self, input: &FrameInput) -> Result<Vec<TrackOutput>, TrackerError> {
        let mut detections = self.select(input);
        self.describe(input, &mut detections)?;
        self.advance(input.frame, &detections)
    }

    fn associate(&self, detections: &[Detection]) -> Result<AssignmentResult, TrackerError> {
        let det_boxes: Vec<BBox> = detections.iter().map(|d| d.bbox).collect();
        if self.variant == TrackerVariant::Sort {
            let track_boxes: Vec<BBox> = self.tracks.iter().map(Track::bbox).collect();
            return Ok(iou_match(&track_boxes, &det_boxes, self.config.max_iou_distance));
        }

        let confirmed: Vec<usize> = (0..self.tracks.len()).filter(|&i| self.tracks[i].is_confirmed()).collect();
        let fallback = Descriptor::degenerate(0);
        let descriptors: Vec<&Descriptor> = detections.iter().map(|d| d.descriptor.as_ref().unwrap_or(&fallback)).collect();
        let measurements: Vec<_> = detections.iter().map(|d| d.bbox.to_xyah()).collect();
        let mut appearance = CostMatrix::filled(confirmed.len(), detections.len(), 0.0);
        let mut gating = CostMatrix::filled(confirmed.len(), detections.len(), 0.0);
        for (r, &t) in confirmed.iter().enumerate() {
            let track = &self.tracks[t];
            let costs = cosine_cost(&track.gallery, &descriptors);
            let dists = self
                .kf
                .gating_distance(&track.kalman, &measurements)
                .map_err(|source| TrackerError::Kalman { frame: self.last_frame.unwrap_or(0), track: track.id, source })?;
            for c in 0..detections.len() {
                appearance.set(r, c, costs[c]);
                gating.set(r, c, dists[c]);
            }
        }
        let cost = gated_cost(&appearance, &gating, self.config.gating_threshold).expect("matrices built with equal shapes");
        let tsu: Vec<u32> = confirmed.iter().map(|&t| self.tracks[t].time_since_update).collect();
        let cascade = matching_cascade(&cost, &tsu, self.config.max_cosine_distance, self.config.max_age)
            .remap(&confirmed, &(0..detections.len()).collect::<Vec<_>>());

        // IoU fallback: unconfirmed tracks plus cascade leftovers that were
        // matched last frame.
        let mut candidates: Vec<usize> = (0..self.tracks.len()).filter(|&i| !self.tracks[i].is_confirmed()).collect();
        candidates.extend(cascade.unmatched_rows.iter().copied().filter(|&t| self.tracks[t].time_since_update == 1));
        candidates.sort_unstable();
        let cand_boxes: Vec<BBox> = candidates.iter().map(|&t| self.tracks[t].bbox()).collect();
        let left_boxes: Vec<BBox> = cascade.unmatched_cols.iter().map(|&c| det_boxes[c]).collect();
        let fallback = iou_match(&cand_boxes, &left_boxes, self.config.max_iou_distance).remap(&candidates, &cascade.unmatched_cols);

        let mut matches = cascade.matches;
        matches.extend(fallback.matches);
        matches.sort_unstable();
        let mut row_matched = vec![false; self.tracks.len()];
        let mut col_matched = vec![false; detections.len()];
        for &(r, c) in &matches {
            row_matched[r] = true;
            col_matched[c] = true;
        }
        Ok(AssignmentResult {
            matches,
            unmatched_rows: (0..self.tracks.len()).filter(|&r| !row_matched[r]).collect(),
            unmatched_cols: (0..detections.len()).filter(|&c| !col_matched[c]).collect(),
        })
    }

    fn spawn(&mut self, detection: &Detection) {
        let id = self.next_id;
        self.next_id += 1;
        let mut gallery = Gallery::new(id, self.config.gallery_budget);
        if let Some(d) = &detection.descriptor {
            gallery.push(d.clone());
        }
        let state = if self.config.n_init <= 1 { TrackState::Confirmed } else { TrackState::Tentative };
        self.tracks.push(Track {
            id,
            state,
            kalman: self.kf.initiate(detection.bbox.to_xyah()),
            gallery,
            hits: 1,
            age: 1,
            time_since_update: 0,
            last_detection: Some((detection.bbox, detection.confidence)),
        });
    }
}

impl FrameTracker for Tracker {
    fn name(&self) -> String {
        self.variant.to_string()
    }

    fn config_snapshot(&self) -> Vec<(String, String)> {
        let mut s = vec![("variant".to_string(), self.variant.to_string())];
        s.extend(self.config.snapshot());
        s
    }

    fn select(&self, input: &FrameInput) -> Vec<Detection> {
        input
            .detections
            .iter()
            .filter(|d| d.confidence >= self.config.min_confidence)
            .cloned()
            .collect()
    }

    fn describe(&mut self, input: &FrameInput, detections: &mut [Detection]) -> Result<(), TrackerError> {
        match self.variant {
            TrackerVariant::Sort => Ok(()),
            TrackerVariant::DeepSort => self.reid.describe(input.frame, detections),
            TrackerVariant::LiteDeepSort => {
                let fm = input.feature_map.as_ref().ok_or(TrackerError::MissingFeatureMap { frame: input.frame })?;
                if fm.frame() != input.frame {
                    return Err(TrackerError::FeatureMapFrame { frame: input.frame, map_frame: fm.frame() });
                }
                attach_descriptors(fm, detections);
                Ok(())
            }
        }
    }

    fn advance(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackOutput>, TrackerError> {
        if let Some(previous) = self.last_frame {
            if frame <= previous {
                return Err(TrackerError::Sequencing { previous, got: frame });
            }
        }
        self.last_frame = Some(frame);

        for t in &mut self.tracks {
            t.kalman = self.kf.predict(&t.kalman);
            t.age += 1;
            t.time_since_update += 1;
            t.last_detection = None;
        }

        let result = self.associate(detections)?;

        for &(r, c) in &result.matches {
            let det = &detections[c];
            let track = &mut self.tracks[r];
            track.kalman = self
                .kf
                .update(&track.kalman, det.bbox.to_xyah())
                .map_err(|source| TrackerError::Kalman { frame, track: track.id, source })?;
            if let Some(d) = &det.descriptor {
                track.gallery.push(d.clone());
            }
            track.hits += 1;
            track.time_since_update = 0;
            track.last_detection = Some((det.bbox, det.confidence));
            if track.state == TrackState::Tentative && track.hits >= self.config.n_init {
                track.state = TrackState::Confirmed;
            }
        }
        for &r in &result.unmatched_rows {
            let track = &mut self.tracks[r];
            if track.state == TrackState::Tentative || track.time_since_update > self.config.max_age {
                track.state = TrackState::Deleted;
            }
        }
        for &c in &result.unmatched_cols {
            self.spawn(&detections[c]);
        }
        self.tracks.retain(|t| t.state != TrackState::Deleted);

        let mode = self.config.output;
        let mut out: Vec<TrackOutput> = self
            .tracks
            .iter()
            .filter(|t| t.is_confirmed() && t.time_since_update == 0)
            .filter_map(|t| {
                let (det_box, confidence) = t.last_detection?;
                let bbox = match mode {
                    OutputMode::Posterior => t.bbox(),
                    OutputMode::Detection => det_box,
                };
                Some(TrackOutput { id: t.id, bbox, confidence })
            })
            .collect();
        out.sort_by_key(|o| o.id);
        Ok(out)
    }
}

/// Runs a whole sequence through `tracker` with stage timing.
pub fn run_sequence(
    tracker: &mut dyn FrameTracker,
    source: &mut dyn DetectionSource,
) -> Result<(TrackFile, BenchReport), BenchError> {
    bench::timed_run(tracker, source)
}
