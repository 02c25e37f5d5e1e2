//! Seeded synthetic scenarios: ground truth, noisy detections with external
//! descriptors, and feature maps in which each target's cells carry its
//! identity vector.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{feature_map_path, write_feature_map, DetectionSource, FrameInput, GtRecord, IngestError, SequenceMeta};
use crate::lite::FeatureMap;
use crate::types::{BBox, Descriptor, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Independent straight-line motion, reflecting off the image border.
    Linear,
    /// Pairs moving towards each other; centers coincide at `crossing_frame`.
    Crossing,
    /// Pairs moving the same way at different speeds; the faster one
    /// overtakes in front of the slower one at `crossing_frame`.
    Occluding,
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Crossing => "crossing",
            Self::Occluding => "occluding",
        })
    }
}

impl FromStr for TrajectoryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "crossing" => Ok(Self::Crossing),
            "occluding" => Ok(Self::Occluding),
            other => Err(format!("unknown trajectory kind {other:?} (expected linear, crossing or occluding)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_targets: usize,
    pub num_frames: u32,
    pub kind: TrajectoryKind,
    /// Minimum pairwise cosine distance between identity vectors, in `[0, 2]`.
    pub appearance_gap: f64,
    /// Gaussian noise on each detection box coordinate, pixels.
    pub box_noise_std: f64,
    /// Gaussian noise on every painted feature-map activation.
    pub descriptor_noise_std: f64,
    /// Gaussian noise on each component of the external (file) descriptors.
    pub external_noise_std: f64,
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
    pub channels: usize,
    pub stride: u32,
    /// Target size in pixels (width, height).
    pub target_size: (f64, f64),
    /// Pixels per frame.
    pub speed: f64,
    /// Frame at which paired targets meet; defaults to the middle of the sequence.
    pub crossing_frame: Option<u32>,
    /// Direction of paired motion relative to the horizontal, degrees.
    pub crossing_angle_deg: f64,
    /// Detections are dropped for targets less visible than this.
    pub min_visibility: f64,
    /// Spurious detections per frame.
    pub clutter_per_frame: usize,
    /// Confidence range of clutter detections.
    pub clutter_confidence: (f64, f64),
    pub frame_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_targets: 2,
            num_frames: 100,
            kind: TrajectoryKind::Crossing,
            appearance_gap: 0.5,
            box_noise_std: 2.0,
            descriptor_noise_std: 0.5,
            external_noise_std: 0.05,
            seed: 0,
            image_width: 320,
            image_height: 240,
            channels: crate::lite::REFERENCE_CHANNELS,
            stride: crate::lite::REFERENCE_STRIDE,
            target_size: (32.0, 80.0),
            speed: 1.5,
            crossing_frame: None,
            crossing_angle_deg: 0.0,
            min_visibility: 0.3,
            clutter_per_frame: 0,
            clutter_confidence: (0.25, 0.5),
            frame_rate: 30.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::Synth(m.to_string()));
        if self.num_targets == 0 || self.num_frames == 0 {
            return bad("num_targets and num_frames must be positive");
        }
        if !(0.0..=2.0).contains(&self.appearance_gap) {
            return bad("appearance_gap must lie in [0, 2]");
        }
        for (name, v) in [
            ("box_noise_std", self.box_noise_std),
            ("descriptor_noise_std", self.descriptor_noise_std),
            ("external_noise_std", self.external_noise_std),
            ("speed", self.speed),
            ("crossing_angle_deg", self.crossing_angle_deg.abs()),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(IngestError::Synth(format!("{name} must be finite and non-negative")));
            }
        }
        if self.channels == 0 || self.stride == 0 || self.image_width < self.stride || self.image_height < self.stride {
            return bad("feature map geometry must be non-empty");
        }
        let (w, h) = self.target_size;
        if !(w > 0.0 && h > 0.0 && w < f64::from(self.image_width) && h < f64::from(self.image_height)) {
            return bad("target_size must be positive and fit inside the image");
        }
        if self.kind != TrajectoryKind::Linear && !self.num_targets.is_multiple_of(2) {
            return bad("crossing and occluding scenarios need an even number of targets");
        }
        let (lo, hi) = self.clutter_confidence;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("clutter_confidence must be an ordered range inside [0, 1]");
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad("frame_rate must be positive");
        }
        Ok(())
    }

    fn crossing_frame(&self) -> u32 {
        self.crossing_frame.unwrap_or(self.num_frames.div_ceil(2))
    }
}

/// A fully determined scenario. Everything derives from `config.seed`; the
/// per-frame random streams depend only on the seed and the frame index, so
/// frames can be produced in any order with identical results.
#[derive(Debug, Clone)]
pub struct SynthScenario {
    config: SynthConfig,
    identities: Vec<Descriptor>,
    /// `centers[target][frame - 1]`
    centers: Vec<Vec<(f64, f64)>>,
    background: Vec<f32>,
    map_width: usize,
    map_height: usize,
}

const STREAM_DETECTIONS: u64 = 1;
const STREAM_FEATURES: u64 = 2;

impl SynthScenario {
    pub fn generate(config: SynthConfig) -> Result<Self, IngestError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let identities = sample_identities(&mut rng, config.num_targets, config.channels, config.appearance_gap)?;
        let centers = match config.kind {
            TrajectoryKind::Linear => linear_paths(&mut rng, &config)?,
            TrajectoryKind::Crossing | TrajectoryKind::Occluding => paired_paths(&config),
        };
        let stride = config.stride as usize;
        let map_width = (config.image_width as usize).div_ceil(stride);
        let map_height = (config.image_height as usize).div_ceil(stride);
        let scenario = Self {
            background: background_pattern(config.channels, map_height, map_width),
            config,
            identities,
            centers,
            map_width,
            map_height,
        };
        scenario.check_spawn()?;
        Ok(scenario)
    }

    fn check_spawn(&self) -> Result<(), IngestError> {
        let boxes: Vec<BBox> = (0..self.identities.len()).map(|t| self.gt_box(t, 1)).collect();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].iou(&boxes[j]) > 0.0 {
                    return Err(IngestError::Synth(format!("targets {i} and {j} overlap at spawn")));
                }
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn meta(&self) -> SequenceMeta {
        SequenceMeta {
            name: format!("synth-{}-{}", self.config.kind, self.config.seed),
            width: self.config.image_width,
            height: self.config.image_height,
            frame_rate: self.config.frame_rate,
            num_frames: self.config.num_frames,
        }
    }

    /// Unit identity vector of `target`.
    pub fn identity(&self, target: usize) -> &Descriptor {
        &self.identities[target]
    }

    pub fn num_targets(&self) -> usize {
        self.identities.len()
    }

    /// Noise-free box of `target` at `frame`.
    pub fn gt_box(&self, target: usize, frame: u32) -> BBox {
        let (cx, cy) = self.centers[target][frame as usize - 1];
        let (w, h) = self.config.target_size;
        BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    fn in_image(&self, b: &BBox) -> bool {
        let (cx, cy) = b.center();
        (0.0..f64::from(self.config.image_width)).contains(&cx) && (0.0..f64::from(self.config.image_height)).contains(&cy)
    }

    /// Fraction of `target`'s box not covered by targets painted in front of it.
    pub fn visibility(&self, target: usize, frame: u32) -> f64 {
        let b = self.gt_box(target, frame);
        let occluders: Vec<BBox> = (target + 1..self.num_targets())
            .map(|t| self.gt_box(t, frame))
            .filter(|o| o.iou(&b) > 0.0)
            .collect();
        1.0 - covered_area(&b, &occluders) / b.area()
    }

    /// Ground truth over all frames; GT id = target index + 1.
    pub fn ground_truth(&self) -> Vec<GtRecord> {
        let mut out = Vec::new();
        for frame in 1..=self.config.num_frames {
            for t in 0..self.num_targets() {
                let bbox = self.gt_box(t, frame);
                if self.in_image(&bbox) {
                    out.push(GtRecord {
                        frame,
                        id: t as i64 + 1,
                        bbox,
                        considered: true,
                        class_id: 1,
                        visibility: self.visibility(t, frame),
                    });
                }
            }
        }
        out
    }

    /// Detections for one frame, each carrying an external descriptor.
    /// Targets below `min_visibility` are missed; clutter follows the targets.
    pub fn detections(&self, frame: u32) -> Vec<Detection> {
        let cfg = &self.config;
        let mut rng = frame_rng(cfg.seed, frame, STREAM_DETECTIONS);
        let box_noise = Normal::new(0.0, cfg.box_noise_std).expect("validated std");
        let mut out = Vec::new();
        for t in 0..self.num_targets() {
            let gt = self.gt_box(t, frame);
            let vis = self.visibility(t, frame);
            if !self.in_image(&gt) || vis < cfg.min_visibility {
                continue;
            }
            let mut jitter = || box_noise.sample(&mut rng);
            let bbox = BBox::new(gt.x + jitter(), gt.y + jitter(), (gt.w + jitter()).max(1.0), (gt.h + jitter()).max(1.0));
            // What an external ReID network would see: the visible part of
            // this target plus whatever covers the rest of its box.
            let mut raw: Vec<f64> = self.identities[t].values().iter().map(|v| v * vis).collect();
            for o in t + 1..self.num_targets() {
                let share = covered_area(&gt, &[self.gt_box(o, frame)]) / gt.area();
                for (r, v) in raw.iter_mut().zip(self.identities[o].values()) {
                    *r += share * v;
                }
            }
            let descriptor = self.noisy_external(&mut rng, raw);
            out.push(Detection::new(frame, bbox, 0.5 + 0.5 * vis).with_descriptor(descriptor));
        }
        let (lo, hi) = cfg.clutter_confidence;
        let (w, h) = cfg.target_size;
        for _ in 0..cfg.clutter_per_frame {
            let x = rng.random_range(0.0..f64::from(cfg.image_width) - w);
            let y = rng.random_range(0.0..f64::from(cfg.image_height) - h);
            let scale = rng.random_range(0.5..1.0);
            let confidence = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let raw = (0..cfg.channels).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let descriptor = self.noisy_external(&mut rng, raw);
            out.push(Detection::new(frame, BBox::new(x, y, w * scale, h * scale), confidence).with_descriptor(descriptor));
        }
        out
    }

    fn noisy_external(&self, rng: &mut ChaCha8Rng, mut raw: Vec<f64>) -> Descriptor {
        let noise = Normal::new(0.0, self.config.external_noise_std).expect("validated std");
        raw.iter_mut().for_each(|v| *v += noise.sample(rng));
        Descriptor::normalized(raw)
    }

    /// All detections of the sequence, ordered by frame.
    pub fn all_detections(&self) -> Vec<Detection> {
        (1..=self.config.num_frames).flat_map(|f| self.detections(f)).collect()
    }

    /// Feature map for one frame: a fixed background pattern, with each
    /// visible target's cells (those whose center falls inside its box)
    /// overwritten by `identity · √C` plus Gaussian noise. Targets with a
    /// higher index are painted later, i.e. in front.
    pub fn feature_map(&self, frame: u32) -> FeatureMap {
        let cfg = &self.config;
        let mut rng = frame_rng(cfg.seed, frame, STREAM_FEATURES);
        let noise = Normal::new(0.0f32, cfg.descriptor_noise_std as f32).expect("validated std");
        let (mw, mh) = (self.map_width, self.map_height);
        let plane = mw * mh;
        let mut data = self.background.clone();
        let s = f64::from(cfg.stride);
        let gain = (cfg.channels as f64).sqrt();
        let cell_span = |lo: f64, hi: f64, limit: usize| {
            let first = (lo / s - 0.5).ceil().max(0.0) as usize;
            let last = ((hi / s - 0.5).ceil().max(0.0) as usize).min(limit);
            first..last.max(first)
        };
        for t in 0..self.num_targets() {
            let b = self.gt_box(t, frame);
            let xs = cell_span(b.x, b.right(), mw);
            let ys = cell_span(b.y, b.bottom(), mh);
            for (c, &u) in self.identities[t].values().iter().enumerate() {
                let level = (u * gain) as f32;
                for y in ys.clone() {
                    let row = c * plane + y * mw;
                    for v in &mut data[row + xs.start..row + xs.end] {
                        *v = level + noise.sample(&mut rng);
                    }
                }
            }
        }
        FeatureMap::new(frame, cfg.channels, mh, mw, cfg.stride, data).expect("dimensions validated")
    }

    /// Lazily generated frames; feature maps are produced only when requested.
    pub fn source(&self, with_features: bool) -> SynthSource<'_> {
        SynthSource {
            scenario: self,
            meta: self.meta(),
            next: 1,
            with_features,
        }
    }

    /// Writes a MOT-style directory: `seqinfo.ini`, `gt/gt.txt`, `det/det.txt`
    /// (with descriptor columns) and, optionally, `features/*.litefm`.
    pub fn write_mot_dir(&self, root: &Path, with_features: bool) -> Result<(), IngestError> {
        let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| IngestError::io(p, e));
        let write = |p: &Path, text: String| fs::write(p, text).map_err(|e| IngestError::io(p, e));
        mkdir(&root.join("gt"))?;
        mkdir(&root.join("det"))?;
        write(&root.join("seqinfo.ini"), super::write_seqinfo(&self.meta()))?;
        write(&root.join("gt").join("gt.txt"), super::write_gt(&self.ground_truth()))?;
        write(&root.join("det").join("det.txt"), super::write_det(&self.all_detections()))?;
        if with_features {
            let dir = root.join("features");
            mkdir(&dir)?;
            for frame in 1..=self.config.num_frames {
                write_feature_map(&feature_map_path(&dir, frame), &self.feature_map(frame))?;
            }
        }
        Ok(())
    }
}

fn frame_rng(seed: u64, frame: u32, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(frame) * 4 + stream);
    rng
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Descriptor {
    loop {
        let d = Descriptor::normalized((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        if !d.is_degenerate() {
            return d;
        }
    }
}

fn sample_identities(rng: &mut ChaCha8Rng, n: usize, dim: usize, gap: f64) -> Result<Vec<Descriptor>, IngestError> {
    const ATTEMPTS: usize = 10_000;
    let mut out: Vec<Descriptor> = Vec::with_capacity(n);
    for _ in 0..ATTEMPTS {
        if out.len() == n {
            break;
        }
        let candidate = random_unit(rng, dim);
        if out.iter().all(|o| 1.0 - o.dot(&candidate) >= gap) {
            out.push(candidate);
        }
    }
    if out.len() < n {
        return Err(IngestError::Synth(format!(
            "could not draw {n} identities of dimension {dim} with pairwise cosine distance ≥ {gap}"
        )));
    }
    Ok(out)
}

fn linear_paths(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Result<Vec<Vec<(f64, f64)>>, IngestError> {
    const ATTEMPTS: usize = 1_000;
    let (w, h) = cfg.target_size;
    let (iw, ih) = (f64::from(cfg.image_width), f64::from(cfg.image_height));
    let mut spawned: Vec<BBox> = Vec::new();
    let mut paths = Vec::new();
    for t in 0..cfg.num_targets {
        let spawn = (0..ATTEMPTS)
            .map(|_| BBox::new(rng.random_range(0.0..iw - w), rng.random_range(0.0..ih - h), w, h))
            .find(|b| spawned.iter().all(|s| s.iou(b) == 0.0))
            .ok_or_else(|| IngestError::Synth(format!("no room to spawn target {t} without overlap")))?;
        spawned.push(spawn);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let (mut vx, mut vy) = (cfg.speed * angle.cos(), cfg.speed * angle.sin());
        let (mut cx, mut cy) = spawn.center();
        let mut path = Vec::with_capacity(cfg.num_frames as usize);
        for _ in 0..cfg.num_frames {
            path.push((cx, cy));
            cx += vx;
            cy += vy;
            if cx - w / 2.0 < 0.0 || cx + w / 2.0 > iw {
                vx = -vx;
                cx = cx.clamp(w / 2.0, iw - w / 2.0);
            }
            if cy - h / 2.0 < 0.0 || cy + h / 2.0 > ih {
                vy = -vy;
                cy = cy.clamp(h / 2.0, ih - h / 2.0);
            }
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Pairs share a meeting point on their own horizontal lane.
fn paired_paths(cfg: &SynthConfig) -> Vec<Vec<(f64, f64)>> {
    let pairs = cfg.num_targets / 2;
    let tc = f64::from(cfg.crossing_frame());
    let theta = cfg.crossing_angle_deg.to_radians();
    let (ux, uy) = (theta.cos(), theta.sin());
    let meet_x = f64::from(cfg.image_width) / 2.0;
    let mut paths = Vec::with_capacity(cfg.num_targets);
    for p in 0..pairs {
        let meet_y = f64::from(cfg.image_height) * (p as f64 + 1.0) / (pairs as f64 + 1.0);
        // (velocity of the back target, velocity of the front target)
        let (back, front) = match cfg.kind {
            TrajectoryKind::Crossing => ((cfg.speed * ux, cfg.speed * uy), (-cfg.speed * ux, cfg.speed * uy)),
            _ => ((0.5 * cfg.speed * ux, 0.5 * cfg.speed * uy), (1.5 * cfg.speed * ux, 1.5 * cfg.speed * uy)),
        };
        for (vx, vy) in [back, front] {
            paths.push(
                (1..=cfg.num_frames)
                    .map(|f| {
                        let dt = f64::from(f) - tc;
                        (meet_x + vx * dt, meet_y + vy * dt)
                    })
                    .collect(),
            );
        }
    }
    paths
}

fn background_pattern(channels: usize, height: usize, width: usize) -> Vec<f32> {
    let mut data = Vec::with_capacity(channels * height * width);
    for c in 0..channels {
        for y in 0..height {
            for x in 0..width {
                let phase = 0.37 * x as f64 + 0.53 * y as f64 + 0.9 * c as f64;
                data.push((0.3 * phase.sin()) as f32);
            }
        }
    }
    data
}

/// Area of `b` covered by the union of `others`, by coordinate compression.
fn covered_area(b: &BBox, others: &[BBox]) -> f64 {
    let clipped: Vec<[f64; 4]> = others
        .iter()
        .map(|o| [o.x.max(b.x), o.y.max(b.y), o.right().min(b.right()), o.bottom().min(b.bottom())])
        .filter(|r| r[0] < r[2] && r[1] < r[3])
        .collect();
    if clipped.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = clipped.iter().flat_map(|r| [r[0], r[2]]).collect();
    let mut ys: Vec<f64> = clipped.iter().flat_map(|r| [r[1], r[3]]).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let (mx, my) = ((xw[0] + xw[1]) / 2.0, (yw[0] + yw[1]) / 2.0);
            if clipped.iter().any(|r| r[0] <= mx && mx < r[2] && r[1] <= my && my < r[3]) {
                area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    area
}

/// [`DetectionSource`] over a scenario, generating each frame on demand.
#[derive(Debug)]
pub struct SynthSource<'a> {
    scenario: &'a SynthScenario,
    meta: SequenceMeta,
    next: u32,
    with_features: bool,
}

impl DetectionSource for SynthSource<'_> {
    fn meta(&self) -> &SequenceMeta {
        &self.meta
    }

    fn next_frame(&mut self) -> Option<Result<FrameInput, IngestError>> {
        if self.next > self.meta.num_frames {
            return None;
        }
        let frame = self.next;
        self.next += 1;
        Some(Ok(FrameInput {
            frame,
            detections: self.scenario.detections(frame),
            feature_map: self.with_features.then(|| self.scenario.feature_map(frame)),
        }))
    }
}
