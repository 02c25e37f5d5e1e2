//! CLEAR-MOT (MOTA, ID switches), identity (IDF1) and HOTA metrics.
//!
//! Sequences are first preprocessed: predictions matched (IoU ≥ 0.5) to
//! distractor ground truth are dropped, then only considered pedestrian
//! ground truth is kept. Every metric is computed from integer-valued or
//! additive counts so that several sequences can be pooled by summing.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use thiserror::Error;

use crate::assignment::{solve, CostMatrix};
use crate::ingest::{GtRecord, ResultRecord};
use crate::types::BBox;

/// Pedestrian class id in MOT ground truth.
pub const PEDESTRIAN_CLASS: i32 = 1;
/// Person on vehicle, static person, distractor, reflection.
pub const DISTRACTOR_CLASSES: [i32; 4] = [2, 7, 8, 12];
/// IoU threshold for CLEAR and identity matching.
pub const MATCH_THRESHOLD: f64 = 0.5;
const EPS: f64 = f64::EPSILON;

/// The localization thresholds 0.05, 0.10, …, 0.95.
pub fn alphas() -> [f64; 19] {
    std::array::from_fn(|i| (i as f64 + 1.0) * 0.05)
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ground truth is empty; metrics are undefined")]
    EmptyGroundTruth,
    #[error("{what} record at frame {frame} lies outside the sequence (1..={num_frames})")]
    FrameOutOfRange { what: &'static str, frame: u32, num_frames: u32 },
}

/// One frame after preprocessing, ids relabelled to dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame {
    pub gt_ids: Vec<usize>,
    pub pred_ids: Vec<usize>,
    /// IoU, `gt × pred`.
    pub similarity: CostMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSequence {
    pub name: String,
    pub frames: Vec<EvalFrame>,
    pub num_gt_ids: usize,
    pub num_pred_ids: usize,
}

fn similarity(gt: &[BBox], pred: &[BBox]) -> CostMatrix {
    CostMatrix::from_fn(gt.len(), pred.len(), |r, c| gt[r].iou(&pred[c]))
}

impl EvalSequence {
    pub fn new(name: impl Into<String>, gt: &[GtRecord], results: &[ResultRecord], num_frames: u32) -> Result<Self, MetricsError> {
        let n = num_frames as usize;
        let mut gt_by_frame: Vec<Vec<&GtRecord>> = vec![Vec::new(); n];
        let mut pred_by_frame: Vec<Vec<&ResultRecord>> = vec![Vec::new(); n];
        for g in gt {
            if g.frame == 0 || g.frame > num_frames {
                return Err(MetricsError::FrameOutOfRange { what: "ground-truth", frame: g.frame, num_frames });
            }
            gt_by_frame[g.frame as usize - 1].push(g);
        }
        for p in results {
            if p.frame == 0 || p.frame > num_frames {
                return Err(MetricsError::FrameOutOfRange { what: "result", frame: p.frame, num_frames });
            }
            pred_by_frame[p.frame as usize - 1].push(p);
        }

        let mut gt_labels: BTreeMap<i64, usize> = BTreeMap::new();
        let mut pred_labels: BTreeMap<i64, usize> = BTreeMap::new();
        let mut raw_frames = Vec::with_capacity(n);
        for (gts, preds) in gt_by_frame.iter().zip(&pred_by_frame) {
            // Drop predictions that match distractors.
            let gt_boxes: Vec<BBox> = gts.iter().map(|g| g.bbox).collect();
            let pred_boxes: Vec<BBox> = preds.iter().map(|p| p.bbox).collect();
            let sim = similarity(&gt_boxes, &pred_boxes);
            let mut keep_pred = vec![true; preds.len()];
            if !gts.is_empty() && !preds.is_empty() {
                let scores = CostMatrix::from_fn(sim.rows(), sim.cols(), |r, c| {
                    let s = sim.get(r, c);
                    if s < MATCH_THRESHOLD - EPS { 0.0 } else { -s }
                });
                for (r, c) in solve(&scores, f64::INFINITY).matches {
                    if -scores.get(r, c) > EPS && DISTRACTOR_CLASSES.contains(&gts[r].class_id) {
                        keep_pred[c] = false;
                    }
                }
            }
            let kept_gt: Vec<&GtRecord> = gts.iter().copied().filter(|g| g.considered && g.class_id == PEDESTRIAN_CLASS).collect();
            let kept_pred: Vec<&ResultRecord> = preds.iter().zip(&keep_pred).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
            for g in &kept_gt {
                gt_labels.entry(g.id).or_insert(0);
            }
            for p in &kept_pred {
                pred_labels.entry(p.id).or_insert(0);
            }
            raw_frames.push((kept_gt, kept_pred));
        }
        // Dense ids in ascending order of the original ids.
        for (i, v) in gt_labels.values_mut().enumerate() {
            *v = i;
        }
        for (i, v) in pred_labels.values_mut().enumerate() {
            *v = i;
        }
        let frames = raw_frames
            .into_iter()
            .map(|(g, p)| {
                let gt_boxes: Vec<BBox> = g.iter().map(|r| r.bbox).collect();
                let pred_boxes: Vec<BBox> = p.iter().map(|r| r.bbox).collect();
                EvalFrame {
                    gt_ids: g.iter().map(|r| gt_labels[&r.id]).collect(),
                    pred_ids: p.iter().map(|r| pred_labels[&r.id]).collect(),
                    similarity: similarity(&gt_boxes, &pred_boxes),
                }
            })
            .collect();
        Ok(Self {
            name: name.into(),
            frames,
            num_gt_ids: gt_labels.len(),
            num_pred_ids: pred_labels.len(),
        })
    }

    pub fn gt_detections(&self) -> u64 {
        self.frames.iter().map(|f| f.gt_ids.len() as u64).sum()
    }

    pub fn pred_detections(&self) -> u64 {
        self.frames.iter().map(|f| f.pred_ids.len() as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClearCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
}

impl ClearCounts {
    pub fn gt_detections(&self) -> u64 {
        self.true_positives + self.false_negatives
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IdentityCounts {
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

/// HOTA counts at one localization threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlphaCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    /// Σ over true positives of the association IoU of their (gt, pred) pair.
    pub ass_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalCounts {
    pub clear: ClearCounts,
    pub identity: IdentityCounts,
    pub hota: [AlphaCounts; 19],
}

impl AddAssign<&EvalCounts> for EvalCounts {
    fn add_assign(&mut self, o: &EvalCounts) {
        self.clear.true_positives += o.clear.true_positives;
        self.clear.false_positives += o.clear.false_positives;
        self.clear.false_negatives += o.clear.false_negatives;
        self.clear.id_switches += o.clear.id_switches;
        self.identity.idtp += o.identity.idtp;
        self.identity.idfp += o.identity.idfp;
        self.identity.idfn += o.identity.idfn;
        for (a, b) in self.hota.iter_mut().zip(&o.hota) {
            a.tp += b.tp;
            a.fn_ += b.fn_;
            a.fp += b.fp;
            a.ass_sum += b.ass_sum;
        }
    }
}

impl Add<&EvalCounts> for EvalCounts {
    type Output = EvalCounts;
    fn add(mut self, o: &EvalCounts) -> EvalCounts {
        self += o;
        self
    }
}

/// Maximum-total matching of a `gt × pred` score matrix.
fn max_matching(scores: &CostMatrix) -> Vec<(usize, usize)> {
    solve(&scores.scaled(-1.0), f64::INFINITY).matches
}

pub fn clear_counts(seq: &EvalSequence) -> ClearCounts {
    let mut c = ClearCounts::default();
    let mut prev_id: Vec<Option<usize>> = vec![None; seq.num_gt_ids];
    let mut prev_timestep: Vec<Option<usize>> = vec![None; seq.num_gt_ids];
    for f in &seq.frames {
        if f.gt_ids.is_empty() {
            c.false_positives += f.pred_ids.len() as u64;
            continue;
        }
        if f.pred_ids.is_empty() {
            c.false_negatives += f.gt_ids.len() as u64;
            continue;
        }
        // Keeping last frame's pairing is worth more than any IoU difference.
        let scores = CostMatrix::from_fn(f.gt_ids.len(), f.pred_ids.len(), |r, k| {
            let s = f.similarity.get(r, k);
            if s < MATCH_THRESHOLD - EPS {
                0.0
            } else {
                let continuing = prev_timestep[f.gt_ids[r]] == Some(f.pred_ids[k]);
                1000.0 * f64::from(u8::from(continuing)) + s
            }
        });
        let matched: Vec<(usize, usize)> = max_matching(&scores)
            .into_iter()
            .filter(|&(r, k)| scores.get(r, k) > EPS)
            .map(|(r, k)| (f.gt_ids[r], f.pred_ids[k]))
            .collect();
        for &(g, p) in &matched {
            if prev_id[g].is_some_and(|q| q != p) {
                c.id_switches += 1;
            }
            prev_id[g] = Some(p);
        }
        prev_timestep.iter_mut().for_each(|v| *v = None);
        for &(g, p) in &matched {
            prev_timestep[g] = Some(p);
        }
        let m = matched.len() as u64;
        c.true_positives += m;
        c.false_negatives += f.gt_ids.len() as u64 - m;
        c.false_positives += f.pred_ids.len() as u64 - m;
    }
    c
}

/// Per-pair counts of frames in which a gt id and a predicted id overlap with IoU ≥ 0.5.
fn overlap_counts(seq: &EvalSequence) -> CostMatrix {
    let mut counts = CostMatrix::filled(seq.num_gt_ids, seq.num_pred_ids, 0.0);
    for f in &seq.frames {
        for (r, &g) in f.gt_ids.iter().enumerate() {
            for (k, &p) in f.pred_ids.iter().enumerate() {
                if f.similarity.get(r, k) >= MATCH_THRESHOLD {
                    counts.set(g, p, counts.get(g, p) + 1.0);
                }
            }
        }
    }
    counts
}

pub fn identity_counts(seq: &EvalSequence) -> IdentityCounts {
    let overlaps = overlap_counts(seq);
    let idtp: f64 = max_matching(&overlaps).iter().map(|&(g, p)| overlaps.get(g, p)).sum();
    let idtp = idtp.round() as u64;
    IdentityCounts {
        idtp,
        idfn: seq.gt_detections() - idtp,
        idfp: seq.pred_detections() - idtp,
    }
}

pub fn hota_counts(seq: &EvalSequence) -> [AlphaCounts; 19] {
    let (ng, np) = (seq.num_gt_ids, seq.num_pred_ids);
    let mut gt_count = vec![0.0f64; ng];
    let mut pred_count = vec![0.0f64; np];
    let mut potential = CostMatrix::filled(ng, np, 0.0);
    for f in &seq.frames {
        let (rows, cols) = (f.gt_ids.len(), f.pred_ids.len());
        let row_sums: Vec<f64> = (0..rows).map(|r| f.similarity.row(r).iter().sum()).collect();
        let col_sums: Vec<f64> = (0..cols).map(|k| (0..rows).map(|r| f.similarity.get(r, k)).sum()).collect();
        for (r, &row_sum) in row_sums.iter().enumerate() {
            for (k, &col_sum) in col_sums.iter().enumerate() {
                let s = f.similarity.get(r, k);
                let denom = row_sum + col_sum - s;
                if denom > EPS {
                    let (g, p) = (f.gt_ids[r], f.pred_ids[k]);
                    potential.set(g, p, potential.get(g, p) + s / denom);
                }
            }
        }
        f.gt_ids.iter().for_each(|&g| gt_count[g] += 1.0);
        f.pred_ids.iter().for_each(|&p| pred_count[p] += 1.0);
    }
    let global = CostMatrix::from_fn(ng, np, |g, p| {
        let v = potential.get(g, p);
        v / (gt_count[g] + pred_count[p] - v)
    });

    let alphas = alphas();
    let mut out = [AlphaCounts::default(); 19];
    let mut matches: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); 19];
    for f in &seq.frames {
        let (rows, cols) = (f.gt_ids.len(), f.pred_ids.len());
        if rows == 0 || cols == 0 {
            for a in &mut out {
                a.fp += cols as u64;
                a.fn_ += rows as u64;
            }
            continue;
        }
        let scores = CostMatrix::from_fn(rows, cols, |r, k| global.get(f.gt_ids[r], f.pred_ids[k]) * f.similarity.get(r, k));
        let pairs = max_matching(&scores);
        for (i, &alpha) in alphas.iter().enumerate() {
            let mut m = 0u64;
            for &(r, k) in &pairs {
                if f.similarity.get(r, k) >= alpha - EPS {
                    m += 1;
                    *matches[i].entry((f.gt_ids[r], f.pred_ids[k])).or_insert(0.0) += 1.0;
                }
            }
            out[i].tp += m;
            out[i].fn_ += rows as u64 - m;
            out[i].fp += cols as u64 - m;
        }
    }
    for (a, m) in out.iter_mut().zip(&matches) {
        a.ass_sum = m
            .iter()
            .map(|(&(g, p), &count)| count * count / (gt_count[g] + pred_count[p] - count).max(1.0))
            .sum();
    }
    out
}

pub fn evaluate(seq: &EvalSequence) -> EvalCounts {
    EvalCounts {
        clear: clear_counts(seq),
        identity: identity_counts(seq),
        hota: hota_counts(seq),
    }
}

/// `1 − (FN + FP + IDSW) / GT`.
pub fn mota_from_counts(c: &ClearCounts) -> Result<f64, MetricsError> {
    let gt = c.gt_detections();
    if gt == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    Ok(1.0 - (c.false_negatives + c.false_positives + c.id_switches) as f64 / gt as f64)
}

/// `2·IDTP / (2·IDTP + IDFP + IDFN)`.
pub fn idf1_from_counts(c: &IdentityCounts) -> f64 {
    let denom = 2 * c.idtp + c.idfp + c.idfn;
    if denom == 0 {
        0.0
    } else {
        2.0 * c.idtp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaScore {
    pub alpha: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
}

impl AlphaScore {
    pub fn from_counts(alpha: f64, c: &AlphaCounts) -> Self {
        let deta = c.tp as f64 / ((c.tp + c.fn_ + c.fp) as f64).max(1.0);
        let assa = c.ass_sum / (c.tp as f64).max(1.0);
        Self { alpha, hota: (deta * assa).sqrt(), deta, assa }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub mota: f64,
    pub idf1: f64,
    pub idsw: u64,
    pub per_alpha: Vec<AlphaScore>,
    pub counts: EvalCounts,
}

impl EvalReport {
    pub fn from_counts(counts: EvalCounts) -> Result<Self, MetricsError> {
        let mota = mota_from_counts(&counts.clear)?;
        let per_alpha: Vec<AlphaScore> = alphas().iter().zip(&counts.hota).map(|(&a, c)| AlphaScore::from_counts(a, c)).collect();
        let mean = |f: fn(&AlphaScore) -> f64| per_alpha.iter().map(f).sum::<f64>() / per_alpha.len() as f64;
        Ok(Self {
            hota: mean(|a| a.hota),
            deta: mean(|a| a.deta),
            assa: mean(|a| a.assa),
            mota,
            idf1: idf1_from_counts(&counts.identity),
            idsw: counts.clear.id_switches,
            per_alpha,
            counts,
        })
    }

    /// Pools sequences by summing their counts.
    pub fn pooled<'a>(counts: impl IntoIterator<Item = &'a EvalCounts>) -> Result<Self, MetricsError> {
        Self::from_counts(counts.into_iter().fold(EvalCounts::default(), |acc, c| acc + c))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts.clear;
        writeln!(
            f,
            "HOTA {:.3}  DetA {:.3}  AssA {:.3}  MOTA {:.3}  IDF1 {:.3}  IDSW {}",
            self.hota * 100.0,
            self.deta * 100.0,
            self.assa * 100.0,
            self.mota * 100.0,
            self.idf1 * 100.0,
            self.idsw
        )?;
        write!(f, "GT {}  TP {}  FP {}  FN {}", c.gt_detections(), c.true_positives, c.false_positives, c.false_negatives)
    }
}

pub fn evaluate_sequence(name: &str, gt: &[GtRecord], results: &[ResultRecord], num_frames: u32) -> Result<(EvalCounts, EvalReport), MetricsError> {
    let seq = EvalSequence::new(name, gt, results, num_frames)?;
    let counts = evaluate(&seq);
    let report = EvalReport::from_counts(counts.clone())?;
    Ok((counts, report))
}

pub fn mota(seq: &EvalSequence) -> Result<f64, MetricsError> {
    mota_from_counts(&clear_counts(seq))
}

pub fn idf1(seq: &EvalSequence) -> Result<f64, MetricsError> {
    if seq.gt_detections() == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    Ok(idf1_from_counts(&identity_counts(seq)))
}

/// `(HOTA, DetA, AssA, per-alpha scores)`.
pub fn hota(seq: &EvalSequence) -> Result<(f64, f64, f64, Vec<AlphaScore>), MetricsError> {
    let r = EvalReport::from_counts(evaluate(seq))?;
    Ok((r.hota, r.deta, r.assa, r.per_alpha))
}

pub fn id_switches(seq: &EvalSequence) -> u64 {
    clear_counts(seq).id_switches
}

/// Metric table: one row per sequence, then the pooled row.
pub const METRICS_CSV_HEADER: [&str; 8] = ["sequence", "HOTA", "IDF1", "MOTA", "AssA", "DetA", "IDSW", "FPS"];

pub fn write_metrics_csv(rows: &[(String, EvalReport, Option<f64>)], pooled: Option<&(EvalReport, Option<f64>)>) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_CSV_HEADER)?;
    let pooled_row = pooled.map(|(r, fps)| ("COMBINED".to_string(), r.clone(), *fps));
    for (name, r, fps) in rows.iter().cloned().chain(pooled_row) {
        w.write_record([
            name,
            format!("{:.6}", r.hota),
            format!("{:.6}", r.idf1),
            format!("{:.6}", r.mota),
            format!("{:.6}", r.assa),
            format!("{:.6}", r.deta),
            r.idsw.to_string(),
            fps.map(|v| format!("{v:.3}")).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
