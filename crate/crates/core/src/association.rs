//! Cost construction and matching strategies shared by the trackers.

use std::collections::VecDeque;

use thiserror::Error;

use crate::assignment::{solve, AssignmentResult, CostMatrix};
use crate::types::{BBox, Descriptor};

/// Cost written into entries that must never be matched. Any cap used for
/// association is far below this.
pub const FORBIDDEN_COST: f64 = 1e5;

/// Cosine cost against a degenerate descriptor or an empty gallery.
pub const MAX_COSINE_COST: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum AssociationError {
    #[error("cost matrix shape {left:?} does not match gating matrix shape {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
}

/// Bounded appearance memory of one track. Oldest entries are evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    owner: u64,
    budget: usize,
    entries: VecDeque<Descriptor>,
}

impl Gallery {
    pub fn new(owner: u64, budget: usize) -> Self {
        Self {
            owner,
            budget: budget.max(1),
            entries: VecDeque::with_capacity(budget.min(256)),
        }
    }

    pub fn owner(&self) -> u64 {
        self.owner
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, d: Descriptor) {
        if self.entries.len() == self.budget {
            self.entries.pop_front();
        }
        self.entries.push_back(d);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Descriptor> {
        self.entries.iter()
    }
}

fn cosine_distance(a: &Descriptor, b: &Descriptor) -> f64 {
    if a.is_degenerate() || b.is_degenerate() || a.dim() != b.dim() {
        return MAX_COSINE_COST;
    }
    (1.0 - a.dot(b)).clamp(0.0, MAX_COSINE_COST)
}

/// Smallest cosine distance from each candidate to any gallery entry.
pub fn cosine_cost(gallery: &Gallery, candidates: &[&Descriptor]) -> Vec<f64> {
    candidates
        .iter()
        .map(|c| {
            gallery
                .iter()
                .map(|g| cosine_distance(g, c))
                .fold(MAX_COSINE_COST, f64::min)
        })
        .collect()
}

/// Replaces every entry whose gating distance exceeds `gate` with [`FORBIDDEN_COST`].
pub fn gated_cost(appearance: &CostMatrix, gating: &CostMatrix, gate: f64) -> Result<CostMatrix, AssociationError> {
    if appearance.rows() != gating.rows() || appearance.cols() != gating.cols() {
        return Err(AssociationError::ShapeMismatch {
            left: (appearance.rows(), appearance.cols()),
            right: (gating.rows(), gating.cols()),
        });
    }
    Ok(CostMatrix::from_fn(appearance.rows(), appearance.cols(), |r, c| {
        let g = gating.get(r, c);
        if g > gate || g.is_nan() {
            FORBIDDEN_COST
        } else {
            appearance.get(r, c)
        }
    }))
}

/// Matching cascade: tracks are matched in order of `time_since_update`
/// (1, 2, …, `max_age_levels`), each level competing only for detections the
/// previous levels left over.
///
/// `cost` is the full tracks × detections matrix (already gated);
/// `time_since_update[i]` belongs to row `i`. Tracks older than
/// `max_age_levels` are never matched here.
pub fn matching_cascade(
    cost: &CostMatrix,
    time_since_update: &[u32],
    cap: f64,
    max_age_levels: u32,
) -> AssignmentResult {
    debug_assert_eq!(cost.rows(), time_since_update.len());
    let mut remaining: Vec<usize> = (0..cost.cols()).collect();
    let mut matches = Vec::new();
    for level in 1..=max_age_levels {
        if remaining.is_empty() {
            break;
        }
        let rows: Vec<usize> = (0..cost.rows()).filter(|&r| time_since_update[r] == level).collect();
        if rows.is_empty() {
            continue;
        }
        let level_result = solve(&cost.select(&rows, &remaining), cap).remap(&rows, &remaining);
        remaining = level_result.unmatched_cols;
        matches.extend(level_result.matches);
    }
    matches.sort_unstable();
    let matched_rows: Vec<bool> = {
        let mut m = vec![false; cost.rows()];
        matches.iter().for_each(|&(r, _)| m[r] = true);
        m
    };
    AssignmentResult {
        matches,
        unmatched_rows: (0..cost.rows()).filter(|&r| !matched_rows[r]).collect(),
        unmatched_cols: remaining,
    }
}

/// `1 − IoU` cost matrix between track boxes (rows) and detection boxes (cols).
pub fn iou_cost(tracks: &[BBox], detections: &[BBox]) -> CostMatrix {
    CostMatrix::from_fn(tracks.len(), detections.len(), |r, c| 1.0 - tracks[r].iou(&detections[c]))
}

/// Assignment over `1 − IoU` with cap `max_iou_distance`.
pub fn iou_match(tracks: &[BBox], detections: &[BBox], max_iou_distance: f64) -> AssignmentResult {
    solve(&iou_cost(tracks, detections), max_iou_distance)
}
