//! Independent reference implementations used as test oracles. They share
//! no code with the library beyond plain data types: dense `Vec` matrices,
//! naive loops and exhaustive search throughout.
#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

use std::collections::BTreeMap;

use lite_mot::ingest::{GtRecord, ResultRecord};
use lite_mot::types::BBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn diag(v: &[f64]) -> Mat {
    let mut m = zeros(v.len(), v.len());
    for (i, &x) in v.iter().enumerate() {
        m[i][i] = x;
    }
    m
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let mut out = zeros(a[0].len(), a.len());
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j][i] = v;
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
}

pub fn col(v: &[f64]) -> Mat {
    v.iter().map(|&x| vec![x]).collect()
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.iter().zip(eye(n)).map(|(r, e)| r.iter().copied().chain(e).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let pivot = m[c][c];
        assert!(pivot.abs() > 1e-300, "singular matrix");
        for v in m[c].iter_mut() {
            *v /= pivot;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Constant-velocity Kalman filter, written from the textbook equations
// ---------------------------------------------------------------------------

pub struct DenseKalman {
    pub wp: f64,
    pub wv: f64,
}

impl DenseKalman {
    fn f(&self) -> Mat {
        let mut f = eye(8);
        for i in 0..4 {
            f[i][i + 4] = 1.0;
        }
        f
    }

    fn h(&self) -> Mat {
        let mut h = zeros(4, 8);
        for i in 0..4 {
            h[i][i] = 1.0;
        }
        h
    }

    pub fn predict(&self, mean: &[f64], cov: &Mat) -> (Vec<f64>, Mat) {
        let h = mean[3];
        let sp = self.wp * h;
        let sv = self.wv * h;
        let q = diag(&[sp * sp, sp * sp, 1e-4, sp * sp, sv * sv, sv * sv, 1e-10, sv * sv]);
        let f = self.f();
        let m = mul(&f, &col(mean)).into_iter().map(|r| r[0]).collect();
        let p = add(&mul(&mul(&f, cov), &transpose(&f)), &q);
        (m, p)
    }

    fn innovation_cov(&self, mean: &[f64], cov: &Mat) -> Mat {
        let sp = self.wp * mean[3];
        let r = diag(&[sp * sp, sp * sp, 1e-2, sp * sp]);
        let h = self.h();
        add(&mul(&mul(&h, cov), &transpose(&h)), &r)
    }

    pub fn update(&self, mean: &[f64], cov: &Mat, z: [f64; 4]) -> (Vec<f64>, Mat) {
        let h = self.h();
        let s = self.innovation_cov(mean, cov);
        let k = mul(&mul(cov, &transpose(&h)), &inverse(&s));
        let y: Vec<f64> = (0..4).map(|i| z[i] - mean[i]).collect();
        let ky = mul(&k, &col(&y));
        let m = mean.iter().zip(&ky).map(|(a, b)| a + b[0]).collect();
        // Joseph-free form (I − K·H)·P.
        let p = mul(&sub(&eye(8), &mul(&k, &h)), cov);
        (m, p)
    }

    pub fn gating(&self, mean: &[f64], cov: &Mat, z: [f64; 4]) -> f64 {
        let s_inv = inverse(&self.innovation_cov(mean, cov));
        let d: Vec<f64> = (0..4).map(|i| z[i] - mean[i]).collect();
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += d[i] * s_inv[i][j] * d[j];
            }
        }
        acc
    }
}

/// A random plausible track state: box-sized mean and an SPD covariance.
pub fn random_state(rng: &mut ChaCha8Rng) -> (Vec<f64>, Mat) {
    let mean = vec![
        rng.random_range(0.0..1000.0),
        rng.random_range(0.0..600.0),
        rng.random_range(0.2..1.0),
        rng.random_range(20.0..200.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-0.01..0.01),
        rng.random_range(-2.0..2.0),
    ];
    let a: Mat = (0..8).map(|_| (0..8).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut p = mul(&a, &transpose(&a));
    for (i, row) in p.iter_mut().enumerate() {
        row[i] += 0.5;
    }
    (mean, p)
}

// ---------------------------------------------------------------------------
// Feature-map pooling
// ---------------------------------------------------------------------------

/// Scalar double loop over a channel-major `c × h × w` buffer.
pub fn pool_naive(data: &[f32], c: usize, h: usize, w: usize, left: usize, top: usize, right: usize, bottom: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for (ch, o) in out.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in top..bottom {
            for x in left..right {
                sum += f64::from(data[ch * h * w + y * w + x]);
                n += 1.0;
            }
        }
        *o = sum / n;
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    out.iter().map(|v| v / norm).collect()
}

// ---------------------------------------------------------------------------
// Tracking metrics from their definitions, with exhaustive matching
// ---------------------------------------------------------------------------

/// Maximum-total-weight matching by exhaustive search over full assignments
/// (`min(rows, cols)` pairs). Ties go to the lexicographically smallest
/// row-ordered column sequence, with "unmatched" ranking after every column;
/// enumeration runs in that order and keeps the first optimum it meets.
/// Pairs of zero weight are dropped from the result.
pub fn best_matching(w: &Mat, cols: usize) -> Vec<(usize, usize)> {
    struct Search<'a> {
        w: &'a Mat,
        used: Vec<bool>,
        skips_left: usize,
        cur: Vec<(usize, usize)>,
        best: Option<(f64, Vec<(usize, usize)>)>,
    }
    fn go(s: &mut Search, row: usize, cur_w: f64) {
        if row == s.w.len() {
            let better = match &s.best {
                None => true,
                Some((b, _)) => cur_w > b + 1e-9 * b.abs().max(1.0),
            };
            if better {
                s.best = Some((cur_w, s.cur.clone()));
            }
            return;
        }
        for c in 0..s.used.len() {
            if !s.used[c] {
                s.used[c] = true;
                s.cur.push((row, c));
                go(s, row + 1, cur_w + s.w[row][c]);
                s.cur.pop();
                s.used[c] = false;
            }
        }
        if s.skips_left > 0 {
            s.skips_left -= 1;
            go(s, row + 1, cur_w);
            s.skips_left += 1;
        }
    }
    let rows = w.len();
    let mut s = Search { w, used: vec![false; cols], skips_left: rows.saturating_sub(cols), cur: Vec::new(), best: None };
    go(&mut s, 0, 0.0);
    s.best.map(|(_, m)| m).unwrap_or_default().into_iter().filter(|&(r, c)| w[r][c] > 0.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub idsw: u64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
    /// Per localization threshold: (TP, FN, FP, DetA, AssA, HOTA).
    pub per_alpha: Vec<(u64, u64, u64, f64, f64, f64)>,
    /// CLEAR matches as (frame, gt id, predicted id).
    pub matches: Vec<(u32, i64, i64)>,
    pub mota: f64,
    pub idf1: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
}

struct Frame {
    gt: Vec<(i64, BBox)>,
    pred: Vec<(i64, BBox)>,
}

fn iou_naive(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn frames(gt: &[GtRecord], results: &[ResultRecord], num_frames: u32) -> Vec<Frame> {
    const DISTRACTORS: [i32; 4] = [2, 7, 8, 12];
    let eps = f64::EPSILON;
    (1..=num_frames)
        .map(|f| {
            let g: Vec<&GtRecord> = gt.iter().filter(|r| r.frame == f).collect();
            let mut p: Vec<&ResultRecord> = results.iter().filter(|r| r.frame == f).collect();
            // Predictions claimed by a distractor are not counted at all.
            let w: Mat = g
                .iter()
                .map(|gr| {
                    p.iter()
                        .map(|pr| {
                            let s = iou_naive(&gr.bbox, &pr.bbox);
                            if s < 0.5 - eps { 0.0 } else { s }
                        })
                        .collect()
                })
                .collect();
            let drop: Vec<usize> = best_matching(&w, p.len())
                .into_iter()
                .filter(|&(r, _)| DISTRACTORS.contains(&g[r].class_id))
                .map(|(_, c)| c)
                .collect();
            let mut k = 0;
            p.retain(|_| {
                k += 1;
                !drop.contains(&(k - 1))
            });
            Frame {
                gt: g.iter().filter(|r| r.considered && r.class_id == 1).map(|r| (r.id, r.bbox)).collect(),
                pred: p.iter().map(|r| (r.id, r.bbox)).collect(),
            }
        })
        .collect()
}

pub fn oracle_metrics(gt: &[GtRecord], results: &[ResultRecord], num_frames: u32) -> OracleMetrics {
    let eps = f64::EPSILON;
    let frames = frames(gt, results, num_frames);
    let sim = |f: &Frame| -> Mat { f.gt.iter().map(|(_, g)| f.pred.iter().map(|(_, p)| iou_naive(g, p)).collect()).collect() };

    // CLEAR
    let (mut tp, mut fp, mut fn_, mut idsw) = (0u64, 0u64, 0u64, 0u64);
    let mut last: BTreeMap<i64, i64> = BTreeMap::new();
    let mut last_step: BTreeMap<i64, i64> = BTreeMap::new();
    let mut clear_matches = Vec::new();
    for (t, f) in frames.iter().enumerate() {
        if f.gt.is_empty() {
            fp += f.pred.len() as u64;
            continue;
        }
        if f.pred.is_empty() {
            fn_ += f.gt.len() as u64;
            continue;
        }
        let s = sim(f);
        let w: Mat = f
            .gt
            .iter()
            .enumerate()
            .map(|(r, (gid, _))| {
                f.pred
                    .iter()
                    .enumerate()
                    .map(|(c, (pid, _))| {
                        if s[r][c] < 0.5 - eps {
                            0.0
                        } else if last_step.get(gid) == Some(pid) {
                            1000.0 + s[r][c]
                        } else {
                            s[r][c]
                        }
                    })
                    .collect()
            })
            .collect();
        let m = best_matching(&w, f.pred.len());
        last_step.clear();
        for &(r, c) in &m {
            let (g, p) = (f.gt[r].0, f.pred[c].0);
            if last.get(&g).is_some_and(|&q| q != p) {
                idsw += 1;
            }
            last.insert(g, p);
            last_step.insert(g, p);
            clear_matches.push((t as u32 + 1, g, p));
        }
        tp += m.len() as u64;
        fn_ += (f.gt.len() - m.len()) as u64;
        fp += (f.pred.len() - m.len()) as u64;
    }
    let n_gt: u64 = frames.iter().map(|f| f.gt.len() as u64).sum();
    let n_pred: u64 = frames.iter().map(|f| f.pred.len() as u64).sum();
    let mota = 1.0 - (fn_ + fp + idsw) as f64 / n_gt as f64;

    // Identity: best one-to-one id mapping by co-occurrence count.
    let gids: Vec<i64> = frames.iter().flat_map(|f| f.gt.iter().map(|g| g.0)).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let pids: Vec<i64> = frames.iter().flat_map(|f| f.pred.iter().map(|p| p.0)).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let gi = |id: i64| gids.iter().position(|&g| g == id).unwrap();
    let pi = |id: i64| pids.iter().position(|&p| p == id).unwrap();
    let mut co = zeros(gids.len(), pids.len());
    for f in &frames {
        let s = sim(f);
        for (r, (g, _)) in f.gt.iter().enumerate() {
            for (c, (p, _)) in f.pred.iter().enumerate() {
                if s[r][c] >= 0.5 {
                    co[gi(*g)][pi(*p)] += 1.0;
                }
            }
        }
    }
    let idtp = best_matching(&co, pids.len()).iter().map(|&(r, c)| co[r][c]).sum::<f64>() as u64;
    let (idfn, idfp) = (n_gt - idtp, n_pred - idtp);
    let idf1 = 2.0 * idtp as f64 / (2 * idtp + idfn + idfp) as f64;

    // HOTA: global alignment, one matching per frame, then per-α thresholds.
    let mut gt_count = vec![0.0; gids.len()];
    let mut pr_count = vec![0.0; pids.len()];
    let mut potential = zeros(gids.len(), pids.len());
    for f in &frames {
        let s = sim(f);
        for (r, (g, _)) in f.gt.iter().enumerate() {
            gt_count[gi(*g)] += 1.0;
            for (c, (p, _)) in f.pred.iter().enumerate() {
                let row: f64 = s[r].iter().sum();
                let column: f64 = s.iter().map(|x| x[c]).sum();
                let denom = row + column - s[r][c];
                if denom > eps {
                    potential[gi(*g)][pi(*p)] += s[r][c] / denom;
                }
            }
        }
        for (p, _) in &f.pred {
            pr_count[pi(*p)] += 1.0;
        }
    }
    let mut per_alpha = Vec::new();
    for a in 1..=19 {
        let alpha = a as f64 * 0.05;
        let (mut atp, mut afn, mut afp) = (0u64, 0u64, 0u64);
        let mut matches = zeros(gids.len(), pids.len());
        for f in &frames {
            if f.gt.is_empty() || f.pred.is_empty() {
                afn += f.gt.len() as u64;
                afp += f.pred.len() as u64;
                continue;
            }
            let s = sim(f);
            let w: Mat = f
                .gt
                .iter()
                .enumerate()
                .map(|(r, (g, _))| {
                    f.pred
                        .iter()
                        .enumerate()
                        .map(|(c, (p, _))| {
                            let (i, j) = (gi(*g), pi(*p));
                            let ga = potential[i][j] / (gt_count[i] + pr_count[j] - potential[i][j]);
                            ga * s[r][c]
                        })
                        .collect()
                })
                .collect();
            let m: Vec<(usize, usize)> = best_matching(&w, f.pred.len()).into_iter().filter(|&(r, c)| s[r][c] >= alpha - eps).collect();
            for &(r, c) in &m {
                matches[gi(f.gt[r].0)][pi(f.pred[c].0)] += 1.0;
            }
            atp += m.len() as u64;
            afn += (f.gt.len() - m.len()) as u64;
            afp += (f.pred.len() - m.len()) as u64;
        }
        // Each TP contributes the Jaccard overlap of its (gt id, pred id) pair's trajectories.
        let mut ass = 0.0;
        for i in 0..gids.len() {
            for j in 0..pids.len() {
                let m = matches[i][j];
                if m > 0.0 {
                    ass += m * m / (gt_count[i] + pr_count[j] - m);
                }
            }
        }
        let assa = ass / (atp.max(1)) as f64;
        let deta = atp as f64 / (atp + afn + afp).max(1) as f64;
        per_alpha.push((atp, afn, afp, deta, assa, (deta * assa).sqrt()));
    }
    let mean = |k: fn(&(u64, u64, u64, f64, f64, f64)) -> f64| per_alpha.iter().map(k).sum::<f64>() / 19.0;
    OracleMetrics {
        tp,
        fp,
        fn_,
        idsw,
        idtp,
        idfp,
        idfn,
        matches: clear_matches,
        mota,
        idf1,
        deta: mean(|a| a.3),
        assa: mean(|a| a.4),
        hota: mean(|a| a.5),
        per_alpha,
    }
}

/// A small random evaluation instance: ≤ 3 ground-truth tracks over ≤ 10
/// frames, noisy predictions with occasional identity swaps, false
/// positives, distractor and non-considered ground truth.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<GtRecord>, Vec<ResultRecord>, u32) {
    loop {
        let num_frames = rng.random_range(3..=10u32);
        let tracks = rng.random_range(1..=3i64);
        let mut gt = Vec::new();
        let mut res: Vec<ResultRecord> = Vec::new();
        for id in 1..=tracks {
            let (mut x, mut y) = (rng.random_range(0.0..60.0), rng.random_range(0.0..60.0));
            let (vx, vy) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let (w, h) = (rng.random_range(15.0..30.0), rng.random_range(30.0..60.0));
            let class_id = if rng.random_bool(0.15) { 7 } else { 1 };
            let considered = !rng.random_bool(0.1);
            let mut pred_id = id;
            for frame in 1..=num_frames {
                x += vx;
                y += vy;
                if rng.random_bool(0.85) {
                    let bbox = BBox::new(x, y, w, h);
                    gt.push(GtRecord { frame, id, bbox, considered, class_id, visibility: 1.0 });
                    if rng.random_bool(0.2) {
                        pred_id = rng.random_range(1..=4);
                    }
                    if rng.random_bool(0.85) && !res.iter().any(|r| r.frame == frame && r.id == pred_id) {
                        let j = |rng: &mut ChaCha8Rng| rng.random_range(-6.0..6.0);
                        let b = BBox::new(x + j(rng), y + j(rng), w + j(rng) / 2.0, h + j(rng));
                        res.push(ResultRecord { frame, id: pred_id, bbox: b, confidence: 1.0 });
                    }
                }
            }
        }
        for frame in 1..=num_frames {
            if rng.random_bool(0.2) {
                let id = rng.random_range(5..=6);
                let b = BBox::new(rng.random_range(0.0..80.0), rng.random_range(0.0..80.0), 20.0, 40.0);
                res.push(ResultRecord { frame, id, bbox: b, confidence: 0.5 });
            }
        }
        if gt.iter().any(|g| g.considered && g.class_id == 1) {
            return (gt, res, num_frames);
        }
    }
}
