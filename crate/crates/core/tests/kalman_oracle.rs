mod common;

use common::{max_abs_diff, random_state, rng, DenseKalman, Mat};
use lite_mot::kalman::{KalmanConfig, KalmanFilter, KalmanState, StateMatrix, StateVector};
use lite_mot::types::Xyah;
use rand::Rng;

fn to_state(mean: &[f64], cov: &Mat) -> KalmanState {
    KalmanState { mean: StateVector::from_column_slice(mean), covariance: StateMatrix::from_fn(|i, j| cov[i][j]) }
}

fn from_state(s: &KalmanState) -> (Vec<f64>, Mat) {
    (s.mean.iter().copied().collect(), (0..8).map(|i| (0..8).map(|j| s.covariance[(i, j)]).collect()).collect())
}

fn vec_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn oracle() -> DenseKalman {
    let c = KalmanConfig::default();
    DenseKalman { wp: c.std_weight_position, wv: c.std_weight_velocity }
}

fn measurement_near(r: &mut impl Rng, mean: &[f64]) -> [f64; 4] {
    [
        mean[0] + r.random_range(-10.0..10.0),
        mean[1] + r.random_range(-10.0..10.0),
        (mean[2] + r.random_range(-0.05..0.05)).max(0.1),
        mean[3] + r.random_range(-10.0..10.0),
    ]
}

#[test]
fn predict_matches_dense_oracle() {
    let kf = KalmanFilter::default();
    let mut r = rng(11);
    for _ in 0..100 {
        let (m, p) = random_state(&mut r);
        let (om, op) = oracle().predict(&m, &p);
        let (gm, gp) = from_state(&kf.predict(&to_state(&m, &p)));
        assert!(vec_diff(&gm, &om) < 1e-9);
        assert!(max_abs_diff(&gp, &op) < 1e-9, "{}", max_abs_diff(&gp, &op));
    }
}

#[test]
fn update_matches_dense_oracle() {
    let kf = KalmanFilter::default();
    let mut r = rng(12);
    for _ in 0..100 {
        let (m, p) = random_state(&mut r);
        let z = measurement_near(&mut r, &m);
        let (om, op) = oracle().update(&m, &p, z);
        let (gm, gp) = from_state(&kf.update(&to_state(&m, &p), Xyah::from_array(z)).unwrap());
        assert!(vec_diff(&gm, &om) < 1e-9, "{}", vec_diff(&gm, &om));
        assert!(max_abs_diff(&gp, &op) < 1e-9, "{}", max_abs_diff(&gp, &op));
    }
}

#[test]
fn gating_matches_dense_inverse() {
    let kf = KalmanFilter::default();
    let mut r = rng(13);
    for _ in 0..100 {
        let (m, p) = random_state(&mut r);
        let zs: Vec<[f64; 4]> = (0..4).map(|_| measurement_near(&mut r, &m)).collect();
        let got = kf
            .gating_distance(&to_state(&m, &p), &zs.iter().map(|z| Xyah::from_array(*z)).collect::<Vec<_>>())
            .unwrap();
        for (g, z) in got.iter().zip(&zs) {
            let want = oracle().gating(&m, &p, *z);
            assert!((g - want).abs() < 1e-8, "{g} vs {want}");
        }
    }
}

#[test]
fn gating_is_elementwise_under_permutation() {
    let kf = KalmanFilter::default();
    let mut r = rng(14);
    let (m, p) = random_state(&mut r);
    let s = to_state(&m, &p);
    let zs: Vec<Xyah> = (0..5).map(|_| Xyah::from_array(measurement_near(&mut r, &m))).collect();
    let fwd = kf.gating_distance(&s, &zs).unwrap();
    let rev_in: Vec<Xyah> = zs.iter().rev().copied().collect();
    let mut rev = kf.gating_distance(&s, &rev_in).unwrap();
    rev.reverse();
    assert_eq!(fwd, rev);
}

#[test]
fn predict_then_update_sequence_tracks_oracle() {
    // Errors must not accumulate over a realistic track lifetime.
    let kf = KalmanFilter::default();
    let mut r = rng(15);
    let z0 = [300.0, 200.0, 0.4, 120.0];
    let mut s = kf.initiate(Xyah::from_array(z0));
    let (mut om, mut op) = from_state(&s);
    for t in 1..=60 {
        s = kf.predict(&s);
        (om, op) = oracle().predict(&om, &op);
        let z = [300.0 + 2.0 * t as f64 + r.random_range(-2.0..2.0), 200.0, 0.4, 120.0 + r.random_range(-2.0..2.0)];
        s = kf.update(&s, Xyah::from_array(z)).unwrap();
        (om, op) = oracle().update(&om, &op, z);
    }
    let (gm, gp) = from_state(&s);
    assert!(vec_diff(&gm, &om) < 1e-9);
    assert!(max_abs_diff(&gp, &op) < 1e-9);
}
