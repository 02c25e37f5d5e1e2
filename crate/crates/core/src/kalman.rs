//! Constant-velocity Kalman filter over `(cx, cy, a, h, vcx, vcy, va, vh)`.
//!
//! Process and measurement noise scale with the box height, following the
//! convention of the DeepSORT family of trackers.

use nalgebra::{Cholesky, SMatrix, SVector};
use thiserror::Error;

use crate::types::Xyah;

pub type StateVector = SVector<f64, 8>;
pub type StateMatrix = SMatrix<f64, 8, 8>;
pub type MeasurementVector = SVector<f64, 4>;
pub type MeasurementMatrix = SMatrix<f64, 4, 4>;

/// Chi-square 0.95 quantile for 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

#[derive(Debug, Error, PartialEq)]
pub enum KalmanError {
    #[error("innovation covariance is not positive definite")]
    DegenerateCovariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl KalmanState {
    pub fn measurement(&self) -> Xyah {
        Xyah::from_array([self.mean[0], self.mean[1], self.mean[2], self.mean[3]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    /// Position std as a fraction of box height.
    pub std_weight_position: f64,
    /// Velocity std as a fraction of box height.
    pub std_weight_velocity: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KalmanFilter {
    config: KalmanConfig,
    motion: StateMatrix,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self::new(KalmanConfig::default())
    }
}

impl KalmanFilter {
    pub fn new(config: KalmanConfig) -> Self {
        let mut motion = StateMatrix::identity();
        for i in 0..4 {
            motion[(i, i + 4)] = 1.0;
        }
        Self { config, motion }
    }

    pub fn config(&self) -> KalmanConfig {
        self.config
    }

    /// Block transition matrix `[[I, I], [0, I]]`.
    pub fn transition(&self) -> &StateMatrix {
        &self.motion
    }

    pub fn initiate(&self, z: Xyah) -> KalmanState {
        let wp = self.config.std_weight_position;
        let wv = self.config.std_weight_velocity;
        let h = z.h;
        let std = [
            2.0 * wp * h,
            2.0 * wp * h,
            1e-2,
            2.0 * wp * h,
            10.0 * wv * h,
            10.0 * wv * h,
            1e-5,
            10.0 * wv * h,
        ];
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0)
            .copy_from(&MeasurementVector::from(z.to_array()));
        let covariance = StateMatrix::from_diagonal(&StateVector::from_fn(|i, _| std[i] * std[i]));
        KalmanState { mean, covariance }
    }

    /// Process noise for a state whose height is `h`.
    pub fn process_noise(&self, h: f64) -> StateMatrix {
        let wp = self.config.std_weight_position;
        let wv = self.config.std_weight_velocity;
        let std = [wp * h, wp * h, 1e-2, wp * h, wv * h, wv * h, 1e-5, wv * h];
        StateMatrix::from_diagonal(&StateVector::from_fn(|i, _| std[i] * std[i]))
    }

    /// Measurement noise for a state whose height is `h`.
    pub fn measurement_noise(&self, h: f64) -> MeasurementMatrix {
        let wp = self.config.std_weight_position;
        let std = [wp * h, wp * h, 1e-1, wp * h];
        MeasurementMatrix::from_diagonal(&MeasurementVector::from_fn(|i, _| std[i] * std[i]))
    }

    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let q = self.process_noise(s.mean[3]);
        let mean = self.motion * s.mean;
        let covariance = symmetrize(self.motion * s.covariance * self.motion.transpose() + q);
        KalmanState { mean, covariance }
    }

    /// Projects the state into measurement space: `(H·μ, H·P·Hᵀ + R)`.
    pub fn project(&self, s: &KalmanState) -> (MeasurementVector, MeasurementMatrix) {
        let mean = s.mean.fixed_rows::<4>(0).into_owned();
        let cov = s.covariance.fixed_view::<4, 4>(0, 0).into_owned() + self.measurement_noise(s.mean[3]);
        (mean, cov)
    }

    pub fn update(&self, s: &KalmanState, z: Xyah) -> Result<KalmanState, KalmanError> {
        let (projected_mean, projected_cov) = self.project(s);
        let chol = Cholesky::new(projected_cov).ok_or(KalmanError::DegenerateCovariance)?;
        // P·Hᵀ is the first four columns of P.
        let pht: SMatrix<f64, 8, 4> = s.covariance.fixed_columns::<4>(0).into_owned();
        // K = P·Hᵀ·S⁻¹  <=>  S·Kᵀ = H·P  (S symmetric)
        let gain: SMatrix<f64, 8, 4> = chol.solve(&pht.transpose()).transpose();
        let innovation = MeasurementVector::from(z.to_array()) - projected_mean;
        let mean = s.mean + gain * innovation;
        let covariance = symmetrize(s.covariance - gain * projected_cov * gain.transpose());
        Ok(KalmanState { mean, covariance })
    }

    /// Squared Mahalanobis distance of each candidate to the projected state.
    pub fn gating_distance(&self, s: &KalmanState, candidates: &[Xyah]) -> Result<Vec<f64>, KalmanError> {
        let (mean, cov) = self.project(s);
        let chol = Cholesky::new(cov).ok_or(KalmanError::DegenerateCovariance)?;
        let l = chol.l();
        Ok(candidates
            .iter()
            .map(|z| {
                let d = MeasurementVector::from(z.to_array()) - mean;
                let y = l
                    .solve_lower_triangular(&d)
                    .expect("cholesky factor has a positive diagonal");
                y.norm_squared()
            })
            .collect())
    }
}

fn symmetrize<const N: usize>(m: SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}
