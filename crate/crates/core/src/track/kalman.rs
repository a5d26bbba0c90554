//! Constant-velocity Kalman filter over (cx, cy, aspect, height).
//!
//! The state is 8-dimensional: the four box parameters followed by their
//! per-frame velocities. Noise standard deviations scale with the box height
//! (the SORT/ByteTrack convention), except for the aspect ratio which uses
//! small fixed values.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::geometry::BBox;

pub type StateVec = SVector<f64, 8>;
pub type StateCov = SMatrix<f64, 8, 8>;
type MeasVec = SVector<f64, 4>;
type MeasCov = SMatrix<f64, 4, 4>;
type ObsMatrix = SMatrix<f64, 4, 8>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// Position noise as a fraction of box height.
    pub std_weight_position: f64,
    /// Velocity noise as a fraction of box height.
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

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVec,
    pub covariance: StateCov,
}

impl KalmanState {
    pub fn bbox(&self) -> BBox {
        BBox::from_xyah([self.mean[0], self.mean[1], self.mean[2], self.mean[3]])
    }

    pub fn velocity(&self) -> [f64; 4] {
        [self.mean[4], self.mean[5], self.mean[6], self.mean[7]]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KalmanFilter {
    config: KalmanConfig,
}

impl KalmanFilter {
    pub fn new(config: KalmanConfig) -> Self {
        Self { config }
    }

    /// State for a freshly observed box: zero velocity, wide velocity prior.
    pub fn initiate(&self, bbox: &BBox) -> KalmanState {
        let m = bbox.to_xyah();
        let mut mean = StateVec::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&MeasVec::from(m));
        let (p, v, h) = (
            self.config.std_weight_position,
            self.config.std_weight_velocity,
            m[3],
        );
        let std = [
            2.0 * p * h,
            2.0 * p * h,
            1e-2,
            2.0 * p * h,
            10.0 * v * h,
            10.0 * v * h,
            1e-5,
            10.0 * v * h,
        ];
        KalmanState {
            mean,
            covariance: StateCov::from_diagonal(&StateVec::from(std.map(|s| s * s))),
        }
    }

    fn transition() -> StateCov {
        let mut f = StateCov::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        f
    }

    fn observation() -> ObsMatrix {
        ObsMatrix::identity()
    }

    /// Advances the state by one frame.
    pub fn predict(&self, state: &KalmanState) -> KalmanState {
        let h = state.mean[3];
        let (p, v) = (
            self.config.std_weight_position,
            self.config.std_weight_velocity,
        );
        let std = [p * h, p * h, 1e-2, p * h, v * h, v * h, 1e-5, v * h];
        let q = StateCov::from_diagonal(&StateVec::from(std.map(|s| s * s)));
        let f = Self::transition();
        KalmanState {
            mean: f * state.mean,
            covariance: f * state.covariance * f.transpose() + q,
        }
    }

    fn measurement_noise(&self, h: f64) -> MeasCov {
        let p = self.config.std_weight_position;
        let std = [p * h, p * h, 1e-1, p * h];
        MeasCov::from_diagonal(&MeasVec::from(std.map(|s| s * s)))
    }

    /// Corrects the state with an observed box.
    pub fn update(&self, state: &KalmanState, bbox: &BBox) -> KalmanState {
        let hm = Self::observation();
        let projected_mean = hm * state.mean;
        let r = self.measurement_noise(state.mean[3]);
        let s = hm * state.covariance * hm.transpose() + r;
        // S is symmetric positive definite by construction.
        let s_inv = s
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| s.try_inverse())
            .expect("innovation covariance is invertible");
        let gain = state.covariance * hm.transpose() * s_inv;
        let innovation = MeasVec::from(bbox.to_xyah()) - projected_mean;
        KalmanState {
            mean: state.mean + gain * innovation,
            covariance: (StateCov::identity() - gain * hm) * state.covariance,
        }
    }
}
