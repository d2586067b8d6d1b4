//! Constant-velocity Kalman filter over box center, aspect ratio and height,
//! with chi-square Mahalanobis gating.
//!
//! State layout is `(cx, cy, a, h, vcx, vcy, va, vh)`; the box geometry is
//! observed directly. Process and measurement noise scale with the box
//! height, which keeps the filter usable across image resolutions.

use crate::affinity::BoundingBox;
use crate::mat::Mat;
use crate::num::{real, Real};
use thiserror::Error;

/// 0.95 quantile of the chi-square distribution with 4 degrees of freedom,
/// the gate for the 4-dimensional box observation.
pub const CHI2_GATE_4DOF_95: f64 = 9.4877;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("bounding box must have positive finite extent")]
    DegenerateBox,
    #[error("innovation covariance is not positive definite")]
    SingularCovariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState<T> {
    pub mean: [T; 8],
    pub covariance: [[T; 8]; 8],
}

impl<T: Real> KalmanState<T> {
    /// Box implied by the current state estimate.
    pub fn to_box(&self) -> BoundingBox<T> {
        BoundingBox::from_cxcyah(&[self.mean[0], self.mean[1], self.mean[2], self.mean[3]])
    }
}

/// Filter parameters. The default weights follow the usual pedestrian-scale
/// convention (position noise 1/20 of height, velocity noise 1/160); both
/// are overridable for other domains.
#[derive(Debug, Clone)]
pub struct MotionModel<T> {
    pub std_weight_position: T,
    pub std_weight_velocity: T,
    /// Squared-Mahalanobis gate; pairs beyond it are marked infeasible.
    pub gate: T,
}

impl<T: Real> Default for MotionModel<T> {
    fn default() -> Self {
        Self {
            std_weight_position: real(1.0 / 20.0),
            std_weight_velocity: real(1.0 / 160.0),
            gate: real(CHI2_GATE_4DOF_95),
        }
    }
}

impl<T: Real> MotionModel<T> {
    /// Start a track from a single measurement: velocities zero, covariance
    /// scaled by the measured height.
    pub fn initiate(&self, bbox: &BoundingBox<T>) -> Result<KalmanState<T>, MotionError> {
        if !bbox.is_valid() {
            return Err(MotionError::DegenerateBox);
        }
        let obs = bbox.to_cxcyah();
        let mut mean = [T::zero(); 8];
        mean[..4].copy_from_slice(&obs);

        let h = obs[3];
        let two = real::<T>(2.0);
        let ten = real::<T>(10.0);
        let std = [
            two * self.std_weight_position * h,
            two * self.std_weight_position * h,
            real(1e-2),
            two * self.std_weight_position * h,
            ten * self.std_weight_velocity * h,
            ten * self.std_weight_velocity * h,
            real(1e-5),
            ten * self.std_weight_velocity * h,
        ];
        let mut covariance = [[T::zero(); 8]; 8];
        for i in 0..8 {
            covariance[i][i] = std[i] * std[i];
        }
        Ok(KalmanState { mean, covariance })
    }

    /// Propagate one frame: position += velocity, covariance grows by the
    /// height-scaled process noise.
    pub fn predict(&self, state: &KalmanState<T>) -> KalmanState<T> {
        let h = state.mean[3];
        let q_std = [
            self.std_weight_position * h,
            self.std_weight_position * h,
            real(1e-2),
            self.std_weight_position * h,
            self.std_weight_velocity * h,
            self.std_weight_velocity * h,
            real(1e-5),
            self.std_weight_velocity * h,
        ];

        let mut mean = state.mean;
        for i in 0..4 {
            mean[i] = mean[i] + mean[i + 4];
        }

        // F P F^T for F = [[I, I], [0, I]] in 4-blocks, plus Q.
        let p = &state.covariance;
        let mut fp = [[T::zero(); 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                fp[i][j] = if i < 4 { p[i][j] + p[i + 4][j] } else { p[i][j] };
            }
        }
        let mut cov = [[T::zero(); 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                cov[i][j] = if j < 4 { fp[i][j] + fp[i][j + 4] } else { fp[i][j] };
            }
        }
        for (i, s) in q_std.iter().enumerate() {
            cov[i][i] = cov[i][i] + *s * *s;
        }
        symmetrize(&mut cov);
        KalmanState {
            mean,
            covariance: cov,
        }
    }

    /// Observation-space projection: (H mean, H P H^T + R).
    fn project(&self, state: &KalmanState<T>) -> ([T; 4], [[T; 4]; 4]) {
        let h = state.mean[3];
        let r_std = [
            self.std_weight_position * h,
            self.std_weight_position * h,
            real(1e-1),
            self.std_weight_position * h,
        ];
        let mut mean = [T::zero(); 4];
        mean.copy_from_slice(&state.mean[..4]);
        let mut cov = [[T::zero(); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] = state.covariance[i][j];
            }
            cov[i][i] = cov[i][i] + r_std[i] * r_std[i];
        }
        (mean, cov)
    }

    /// Measurement correction.
    pub fn update(
        &self,
        state: &KalmanState<T>,
        bbox: &BoundingBox<T>,
    ) -> Result<KalmanState<T>, MotionError> {
        if !bbox.is_valid() {
            return Err(MotionError::DegenerateBox);
        }
        let z = bbox.to_cxcyah();
        let (proj_mean, proj_cov) = self.project(state);
        let chol = cholesky4(&proj_cov).ok_or(MotionError::SingularCovariance)?;

        // Kalman gain K = P H^T S^-1, solved column-by-column through the
        // Cholesky factor: S k_i = (P H^T)_i.
        let p = &state.covariance;
        let mut gain = [[T::zero(); 4]; 8]; // 8x4
        for i in 0..8 {
            let b = [p[i][0], p[i][1], p[i][2], p[i][3]];
            gain[i] = chol_solve(&chol, &b);
        }

        let innovation = [
            z[0] - proj_mean[0],
            z[1] - proj_mean[1],
            z[2] - proj_mean[2],
            z[3] - proj_mean[3],
        ];
        let mut mean = state.mean;
        for i in 0..8 {
            for k in 0..4 {
                mean[i] = mean[i] + gain[i][k] * innovation[k];
            }
        }

        // P' = P - K S K^T
        let mut ks = [[T::zero(); 4]; 8];
        for i in 0..8 {
            for j in 0..4 {
                for k in 0..4 {
                    ks[i][j] = ks[i][j] + gain[i][k] * proj_cov[k][j];
                }
            }
        }
        let mut cov = state.covariance;
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = T::zero();
                for k in 0..4 {
                    acc = acc + ks[i][k] * gain[j][k];
                }
                cov[i][j] = cov[i][j] - acc;
            }
        }
        symmetrize(&mut cov);
        Ok(KalmanState {
            mean,
            covariance: cov,
        })
    }

    /// Squared Mahalanobis distance from the predicted observation to each
    /// measurement, in the 4-dimensional observation space.
    pub fn gating_distance(
        &self,
        state: &KalmanState<T>,
        measurements: &[BoundingBox<T>],
    ) -> Result<Vec<T>, MotionError> {
        let (proj_mean, proj_cov) = self.project(state);
        let chol = cholesky4(&proj_cov).ok_or(MotionError::SingularCovariance)?;
        measurements
            .iter()
            .map(|bbox| {
                if !bbox.is_valid() {
                    return Err(MotionError::DegenerateBox);
                }
                let z = bbox.to_cxcyah();
                let d = [
                    z[0] - proj_mean[0],
                    z[1] - proj_mean[1],
                    z[2] - proj_mean[2],
                    z[3] - proj_mean[3],
                ];
                // solve L y = d, distance = |y|^2
                let y = forward_substitute(&chol, &d);
                Ok(y.iter().map(|&v| v * v).sum())
            })
            .collect()
    }

    /// Gated squared-Mahalanobis matrix, rows = detections, cols = tracks
    /// (the marginal-probability orientation). Entries beyond the gate are
    /// `+inf`.
    pub fn mahalanobis_matrix(
        &self,
        tracks: &[KalmanState<T>],
        detections: &[BoundingBox<T>],
    ) -> Result<Mat<T>, MotionError> {
        let mut out = Mat::zeros(detections.len(), tracks.len());
        for (j, track) in tracks.iter().enumerate() {
            let dists = self.gating_distance(track, detections)?;
            for (i, d) in dists.into_iter().enumerate() {
                out[(i, j)] = if d > self.gate { T::infinity() } else { d };
            }
        }
        Ok(out)
    }
}

fn symmetrize<T: Real>(m: &mut [[T; 8]; 8]) {
    let half = real::<T>(0.5);
    for i in 0..8 {
        for j in (i + 1)..8 {
            let v = (m[i][j] + m[j][i]) * half;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
}

/// Lower-triangular Cholesky factor of a 4x4 SPD matrix.
fn cholesky4<T: Real>(a: &[[T; 4]; 4]) -> Option<[[T; 4]; 4]> {
    let mut l = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum = sum - l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn forward_substitute<T: Real>(l: &[[T; 4]; 4], b: &[T; 4]) -> [T; 4] {
    let mut y = [T::zero(); 4];
    for i in 0..4 {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    y
}

fn back_substitute<T: Real>(l: &[[T; 4]; 4], y: &[T; 4]) -> [T; 4] {
    let mut x = [T::zero(); 4];
    for i in (0..4).rev() {
        let mut sum = y[i];
        for k in (i + 1)..4 {
            sum = sum - l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

/// Solve `S x = b` given the Cholesky factor of `S`.
fn chol_solve<T: Real>(l: &[[T; 4]; 4], b: &[T; 4]) -> [T; 4] {
    back_substitute(l, &forward_substitute(l, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn model() -> MotionModel<f64> {
        MotionModel::default()
    }

    #[test]
    fn initiate_converts_coordinates() {
        let state = model()
            .initiate(&BoundingBox::new(0.0, 0.0, 10.0, 20.0))
            .unwrap();
        assert_eq!(state.mean, [5.0, 10.0, 0.5, 20.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn initiate_rejects_degenerate_boxes() {
        assert!(model().initiate(&BoundingBox::new(0.0, 0.0, 0.0, 5.0)).is_err());
        assert!(model()
            .initiate(&BoundingBox::new(0.0, 0.0, 5.0, -1.0))
            .is_err());
    }

    #[test]
    fn self_gating_distance_is_zero() {
        let b = BoundingBox::new(3.0, 4.0, 10.0, 20.0);
        let state = model().initiate(&b).unwrap();
        let d = model().gating_distance(&state, &[b]).unwrap();
        assert!(d[0].abs() < 1e-9);
    }

    #[test]
    fn predict_moves_by_velocity_and_grows_covariance() {
        let m = model();
        let mut state = m.initiate(&BoundingBox::new(0.0, 0.0, 10.0, 20.0)).unwrap();
        let still = m.predict(&state);
        assert!((still.mean[0] - state.mean[0]).abs() < 1e-12);

        state.mean[4] = 1.0;
        let moved = m.predict(&state);
        assert!((moved.mean[0] - (state.mean[0] + 1.0)).abs() < 1e-12);

        let trace: f64 = (0..8).map(|i| state.covariance[i][i]).sum();
        let trace_after: f64 = (0..8).map(|i| moved.covariance[i][i]).sum();
        assert!(trace_after > trace);
    }

    #[test]
    fn update_with_predicted_position_keeps_mean() {
        let m = model();
        let b = BoundingBox::new(0.0, 0.0, 10.0, 20.0);
        let state = m.predict(&m.initiate(&b).unwrap());
        let updated = m.update(&state, &state.to_box()).unwrap();
        for i in 0..4 {
            assert!((updated.mean[i] - state.mean[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn update_shrinks_observed_covariance_and_converges() {
        let m = model();
        let start = BoundingBox::new(0.0, 0.0, 10.0, 20.0);
        let target = BoundingBox::new(30.0, 40.0, 12.0, 24.0);

        let mut state = m.initiate(&start).unwrap();
        for _ in 0..200 {
            let predicted = m.predict(&state);
            let obs_trace: f64 = (0..4).map(|i| predicted.covariance[i][i]).sum();
            state = m.update(&predicted, &target).unwrap();
            let post_trace: f64 = (0..4).map(|i| state.covariance[i][i]).sum();
            assert!(post_trace <= obs_trace + 1e-12);
        }
        let tz = target.to_cxcyah();
        for i in 0..4 {
            assert!(
                (state.mean[i] - tz[i]).abs() < 1e-3,
                "component {i} did not converge: {} vs {}",
                state.mean[i],
                tz[i]
            );
        }
    }

    #[test]
    fn posterior_mean_between_prediction_and_measurement() {
        let m = model();
        let state = m
            .predict(&m.initiate(&BoundingBox::new(0.0, 0.0, 10.0, 20.0)).unwrap());
        let meas = BoundingBox::new(4.0, 6.0, 10.0, 20.0);
        let post = m.update(&state, &meas).unwrap();
        let z = meas.to_cxcyah();
        for i in 0..4 {
            let lo = state.mean[i].min(z[i]) - 1e-12;
            let hi = state.mean[i].max(z[i]) + 1e-12;
            assert!(post.mean[i] >= lo && post.mean[i] <= hi);
        }
    }

    #[test]
    fn far_measurement_exceeds_gate() {
        let m = model();
        let state = m.initiate(&BoundingBox::new(0.0, 0.0, 10.0, 20.0)).unwrap();
        let far = BoundingBox::new(500.0, 500.0, 10.0, 20.0);
        let d = m.gating_distance(&state, &[far]).unwrap();
        assert!(d[0] > m.gate);
    }

    #[test]
    fn gating_is_scale_consistent() {
        let m = model();
        for scale in [1.0, 2.0] {
            let b = BoundingBox::new(10.0 * scale, 10.0 * scale, 10.0 * scale, 20.0 * scale);
            let state = m.predict(&m.initiate(&b).unwrap());
            let d = m.gating_distance(&state, &[b]).unwrap();
            assert!(d[0] <= m.gate, "self pair must stay gated in at scale {scale}");
        }
    }

    #[test]
    fn mahalanobis_matrix_orientation_and_gating() {
        let m = model();
        let a = BoundingBox::new(0.0, 0.0, 10.0, 20.0);
        let b = BoundingBox::new(400.0, 0.0, 10.0, 20.0);
        let ta = m.initiate(&a).unwrap();
        let tb = m.initiate(&b).unwrap();

        let mat = m.mahalanobis_matrix(&[ta, tb], &[a, b]).unwrap();
        assert_eq!(mat.rows(), 2); // detections
        assert_eq!(mat.cols(), 2); // tracks
        assert!(mat[(0, 0)] < 1e-9);
        assert!(mat[(1, 1)] < 1e-9);
        assert!(mat[(0, 1)].is_infinite());
        assert!(mat[(1, 0)].is_infinite());

        let empty = m.mahalanobis_matrix(&[], &[a]).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (1, 0));
    }

    #[test]
    fn covariance_stays_symmetric_under_random_steps() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = m.initiate(&BoundingBox::new(0.0, 0.0, 10.0, 20.0)).unwrap();
        for step in 0..10_000 {
            state = m.predict(&state);
            if rng.gen::<f64>() < 0.7 {
                let bbox = BoundingBox::new(
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(5.0..30.0),
                    rng.gen_range(5.0..30.0),
                );
                state = m.update(&state, &bbox).unwrap();
            }
            for i in 0..8 {
                for j in 0..8 {
                    let diff = (state.covariance[i][j] - state.covariance[j][i]).abs();
                    assert!(diff < 1e-9, "asymmetry {diff} at step {step}");
                }
                assert!(state.covariance[i][i] >= 0.0);
            }
            let d = m.gating_distance(&state, &[state.to_box()]).unwrap();
            assert!(d[0] >= -1e-12, "negative squared distance");
        }
    }
}
