//! Planar dead-reckoning EKF with accelerometer/gyro bias states,
//! zero-velocity and zero-rate pseudo-measurements, and a magnetic dipole
//! measurement channel.
//!
//! State layout (SI units): `[p_x, p_y, theta, v_x, v_y, b_ax, b_ay, b_gz]`.
//! Accelerometer biases live in the device frame.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2D};
use crate::motion_events::ImuSample;

pub const STATE_DIM: usize = 8;

pub const PX: usize = 0;
pub const PY: usize = 1;
pub const THETA: usize = 2;
pub const VX: usize = 3;
pub const VY: usize = 4;
pub const BAX: usize = 5;
pub const BAY: usize = 6;
pub const BGZ: usize = 7;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Longest interval the integrator will bridge.
pub const MAX_DT: f64 = 0.5;

/// Innovation gate, in standard deviations (Mahalanobis distance).
pub const GATE_SIGMA: f64 = 5.0;

/// Closest approach to a dipole at which the field model is evaluated, mm.
pub const DIPOLE_GUARD_MM: f64 = 5.0;

/// μ0 / 4π in T·m/A.
const MU0_OVER_4PI: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// m/s² per sample.
    pub sigma_acc: f64,
    /// rad/s per sample.
    pub sigma_gyro: f64,
    /// m/s²·√s.
    pub sigma_bias_acc_rw: f64,
    /// rad/s·√s.
    pub sigma_bias_gyro_rw: f64,
    /// m/s.
    pub zupt_sigma_v: f64,
    /// rad/s.
    pub zaru_sigma_w: f64,
    /// µT.
    pub mag_sigma: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            sigma_acc: 0.05,
            sigma_gyro: 0.005,
            sigma_bias_acc_rw: 0.001,
            sigma_bias_gyro_rw: 0.001,
            zupt_sigma_v: 0.01,
            zaru_sigma_w: 0.001,
            mag_sigma: 2.0,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("sigma_acc", self.sigma_acc),
            ("sigma_gyro", self.sigma_gyro),
            ("sigma_bias_acc_rw", self.sigma_bias_acc_rw),
            ("sigma_bias_gyro_rw", self.sigma_bias_gyro_rw),
            ("zupt_sigma_v", self.zupt_sigma_v),
            ("zaru_sigma_w", self.zaru_sigma_w),
            ("mag_sigma", self.mag_sigma),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Point dipole standing in for a household magnet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetModel {
    /// World frame, mm; z is height above the surface.
    pub position: [f64; 3],
    /// A·m².
    pub moment: [f64; 3],
}

impl MagnetModel {
    pub fn validate(&self) -> Result<()> {
        let m = self.moment;
        if !self.position.iter().chain(&m).all(|v| v.is_finite()) {
            return Err(Error::domain("magnet has non-finite fields"));
        }
        if m[0] * m[0] + m[1] * m[1] + m[2] * m[2] == 0.0 {
            return Err(Error::domain("magnet moment must be non-zero"));
        }
        Ok(())
    }
}

/// Everything the magnetic measurement model needs besides the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagneticSetup {
    pub magnet: MagnetModel,
    /// Ambient field in the world frame, µT.
    #[serde(default)]
    pub ambient: [f64; 3],
    /// Height of the magnetometer above the surface while in contact, mm.
    #[serde(default = "default_sensor_height")]
    pub sensor_height: f64,
}

fn default_sensor_height() -> f64 {
    5.0
}

impl MagneticSetup {
    pub fn validate(&self) -> Result<()> {
        self.magnet.validate()?;
        if !(self.ambient.iter().all(|v| v.is_finite()) && self.sensor_height.is_finite()) {
            return Err(Error::domain("magnetic setup has non-finite fields"));
        }
        Ok(())
    }

    /// Field seen by a sensor at world `(x, y)` mm with heading `theta`,
    /// in the device frame.
    pub fn device_field(&self, x_mm: f64, y_mm: f64, theta: f64) -> Result<[f64; 3]> {
        let b = dipole_field(&self.magnet, [x_mm, y_mm, self.sensor_height])?;
        let w = [b[0] + self.ambient[0], b[1] + self.ambient[1], b[2] + self.ambient[2]];
        let (s, c) = theta.sin_cos();
        Ok([c * w[0] + s * w[1], -s * w[0] + c * w[1], w[2]])
    }
}

/// Field of a point dipole at `at` (mm), in µT.
pub fn dipole_field(magnet: &MagnetModel, at: [f64; 3]) -> Result<[f64; 3]> {
    let r_mm = [
        at[0] - magnet.position[0],
        at[1] - magnet.position[1],
        at[2] - magnet.position[2],
    ];
    let dist_mm = (r_mm[0] * r_mm[0] + r_mm[1] * r_mm[1] + r_mm[2] * r_mm[2]).sqrt();
    if !(dist_mm >= DIPOLE_GUARD_MM) {
        return Err(Error::Proximity {
            distance_mm: dist_mm,
            guard_mm: DIPOLE_GUARD_MM,
        });
    }
    let dist = dist_mm * 1e-3;
    let unit = r_mm.map(|c| c / dist_mm);
    let m = magnet.moment;
    let m_dot_r = m[0] * unit[0] + m[1] * unit[1] + m[2] * unit[2];
    let scale = MU0_OVER_4PI / (dist * dist * dist) * 1e6;
    Ok([0, 1, 2].map(|k| scale * (3.0 * unit[k] * m_dot_r - m[k])))
}

/// Prior standard deviations used when a filter is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialUncertainty {
    /// m.
    pub position: f64,
    /// rad.
    pub heading: f64,
    /// m/s.
    pub velocity: f64,
    /// m/s².
    pub bias_acc: f64,
    /// rad/s.
    pub bias_gyro: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        InitialUncertainty {
            position: 1e-3,
            heading: 1e-3,
            velocity: 1e-3,
            bias_acc: 0.05,
            bias_gyro: 0.005,
        }
    }
}

impl InitialUncertainty {
    pub fn stds(&self) -> [f64; STATE_DIM] {
        [
            self.position,
            self.position,
            self.heading,
            self.velocity,
            self.velocity,
            self.bias_acc,
            self.bias_acc,
            self.bias_gyro,
        ]
    }
}

/// EKF mean, covariance and time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: StateVector,
    pub cov: StateMatrix,
    pub t: f64,
}

/// Starts a filter at `placement` with zero velocity and bias.
pub fn anchor(placement: &Pose2D, t: f64, initial_std: &[f64; STATE_DIM]) -> Result<FilterState> {
    if let Some(bad) = initial_std.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::domain(format!("initial std must be non-negative, got {bad}")));
    }
    let mut mean = StateVector::zeros();
    mean[PX] = placement.x() * 1e-3;
    mean[PY] = placement.y() * 1e-3;
    mean[THETA] = placement.theta();
    let cov = StateMatrix::from_diagonal(&SVector::from(initial_std.map(|s| s * s)));
    Ok(FilterState { mean, cov, t })
}

impl FilterState {
    pub fn pose(&self) -> Pose2D {
        estimate_pose(self)
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.mean[VX], self.mean[VY]]
    }

    pub fn cov_diag(&self) -> [f64; STATE_DIM] {
        std::array::from_fn(|i| self.cov[(i, i)])
    }

    /// Normalized estimation error squared of the position block against a
    /// true position in millimetres.
    pub fn position_nees(&self, truth: &Pose2D) -> f64 {
        let e = nalgebra::Vector2::new(truth.x() * 1e-3 - self.mean[PX], truth.y() * 1e-3 - self.mean[PY]);
        let p = self.cov.fixed_view::<2, 2>(PX, PX).into_owned();
        match p.try_inverse() {
            Some(inv) => (e.transpose() * inv * e)[0],
            None => f64::INFINITY,
        }
    }

    /// Symmetric to 1e-12 and PSD to -1e-9.
    pub fn check_covariance(&self) -> Result<()> {
        let asym = (self.cov - self.cov.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(Error::domain(format!("covariance asymmetric by {asym}")));
        }
        let min_eig = self.cov.symmetric_eigenvalues().min();
        if min_eig < -1e-9 {
            return Err(Error::domain(format!("covariance eigenvalue {min_eig} < 0")));
        }
        Ok(())
    }

    /// Diagnostic dump row: t, p_x, p_y, theta, v_x, v_y, b_ax, b_ay, b_gz, trace(cov).
    pub fn csv_row(&self) -> [f64; 10] {
        let m = &self.mean;
        [
            self.t,
            m[PX],
            m[PY],
            m[THETA],
            m[VX],
            m[VY],
            m[BAX],
            m[BAY],
            m[BGZ],
            self.cov.trace(),
        ]
    }

    fn symmetrize(&mut self) {
        self.cov = 0.5 * (self.cov + self.cov.transpose());
    }
}

/// Position in mm, heading passed through.
pub fn estimate_pose(state: &FilterState) -> Pose2D {
    Pose2D::new(state.mean[PX] * 1e3, state.mean[PY] * 1e3, state.mean[THETA])
}

/// Whether position is integrated during a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Motion {
    #[default]
    Free,
    /// Stationary: displacement is not integrated (position is held) while
    /// velocity, heading and biases still propagate.
    Held,
}

/// One prediction step's inputs; the mean map and its Jacobian are
/// methods so they can be checked against each other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub acc: [f64; 2],
    pub gyro_z: f64,
    pub dt: f64,
    pub motion: Motion,
}

impl Prediction {
    fn world_accel(&self, x: &StateVector) -> (f64, f64, f64, f64) {
        let ax = self.acc[0] - x[BAX];
        let ay = self.acc[1] - x[BAY];
        let (s, c) = x[THETA].sin_cos();
        (c * ax - s * ay, s * ax + c * ay, s, c)
    }

    pub fn mean(&self, x: &StateVector) -> StateVector {
        let dt = self.dt;
        let (awx, awy, _, _) = self.world_accel(x);
        let mut out = *x;
        out[THETA] = normalize_angle(x[THETA] + (self.gyro_z - x[BGZ]) * dt);
        out[VX] = x[VX] + awx * dt;
        out[VY] = x[VY] + awy * dt;
        if self.motion == Motion::Free {
            out[PX] = x[PX] + x[VX] * dt + 0.5 * awx * dt * dt;
            out[PY] = x[PY] + x[VY] * dt + 0.5 * awy * dt * dt;
        }
        out
    }

    pub fn jacobian(&self, x: &StateVector) -> StateMatrix {
        let dt = self.dt;
        let half = 0.5 * dt * dt;
        let (awx, awy, s, c) = self.world_accel(x);
        let mut f = StateMatrix::identity();

        f[(THETA, BGZ)] = -dt;

        // d(a_world)/d(theta) = (-awy, awx); d(a_world)/d(b_a) = -R.
        f[(VX, THETA)] = -awy * dt;
        f[(VY, THETA)] = awx * dt;
        f[(VX, BAX)] = -c * dt;
        f[(VX, BAY)] = s * dt;
        f[(VY, BAX)] = -s * dt;
        f[(VY, BAY)] = -c * dt;

        if self.motion == Motion::Free {
            f[(PX, VX)] = dt;
            f[(PY, VY)] = dt;
            f[(PX, THETA)] = -awy * half;
            f[(PY, THETA)] = awx * half;
            f[(PX, BAX)] = -c * half;
            f[(PX, BAY)] = s * half;
            f[(PY, BAX)] = -s * half;
            f[(PY, BAY)] = -c * half;
        }
        f
    }

    pub fn process_noise(&self, x: &StateVector, noise: &NoiseParams) -> StateMatrix {
        let dt = self.dt;
        let (s, c) = x[THETA].sin_cos();
        // Inputs: device-frame accel noise (x, y), gyro noise.
        let mut g = SMatrix::<f64, STATE_DIM, 3>::zeros();
        g[(VX, 0)] = c * dt;
        g[(VX, 1)] = -s * dt;
        g[(VY, 0)] = s * dt;
        g[(VY, 1)] = c * dt;
        g[(THETA, 2)] = dt;
        if self.motion == Motion::Free {
            let half = 0.5 * dt * dt;
            g[(PX, 0)] = c * half;
            g[(PX, 1)] = -s * half;
            g[(PY, 0)] = s * half;
            g[(PY, 1)] = c * half;
        }
        let input = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(
            noise.sigma_acc.powi(2),
            noise.sigma_acc.powi(2),
            noise.sigma_gyro.powi(2),
        ));
        let mut q = g * input * g.transpose();
        q[(BAX, BAX)] += noise.sigma_bias_acc_rw.powi(2) * dt;
        q[(BAY, BAY)] += noise.sigma_bias_acc_rw.powi(2) * dt;
        q[(BGZ, BGZ)] += noise.sigma_bias_gyro_rw.powi(2) * dt;
        q
    }
}

/// Dead-reckoning step to `sample.t`.
pub fn predict(state: &FilterState, sample: &ImuSample, noise: &NoiseParams) -> Result<FilterState> {
    predict_with(state, sample, noise, Motion::Free)
}

pub fn predict_with(
    state: &FilterState,
    sample: &ImuSample,
    noise: &NoiseParams,
    motion: Motion,
) -> Result<FilterState> {
    let dt = sample.t - state.t;
    if !(dt > 0.0) {
        return Err(Error::Stream {
            prev: state.t,
            t: sample.t,
        });
    }
    if dt > MAX_DT {
        return Err(Error::Gap { dt, max: MAX_DT });
    }
    let step = Prediction {
        acc: [sample.acc[0], sample.acc[1]],
        gyro_z: sample.gyro[2],
        dt,
        motion,
    };
    let f = step.jacobian(&state.mean);
    let mut next = FilterState {
        mean: step.mean(&state.mean),
        cov: f * state.cov * f.transpose() + step.process_noise(&state.mean, noise),
        t: sample.t,
    };
    next.symmetrize();
    Ok(next)
}

/// Result of a gated measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    Applied {
        /// Mahalanobis distance of the innovation.
        distance: f64,
    },
    /// Innovation beyond the gate; state untouched.
    Rejected { distance: f64 },
    /// No usable measurement; state untouched.
    Skipped,
}

impl UpdateOutcome {
    pub fn applied(&self) -> bool {
        matches!(self, UpdateOutcome::Applied { .. })
    }
}

/// Gated EKF update in Joseph form. Rows listed in `frozen` get zero gain,
/// which leaves those states' means untouched while keeping the covariance
/// exact for the suboptimal gain.
fn gated_update<const M: usize>(
    state: &mut FilterState,
    innovation: &SVector<f64, M>,
    h: &SMatrix<f64, M, STATE_DIM>,
    r: &SMatrix<f64, M, M>,
    frozen: &[usize],
) -> UpdateOutcome {
    let p = &state.cov;
    let s = h * p * h.transpose() + r;
    let Some(s_inv) = s.try_inverse() else {
        return UpdateOutcome::Skipped;
    };
    let distance = (innovation.transpose() * s_inv * innovation)[0].max(0.0).sqrt();
    if !(distance <= GATE_SIGMA) {
        return UpdateOutcome::Rejected { distance };
    }
    let mut k = p * h.transpose() * s_inv;
    for &row in frozen {
        k.row_mut(row).fill(0.0);
    }
    state.mean += k * innovation;
    state.mean[THETA] = normalize_angle(state.mean[THETA]);
    let i_kh = StateMatrix::identity() - k * h;
    state.cov = i_kh * p * i_kh.transpose() + k * r * k.transpose();
    state.symmetrize();
    UpdateOutcome::Applied { distance }
}

/// Outcomes of the two halves of a stationary update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZuptOutcome {
    pub velocity: UpdateOutcome,
    pub angular_rate: UpdateOutcome,
}

/// Mahalanobis distance of zero velocity from the velocity estimate, under
/// the filter's own velocity covariance.
pub fn zero_velocity_distance(state: &FilterState) -> f64 {
    let v = nalgebra::Vector2::new(state.mean[VX], state.mean[VY]);
    let p = state.cov.fixed_view::<2, 2>(VX, VX).into_owned();
    match p.try_inverse() {
        Some(inv) => (v.transpose() * inv * v)[0].max(0.0).sqrt(),
        None if v == nalgebra::Vector2::zeros() => 0.0,
        None => f64::INFINITY,
    }
}

/// Zero-velocity update on (v_x, v_y) plus a zero-angular-rate update on the
/// gyro reading `gyro_z`, each gated on its own. Position means are never
/// moved by these updates.
pub fn zupt_update(state: &FilterState, gyro_z: f64, noise: &NoiseParams) -> (FilterState, ZuptOutcome) {
    let mut next = state.clone();
    let frozen = [PX, PY];

    let mut h = SMatrix::<f64, 2, STATE_DIM>::zeros();
    h[(0, VX)] = 1.0;
    h[(1, VY)] = 1.0;
    let innovation = -nalgebra::Vector2::new(next.mean[VX], next.mean[VY]);
    let r = nalgebra::Matrix2::identity() * noise.zupt_sigma_v.powi(2);
    let velocity = gated_update(&mut next, &innovation, &h, &r, &frozen);

    // A stationary gyro reads its own bias.
    let mut h = SMatrix::<f64, 1, STATE_DIM>::zeros();
    h[(0, BGZ)] = 1.0;
    let innovation = SVector::<f64, 1>::new(gyro_z - next.mean[BGZ]);
    let r = SMatrix::<f64, 1, 1>::new(noise.zaru_sigma_w.powi(2));
    let angular_rate = gated_update(&mut next, &innovation, &h, &r, &frozen);

    (next, ZuptOutcome { velocity, angular_rate })
}

/// Predicted magnetometer reading (device frame, µT) for a state mean.
pub fn predicted_field(mean: &StateVector, setup: &MagneticSetup) -> Result<[f64; 3]> {
    setup.device_field(mean[PX] * 1e3, mean[PY] * 1e3, mean[THETA])
}

/// Central-difference Jacobian of [`predicted_field`] with respect to
/// (p_x, p_y, theta); steps of 1 mm and 1 mrad.
pub fn field_jacobian(mean: &StateVector, setup: &MagneticSetup) -> Result<SMatrix<f64, 3, STATE_DIM>> {
    let mut h = SMatrix::<f64, 3, STATE_DIM>::zeros();
    for (idx, step) in [(PX, 1e-3), (PY, 1e-3), (THETA, 1e-3)] {
        let mut plus = *mean;
        let mut minus = *mean;
        plus[idx] += step;
        minus[idx] -= step;
        let fp = predicted_field(&plus, setup)?;
        let fm = predicted_field(&minus, setup)?;
        for k in 0..3 {
            h[(k, idx)] = (fp[k] - fm[k]) / (2.0 * step);
        }
    }
    Ok(h)
}

/// Magnetometer update against the dipole + ambient field model.
pub fn mag_update(
    state: &FilterState,
    sample: &ImuSample,
    setup: &MagneticSetup,
    noise: &NoiseParams,
) -> (FilterState, UpdateOutcome) {
    let mut next = state.clone();
    let Some(measured) = sample.mag else {
        return (next, UpdateOutcome::Skipped);
    };
    let (Ok(predicted), Ok(h)) = (predicted_field(&state.mean, setup), field_jacobian(&state.mean, setup)) else {
        return (next, UpdateOutcome::Skipped);
    };
    let innovation = nalgebra::Vector3::from_fn(|k, _| measured[k] - predicted[k]);
    let r = nalgebra::Matrix3::identity() * noise.mag_sigma.powi(2);
    let outcome = gated_update(&mut next, &innovation, &h, &r, &[]);
    (next, outcome)
}
