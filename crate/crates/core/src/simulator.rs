//! Deterministic scenario engine: scripted segments become an exact
//! ground-truth trajectory, which is turned into a synthetic sensor stream
//! with biases, noise, a magnet field and the contact luminance proxy.
//!
//! The synthetic accelerometer reports, at sample `k`, the mean world
//! acceleration over `(t[k-1], t[k]]` rotated into the device frame at
//! `theta[k-1]`; the gyro reports the mean turn rate over the same interval.
//! That is the convention the tracker's integrator assumes, so noise-free
//! streams are reproduced to within `dt * |Δv| / 2`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, rectification_scale, DeviceGeometry, Pose2D, SurfaceMap};
use crate::motion_events::{DetectorConfig, ImuSample};
use crate::noise::{Channel, CounterRng};
use crate::pattern_synth::value_noise;
use crate::tracker::{MagneticSetup, NoiseParams, DIPOLE_GUARD_MM};

pub const GRAVITY: f64 = 9.81;

/// Luminance proxy while the camera is pressed against the surface.
pub const LUM_CONTACT: f64 = 0.02;
/// Luminance proxy while aloft.
pub const LUM_ALOFT: f64 = 0.9;

/// Noise actually injected into the synthetic stream. Zero is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorNoise {
    /// m/s² per sample, white.
    pub acc: f64,
    /// rad/s per sample, white.
    pub gyro: f64,
    /// m/s²·√s, bias random walk.
    pub bias_acc_rw: f64,
    /// rad/s·√s, bias random walk.
    pub bias_gyro_rw: f64,
    /// µT per sample, white.
    pub mag: f64,
    /// Half-width of the uniform luminance jitter.
    pub lum: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise::from(&NoiseParams::default())
    }
}

impl From<&NoiseParams> for SensorNoise {
    fn from(p: &NoiseParams) -> Self {
        SensorNoise {
            acc: p.sigma_acc,
            gyro: p.sigma_gyro,
            bias_acc_rw: p.sigma_bias_acc_rw,
            bias_gyro_rw: p.sigma_bias_gyro_rw,
            mag: p.mag_sigma,
            lum: 0.01,
        }
    }
}

impl SensorNoise {
    pub const ZERO: SensorNoise = SensorNoise {
        acc: 0.0,
        gyro: 0.0,
        bias_acc_rw: 0.0,
        bias_gyro_rw: 0.0,
        mag: 0.0,
        lum: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("noise.acc", self.acc),
            ("noise.gyro", self.gyro),
            ("noise.bias_acc_rw", self.bias_acc_rw),
            ("noise.bias_gyro_rw", self.bias_gyro_rw),
            ("noise.mag", self.mag),
            ("noise.lum", self.lum),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Scenario(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    HoldAloft,
    LowerAndPlace,
    MoveTo,
    Pause,
    Lift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Seconds.
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Pose2D>,
}

impl Segment {
    pub fn new(kind: SegmentKind, duration: f64) -> Self {
        Segment {
            kind,
            duration,
            target: None,
        }
    }

    pub fn move_to(target: Pose2D, duration: f64) -> Self {
        Segment {
            kind: SegmentKind::MoveTo,
            duration,
            target: Some(target),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Checkerboard,
    Noise,
}

/// A procedurally generated tabletop, photographed from `capture_height_mm`
/// with a camera of focal length `focal_px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub width_mm: f64,
    pub height_mm: f64,
    /// Checkerboard square size.
    pub square_mm: f64,
    pub colors: [[u8; 3]; 2],
    /// Seed of the noise texture; independent of the sensor-noise seed.
    pub seed: u64,
    pub capture_height_mm: f64,
    pub focal_px: f64,
}

impl Default for PatternSpec {
    fn default() -> Self {
        PatternSpec {
            kind: PatternKind::Checkerboard,
            width_mm: 600.0,
            height_mm: 400.0,
            square_mm: 20.0,
            colors: [[235, 225, 205], [60, 90, 150]],
            seed: 0,
            capture_height_mm: 300.0,
            focal_px: 1500.0,
        }
    }
}

impl PatternSpec {
    pub fn mm_per_px(&self) -> Result<f64> {
        rectification_scale(self.capture_height_mm, self.focal_px)
    }

    pub fn generate(&self) -> Result<SurfaceMap> {
        let scale = self.mm_per_px()?;
        let dims = [
            ("width_mm", self.width_mm),
            ("height_mm", self.height_mm),
            ("square_mm", self.square_mm),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Scenario(format!("map_source.{name} must be positive")));
            }
        }
        let w = (self.width_mm / scale).round();
        let h = (self.height_mm / scale).round();
        if !(w >= 1.0 && h >= 1.0 && w * h <= 64e6) {
            return Err(Error::Scenario(format!("generated map of {w}x{h} px is out of range")));
        }
        let (w, h) = (w as u32, h as u32);
        let [a, b] = self.colors;
        let image = match self.kind {
            PatternKind::Checkerboard => {
                let blank = SurfaceMap::new(RgbImage::new(w, h), scale)?;
                RgbImage::from_fn(w, h, |c, r| {
                    let (x, y) = blank.pixel_to_world(f64::from(c), f64::from(r));
                    let i = (x / self.square_mm).floor() as i64 + (y / self.square_mm).floor() as i64;
                    Rgb(if i.rem_euclid(2) == 0 { a } else { b })
                })
            }
            PatternKind::Noise => {
                let cell = (self.square_mm / scale).max(1.0);
                let rng = CounterRng::new(self.seed);
                RgbImage::from_fn(w, h, |c, r| {
                    let t = value_noise(&rng, f64::from(c) / cell, f64::from(r) / cell, 0, None);
                    let t = 0.5 * (t + 1.0);
                    Rgb(std::array::from_fn(|k| {
                        (f64::from(a[k]) * (1.0 - t) + f64::from(b[k]) * t).round() as u8
                    }))
                })
            }
        };
        SurfaceMap::new(image, scale)
    }
}

/// Where the captured surface image comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    /// PNG with a JSON sidecar; relative paths resolve against the scenario file.
    File(PathBuf),
    Generate(PatternSpec),
}

impl Default for MapSource {
    fn default() -> Self {
        MapSource::Generate(PatternSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Hz.
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default)]
    pub geometry: DeviceGeometry,
    #[serde(default)]
    pub map_source: MapSource,
    #[serde(default)]
    pub noise: SensorNoise,
    /// True sensor biases (b_ax, b_ay in m/s², b_gz in rad/s).
    #[serde(default)]
    pub bias_true: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnet: Option<MagneticSetup>,
    pub segments: Vec<Segment>,
}

fn default_rate() -> f64 {
    1000.0
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(50.0..=2000.0).contains(&self.rate) {
            return Err(Error::Scenario(format!(
                "rate must be in [50, 2000] Hz, got {}",
                self.rate
            )));
        }
        self.geometry
            .validate()
            .map_err(|e| Error::Scenario(format!("geometry: {e}")))?;
        self.noise.validate()?;
        if !self.bias_true.iter().all(|b| b.is_finite()) {
            return Err(Error::Scenario("bias_true must be finite".into()));
        }
        if let Some(m) = &self.magnet {
            m.validate().map_err(|e| Error::Scenario(format!("magnet: {e}")))?;
            if (m.magnet.position[2] - m.sensor_height).abs() < DIPOLE_GUARD_MM {
                return Err(Error::Scenario(
                    "magnet: must sit at least 5 mm off the sensor plane".into(),
                ));
            }
        }
        if self.segments.is_empty() {
            return Err(Error::Scenario("segments must not be empty".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.duration.is_finite() && seg.duration > 0.0) {
                return Err(Error::Scenario(format!("segments[{i}].duration must be positive")));
            }
            if seg.kind == SegmentKind::MoveTo && seg.target.is_none() {
                return Err(Error::Scenario(format!("segments[{i}]: move_to requires a target")));
            }
            if let Some(t) = seg.target {
                if !(t.x().is_finite() && t.y().is_finite() && t.theta().is_finite()) {
                    return Err(Error::Scenario(format!("segments[{i}].target must be finite")));
                }
            }
        }
        if !matches!(
            self.segments[0].kind,
            SegmentKind::HoldAloft | SegmentKind::LowerAndPlace
        ) {
            return Err(Error::Scenario(
                "segments[0] must be hold_aloft or lower_and_place".into(),
            ));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Same motion with every noise source and bias switched off.
    pub fn noise_free(mut self) -> Self {
        self.noise = SensorNoise::ZERO;
        self.bias_true = [0.0; 3];
        self
    }
}

/// One ground-truth sample, aligned with one synthetic sensor sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSample {
    pub t: f64,
    pub pose: Pose2D,
    pub contact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub samples: Vec<TruthSample>,
    /// Time and pose at which the scripted hold triggers a capture.
    pub capture: Option<(f64, Pose2D)>,
}

impl GroundTruth {
    pub fn capture_pose(&self) -> Option<Pose2D> {
        self.capture.map(|(_, p)| p)
    }
}

/// Fraction of a ⅓-⅓-⅓ trapezoidal move completed at normalized time `tau`.
pub fn trapezoid_progress(tau: f64) -> f64 {
    let tau = tau.clamp(0.0, 1.0);
    if tau < 1.0 / 3.0 {
        2.25 * tau * tau
    } else if tau <= 2.0 / 3.0 {
        0.25 + 1.5 * (tau - 1.0 / 3.0)
    } else {
        1.0 - 2.25 * (1.0 - tau) * (1.0 - tau)
    }
}

#[derive(Debug, Clone, Copy)]
enum PieceMotion {
    Still(Pose2D),
    Move { from: Pose2D, to: Pose2D, turn: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    t0: f64,
    t1: f64,
    motion: PieceMotion,
    /// Contact starts at this time within the piece (None: never).
    contact_from: Option<f64>,
}

impl Piece {
    fn sample(&self, t: f64) -> TruthSample {
        let pose = match self.motion {
            PieceMotion::Still(p) => p,
            PieceMotion::Move { from, to, turn } => {
                let tau = (t - self.t0) / (self.t1 - self.t0);
                let s = trapezoid_progress(tau);
                Pose2D::new(
                    from.x() + (to.x() - from.x()) * s,
                    from.y() + (to.y() - from.y()) * s,
                    from.theta() + turn * tau.clamp(0.0, 1.0),
                )
            }
        };
        TruthSample {
            t,
            pose,
            contact: self.contact_from.is_some_and(|c| t >= c),
        }
    }
}

/// Converts the scripted segments into sampled ground truth at `scenario.rate`.
pub fn plan_trajectory(scenario: &Scenario) -> Result<GroundTruth> {
    scenario.validate()?;
    let hold_needed = DetectorConfig::default().parallel_hold_duration;
    let mut pieces = Vec::with_capacity(scenario.segments.len());
    let mut pose = Pose2D::IDENTITY;
    let mut placed = false;
    let mut t0 = 0.0;
    let mut capture = None;
    for (i, seg) in scenario.segments.iter().enumerate() {
        let t1 = t0 + seg.duration;
        let need = |want_placed: bool| -> Result<()> {
            if placed == want_placed {
                Ok(())
            } else {
                let state = if placed { "placed" } else { "aloft" };
                Err(Error::Scenario(format!(
                    "segments[{i}]: {:?} is not allowed while {state}",
                    seg.kind
                )))
            }
        };
        let piece = match seg.kind {
            SegmentKind::HoldAloft => {
                need(false)?;
                if capture.is_none() && seg.duration >= hold_needed {
                    capture = Some((t0 + hold_needed, pose));
                }
                Piece {
                    t0,
                    t1,
                    motion: PieceMotion::Still(pose),
                    contact_from: None,
                }
            }
            SegmentKind::LowerAndPlace => {
                need(false)?;
                placed = true;
                let touch = t0 + 0.5 * seg.duration;
                Piece {
                    t0,
                    t1,
                    motion: PieceMotion::Still(pose),
                    contact_from: Some(touch),
                }
            }
            SegmentKind::Pause => {
                need(true)?;
                Piece {
                    t0,
                    t1,
                    motion: PieceMotion::Still(pose),
                    contact_from: Some(t0),
                }
            }
            SegmentKind::Lift => {
                need(true)?;
                placed = false;
                Piece {
                    t0,
                    t1,
                    motion: PieceMotion::Still(pose),
                    contact_from: None,
                }
            }
            SegmentKind::MoveTo => {
                need(true)?;
                let to = seg.target.expect("validated");
                let turn = normalize_angle(to.theta() - pose.theta());
                let from = pose;
                pose = to;
                Piece {
                    t0,
                    t1,
                    motion: PieceMotion::Move { from, to, turn },
                    contact_from: Some(t0),
                }
            }
        };
        pieces.push(piece);
        t0 = t1;
    }

    let total = t0;
    let n = (total * scenario.rate + 1e-6).floor() as usize + 1;
    let mut samples = Vec::with_capacity(n);
    let mut idx = 0;
    for k in 0..n {
        let t = k as f64 / scenario.rate;
        while idx + 1 < pieces.len() && t >= pieces[idx].t1 {
            idx += 1;
        }
        samples.push(pieces[idx].sample(t));
    }
    Ok(GroundTruth { samples, capture })
}

/// Incremental truth → sensor conversion. Shared by offline synthesis and
/// live sessions, which feed truth one sample at a time.
#[derive(Debug, Clone)]
pub struct ImuSynthesizer {
    rng: CounterRng,
    noise: SensorNoise,
    bias_true: [f64; 3],
    magnet: Option<MagneticSetup>,
    index: u64,
    bias_walk: [f64; 3],
    prev: Option<(TruthSample, [f64; 2])>,
}

impl ImuSynthesizer {
    pub fn new(seed: u64, noise: SensorNoise, bias_true: [f64; 3], magnet: Option<MagneticSetup>) -> Self {
        ImuSynthesizer {
            rng: CounterRng::new(seed),
            noise,
            bias_true,
            magnet,
            index: 0,
            bias_walk: [0.0; 3],
            prev: None,
        }
    }

    pub fn for_scenario(scenario: &Scenario) -> Self {
        ImuSynthesizer::new(scenario.seed, scenario.noise, scenario.bias_true, scenario.magnet)
    }

    pub fn last_truth(&self) -> Option<&TruthSample> {
        self.prev.as_ref().map(|(t, _)| t)
    }

    /// Sensor sample for the next truth sample. Truth times must increase.
    pub fn next(&mut self, truth: &TruthSample) -> ImuSample {
        let k = self.index;
        self.index += 1;
        let rng = self.rng;
        let n = &self.noise;

        let (accel_world, turn_rate, prev_theta, velocity, dt) = match &self.prev {
            None => ([0.0; 2], 0.0, truth.pose.theta(), [0.0; 2], 0.0),
            Some((p, v_prev)) => {
                let dt = truth.t - p.t;
                let v = [
                    (truth.pose.x() - p.pose.x()) * 1e-3 / dt,
                    (truth.pose.y() - p.pose.y()) * 1e-3 / dt,
                ];
                let a = [(v[0] - v_prev[0]) / dt, (v[1] - v_prev[1]) / dt];
                let w = normalize_angle(truth.pose.theta() - p.pose.theta()) / dt;
                (a, w, p.pose.theta(), v, dt)
            }
        };

        if dt > 0.0 {
            let sq = dt.sqrt();
            self.bias_walk[0] += n.bias_acc_rw * sq * rng.gaussian(k, Channel::BiasAccX);
            self.bias_walk[1] += n.bias_acc_rw * sq * rng.gaussian(k, Channel::BiasAccY);
            self.bias_walk[2] += n.bias_gyro_rw * sq * rng.gaussian(k, Channel::BiasGyroZ);
        }
        let bias = [
            self.bias_true[0] + self.bias_walk[0],
            self.bias_true[1] + self.bias_walk[1],
            self.bias_true[2] + self.bias_walk[2],
        ];

        let (s, c) = prev_theta.sin_cos();
        let acc_dev = [
            c * accel_world[0] + s * accel_world[1],
            -s * accel_world[0] + c * accel_world[1],
        ];
        let acc = [
            acc_dev[0] + bias[0] + n.acc * rng.gaussian(k, Channel::AccX),
            acc_dev[1] + bias[1] + n.acc * rng.gaussian(k, Channel::AccY),
            GRAVITY + n.acc * rng.gaussian(k, Channel::AccZ),
        ];
        let gyro = [
            n.gyro * rng.gaussian(k, Channel::GyroX),
            n.gyro * rng.gaussian(k, Channel::GyroY),
            turn_rate + bias[2] + n.gyro * rng.gaussian(k, Channel::GyroZ),
        ];
        let mag = self.magnet.as_ref().map(|m| {
            let b = m
                .device_field(truth.pose.x(), truth.pose.y(), truth.pose.theta())
                .expect("scenario validation keeps the sensor outside the guard radius");
            [
                b[0] + n.mag * rng.gaussian(k, Channel::MagX),
                b[1] + n.mag * rng.gaussian(k, Channel::MagY),
                b[2] + n.mag * rng.gaussian(k, Channel::MagZ),
            ]
        });
        let base = if truth.contact { LUM_CONTACT } else { LUM_ALOFT };
        let lum = (base + n.lum * rng.symmetric(k, Channel::Lum)).clamp(0.0, 1.0);

        self.prev = Some((*truth, velocity));
        ImuSample {
            t: truth.t,
            acc,
            gyro,
            mag,
            lum,
        }
    }
}

/// Synthetic sensor stream for a planned trajectory.
pub fn synthesize_imu(truth: &GroundTruth, scenario: &Scenario) -> Vec<ImuSample> {
    let mut synth = ImuSynthesizer::for_scenario(scenario);
    truth.samples.iter().map(|t| synth.next(t)).collect()
}

/// The surface image "captured" at the scripted capture moment.
pub fn capture_surface(scenario: &Scenario, truth: &GroundTruth, base_dir: Option<&Path>) -> Result<SurfaceMap> {
    if truth.capture.is_none() {
        return Err(Error::Scenario(
            "no capture moment: the scenario needs a hold_aloft segment at least as long as the hold duration".into(),
        ));
    }
    match &scenario.map_source {
        MapSource::Generate(spec) => spec.generate(),
        MapSource::File(path) => {
            let path = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            SurfaceMap::load(&path)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// mm.
    pub rmse_pos: f64,
    /// mm.
    pub final_err: f64,
    /// mm.
    pub max_err: f64,
    /// rad.
    pub rmse_heading: f64,
}

/// Error statistics of time-aligned pose estimates against ground truth.
pub fn evaluate(truth: &[TruthSample], estimates: &[(f64, Pose2D)]) -> Result<Metrics> {
    if truth.len() != estimates.len() {
        return Err(Error::Evaluation(format!(
            "{} truth samples but {} estimates",
            truth.len(),
            estimates.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Evaluation("no samples".into()));
    }
    let mut sum_pos = 0.0;
    let mut sum_head = 0.0;
    let mut max_err: f64 = 0.0;
    let mut last = 0.0;
    for (i, (tr, (t, est))) in truth.iter().zip(estimates).enumerate() {
        if (tr.t - t).abs() > 1e-9 * tr.t.abs().max(1.0) {
            return Err(Error::Evaluation(format!(
                "timestamp mismatch at row {i}: truth {} vs estimate {t}",
                tr.t
            )));
        }
        let e = tr.pose.distance(est);
        let h = normalize_angle(tr.pose.theta() - est.theta());
        sum_pos += e * e;
        sum_head += h * h;
        max_err = max_err.max(e);
        last = e;
    }
    let n = truth.len() as f64;
    Ok(Metrics {
        rmse_pos: (sum_pos / n).sqrt(),
        final_err: last,
        max_err,
        rmse_heading: (sum_head / n).sqrt(),
    })
}

/// Built-in scenarios, by name.
pub mod builtin {
    use super::*;

    pub const NAMES: [&str; 5] = [
        "straight_line",
        "u_turn",
        "square_loop",
        "rotate_in_place",
        "magnetic_drift",
    ];

    fn opening() -> Vec<Segment> {
        vec![
            Segment::new(SegmentKind::HoldAloft, 1.2),
            Segment::new(SegmentKind::LowerAndPlace, 0.4),
        ]
    }

    fn scenario(segments: Vec<Segment>) -> Scenario {
        Scenario {
            seed: 1,
            rate: 1000.0,
            geometry: DeviceGeometry::default(),
            map_source: MapSource::default(),
            noise: SensorNoise::default(),
            bias_true: [0.0; 3],
            magnet: None,
            segments,
        }
    }

    pub fn straight_line() -> Scenario {
        let mut s = opening();
        s.extend([
            Segment::new(SegmentKind::Pause, 2.0),
            Segment::move_to(Pose2D::new(150.0, 0.0, 0.0), 1.5),
            Segment::new(SegmentKind::Pause, 1.5),
        ]);
        scenario(s)
    }

    pub fn u_turn() -> Scenario {
        let mut s = opening();
        s.extend([
            Segment::new(SegmentKind::Pause, 3.0),
            Segment::move_to(Pose2D::new(200.0, 0.0, 0.0), 2.0),
            Segment::move_to(Pose2D::new(200.0, 100.0, PI), 2.0),
            Segment::move_to(Pose2D::new(0.0, 100.0, PI), 2.0),
            Segment::new(SegmentKind::Pause, 1.0),
        ]);
        scenario(s)
    }

    pub fn square_loop() -> Scenario {
        let mut s = opening();
        s.push(Segment::new(SegmentKind::Pause, 2.0));
        let corners = [
            (150.0, 0.0, PI / 2.0),
            (150.0, 150.0, PI),
            (0.0, 150.0, -PI / 2.0),
            (0.0, 0.0, 0.0),
        ];
        for (x, y, th) in corners {
            s.push(Segment::move_to(Pose2D::new(x, y, th), 1.5));
            s.push(Segment::new(SegmentKind::Pause, 1.0));
        }
        scenario(s)
    }

    pub fn rotate_in_place() -> Scenario {
        let mut s = opening();
        s.push(Segment::new(SegmentKind::Pause, 2.0));
        for th in [PI / 2.0, PI, -PI / 2.0, 0.0] {
            s.push(Segment::move_to(Pose2D::new(0.0, 0.0, th), 1.5));
            s.push(Segment::new(SegmentKind::Pause, 0.5));
        }
        scenario(s)
    }

    /// Thirty seconds of uninterrupted motion around a dipole beacon.
    pub fn magnetic_drift() -> Scenario {
        let mut s = opening();
        let waypoints = [
            (80.0, 0.0, 0.3),
            (60.0, 60.0, 0.8),
            (0.0, 80.0, 1.4),
            (-60.0, 50.0, 2.0),
            (-80.0, 0.0, 2.6),
            (-50.0, -60.0, -2.6),
            (0.0, -80.0, -2.0),
            (60.0, -50.0, -1.2),
            (30.0, 20.0, -0.4),
            (-30.0, 40.0, 0.4),
            (-40.0, -20.0, 1.0),
            (20.0, -40.0, 0.2),
            (50.0, 30.0, -0.5),
            (-20.0, 10.0, 0.0),
            (0.0, 0.0, 0.0),
        ];
        for (x, y, th) in waypoints {
            s.push(Segment::move_to(Pose2D::new(x, y, th), 2.0));
        }
        let mut sc = scenario(s);
        sc.bias_true = [0.02, -0.015, 0.001];
        sc.magnet = Some(MagneticSetup {
            magnet: crate::tracker::MagnetModel {
                position: [0.0, 0.0, -95.0],
                moment: [0.0, 0.0, 1.0],
            },
            ambient: [20.0, 0.0, -40.0],
            sensor_height: 5.0,
        });
        sc
    }

    pub fn by_name(name: &str) -> Option<Scenario> {
        match name {
            "straight_line" => Some(straight_line()),
            "u_turn" => Some(u_turn()),
            "square_loop" => Some(square_loop()),
            "rotate_in_place" => Some(rotate_in_place()),
            "magnetic_drift" => Some(magnetic_drift()),
            _ => None,
        }
    }
}
