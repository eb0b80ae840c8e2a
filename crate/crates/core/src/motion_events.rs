//! Motion-condition detectors and the device-mode state machine.
//!
//! The detectors are pure functions of their input windows. [`ModeTracker`]
//! owns the sample history they need and turns detector output into the
//! `ALOFT → PARALLEL_HOLD → CAPTURE_READY → PLACED_TRACKING` lifecycle.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIME_EPS: f64 = 1e-9;

/// One timestamped reading from the phone's sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuSample {
    /// Seconds, monotonic.
    pub t: f64,
    /// Specific force in the device frame, m/s², gravity included.
    pub acc: [f64; 3],
    /// Angular rate in the device frame, rad/s.
    pub gyro: [f64; 3],
    /// Magnetic field in the device frame, µT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mag: Option<[f64; 3]>,
    /// Mean luminance of the downward camera, in [0, 1].
    pub lum: f64,
}

impl ImuSample {
    pub fn validate(&self) -> Result<()> {
        let finite = self.t.is_finite()
            && self.acc.iter().chain(&self.gyro).all(|v| v.is_finite())
            && self.mag.is_none_or(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::domain("sample contains non-finite values"));
        }
        if !(0.0..=1.0).contains(&self.lum) {
            return Err(Error::domain(format!("lum {} outside [0, 1]", self.lum)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Degrees.
    pub parallel_tilt_max: f64,
    /// Seconds.
    pub parallel_hold_duration: f64,
    /// Seconds.
    pub stationary_window: f64,
    /// m/s².
    pub stationary_acc_std_max: f64,
    /// rad/s.
    pub stationary_gyro_std_max: f64,
    pub contact_lum_max: f64,
    pub contact_confirm_samples: usize,
    /// m/s².
    pub gravity: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            parallel_tilt_max: 5.0,
            parallel_hold_duration: 1.0,
            stationary_window: 0.3,
            stationary_acc_std_max: 0.08,
            stationary_gyro_std_max: 0.01,
            contact_lum_max: 0.1,
            contact_confirm_samples: 5,
            gravity: 9.81,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("parallel_tilt_max", self.parallel_tilt_max),
            ("parallel_hold_duration", self.parallel_hold_duration),
            ("stationary_window", self.stationary_window),
            ("stationary_acc_std_max", self.stationary_acc_std_max),
            ("stationary_gyro_std_max", self.stationary_gyro_std_max),
            ("contact_lum_max", self.contact_lum_max),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.contact_confirm_samples == 0 {
            return Err(Error::domain("contact_confirm_samples must be positive"));
        }
        if self.parallel_tilt_max >= 90.0 {
            return Err(Error::domain("parallel_tilt_max must be below 90 degrees"));
        }
        Ok(())
    }
}

/// Notable transitions, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Event {
    CaptureTriggered,
    Placed,
    Lifted,
    StationaryEnter,
    StationaryExit,
}

impl Event {
    pub fn name(self) -> &'static str {
        match self {
            Event::CaptureTriggered => "CAPTURE_TRIGGERED",
            Event::Placed => "PLACED",
            Event::Lifted => "LIFTED",
            Event::StationaryEnter => "STATIONARY_ENTER",
            Event::StationaryExit => "STATIONARY_EXIT",
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceMode {
    Aloft,
    ParallelHold { hold_elapsed: f64 },
    CaptureReady,
    PlacedTracking { stationary: bool },
}

impl DeviceMode {
    pub fn name(&self) -> &'static str {
        match self {
            DeviceMode::Aloft => "ALOFT",
            DeviceMode::ParallelHold { .. } => "PARALLEL_HOLD",
            DeviceMode::CaptureReady => "CAPTURE_READY",
            DeviceMode::PlacedTracking { .. } => "PLACED_TRACKING",
        }
    }

    pub fn is_placed(&self) -> bool {
        matches!(self, DeviceMode::PlacedTracking { .. })
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self, DeviceMode::PlacedTracking { stationary: true })
    }
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Device held flat (gravity along +z within the tilt limit) and not spinning.
pub fn is_parallel(sample: &ImuSample, cfg: &DetectorConfig) -> bool {
    let g = norm(&sample.acc);
    if g == 0.0 {
        return false;
    }
    let tilt = (sample.acc[2] / g).clamp(-1.0, 1.0).acos().to_degrees();
    tilt <= cfg.parallel_tilt_max && norm(&sample.gyro) <= 10.0 * cfg.stationary_gyro_std_max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StationaryCheck {
    pub stationary: bool,
    /// The window was shorter than `stationary_window`; `stationary` is false.
    pub insufficient: bool,
}

/// Per-axis standard deviations of acc and gyro below their limits over a
/// window spanning at least `stationary_window`.
pub fn is_stationary(window: &[ImuSample], cfg: &DetectorConfig) -> StationaryCheck {
    let span = match (window.first(), window.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    if window.len() < 2 || span < cfg.stationary_window - TIME_EPS {
        return StationaryCheck {
            stationary: false,
            insufficient: true,
        };
    }
    let acc_ok = (0..3).all(|k| sample_std(window.iter().map(|s| s.acc[k])) <= cfg.stationary_acc_std_max);
    let gyro_ok = (0..3).all(|k| sample_std(window.iter().map(|s| s.gyro[k])) <= cfg.stationary_gyro_std_max);
    StationaryCheck {
        stationary: acc_ok && gyro_ok,
        insufficient: false,
    }
}

fn sample_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// The last `contact_confirm_samples` samples are all dark.
pub fn contact_state(samples: &[ImuSample], cfg: &DetectorConfig) -> bool {
    let n = cfg.contact_confirm_samples;
    samples.len() >= n
        && samples[samples.len() - n..]
            .iter()
            .all(|s| s.lum <= cfg.contact_lum_max)
}

/// Sequential device-mode state machine. One per session.
#[derive(Debug, Clone)]
pub struct ModeTracker {
    cfg: DetectorConfig,
    mode: DeviceMode,
    capture_armed: bool,
    history: VecDeque<ImuSample>,
}

impl ModeTracker {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ModeTracker {
            cfg,
            mode: DeviceMode::Aloft,
            capture_armed: true,
            history: VecDeque::new(),
        })
    }

    pub fn mode(&self) -> DeviceMode {
        self.mode
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Back to ALOFT with an empty history and capture re-armed.
    pub fn reset(&mut self) {
        self.mode = DeviceMode::Aloft;
        self.capture_armed = true;
        self.history.clear();
    }

    pub fn last_time(&self) -> Option<f64> {
        self.history.back().map(|s| s.t)
    }

    pub fn step(&mut self, sample: &ImuSample) -> Result<Vec<Event>> {
        sample.validate()?;
        let dt = match self.history.back() {
            Some(prev) if sample.t <= prev.t => {
                return Err(Error::Stream {
                    prev: prev.t,
                    t: sample.t,
                })
            }
            Some(prev) => sample.t - prev.t,
            None => 0.0,
        };
        self.push(*sample);

        let contact = contact_state(self.history.make_contiguous(), &self.cfg);
        let mut events = Vec::new();
        self.mode = match self.mode {
            DeviceMode::PlacedTracking { stationary } => {
                if contact {
                    let now = self.stationary_now();
                    if now != stationary {
                        events.push(if now {
                            Event::StationaryEnter
                        } else {
                            Event::StationaryExit
                        });
                    }
                    DeviceMode::PlacedTracking { stationary: now }
                } else {
                    if stationary {
                        events.push(Event::StationaryExit);
                    }
                    events.push(Event::Lifted);
                    self.capture_armed = true;
                    DeviceMode::Aloft
                }
            }
            _ if contact => {
                events.push(Event::Placed);
                DeviceMode::PlacedTracking { stationary: false }
            }
            DeviceMode::Aloft => {
                if self.capture_armed && is_parallel(sample, &self.cfg) {
                    DeviceMode::ParallelHold { hold_elapsed: 0.0 }
                } else {
                    DeviceMode::Aloft
                }
            }
            DeviceMode::ParallelHold { hold_elapsed } => {
                if is_parallel(sample, &self.cfg) {
                    let hold_elapsed = hold_elapsed + dt;
                    if hold_elapsed >= self.cfg.parallel_hold_duration - TIME_EPS {
                        events.push(Event::CaptureTriggered);
                        self.capture_armed = false;
                        DeviceMode::CaptureReady
                    } else {
                        DeviceMode::ParallelHold { hold_elapsed }
                    }
                } else {
                    DeviceMode::Aloft
                }
            }
            DeviceMode::CaptureReady => DeviceMode::CaptureReady,
        };
        Ok(events)
    }

    fn push(&mut self, sample: ImuSample) {
        self.history.push_back(sample);
        // Keep the newest sample at or before the window start (it proves the
        // window is fully covered) and at least the contact run.
        let boundary = sample.t - self.cfg.stationary_window + TIME_EPS;
        while self.history.len() > self.cfg.contact_confirm_samples.max(2) && self.history[1].t <= boundary {
            self.history.pop_front();
        }
    }

    fn stationary_now(&mut self) -> bool {
        let Some(front) = self.history.front() else {
            return false;
        };
        let now = self.history.back().map_or(0.0, |s| s.t);
        if front.t > now - self.cfg.stationary_window + TIME_EPS {
            return false;
        }
        let start = now - self.cfg.stationary_window - TIME_EPS;
        let window = self.history.make_contiguous();
        let first = window.partition_point(|s| s.t < start);
        is_stationary(&window[first..], &self.cfg).stationary
    }
}
