//! The per-sample tracking pipeline shared by offline replay and live
//! sessions: mode machine, anchoring on placement, prediction, stationary
//! and magnetic updates.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2D;
use crate::motion_events::{DetectorConfig, DeviceMode, Event, ImuSample, ModeTracker};
use crate::tracker::{
    anchor, mag_update, predict_with, zero_velocity_distance, zupt_update, FilterState, InitialUncertainty,
    MagneticSetup, Motion, NoiseParams, UpdateOutcome, ZuptOutcome, BAX, BAY, GATE_SIGMA, STATE_DIM,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub noise: NoiseParams,
    pub initial: InitialUncertainty,
    pub magnet: Option<MagneticSetup>,
    /// Pose the filter is anchored at on every placement.
    pub placement_pose: Pose2D,
    pub zupt_enabled: bool,
    pub mag_enabled: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detector: DetectorConfig::default(),
            noise: NoiseParams::default(),
            initial: InitialUncertainty::default(),
            magnet: None,
            placement_pose: Pose2D::IDENTITY,
            zupt_enabled: true,
            mag_enabled: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.noise.validate()?;
        if let Some(m) = &self.magnet {
            m.validate()?;
        }
        if self.initial.stds().iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::domain("initial uncertainties must be non-negative"));
        }
        Ok(())
    }
}

/// Everything the pipeline decided for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub t: f64,
    /// Current estimate; the last estimate (or the placement pose) while no
    /// filter is running.
    pub pose: Pose2D,
    pub filter: Option<FilterState>,
    pub mode: DeviceMode,
    pub events: Vec<Event>,
    /// Whether the sample was treated as stationary (held prediction + ZUPT).
    pub held: bool,
    pub zupt: Option<ZuptOutcome>,
    pub mag: Option<UpdateOutcome>,
    /// The filter was restarted at the last estimate after a sample gap.
    pub reanchored: bool,
}

impl StepOutput {
    pub fn cov_diag(&self) -> Option<[f64; STATE_DIM]> {
        self.filter.as_ref().map(FilterState::cov_diag)
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    modes: ModeTracker,
    filter: Option<FilterState>,
    last_pose: Pose2D,
    /// Recent planar accelerometer readings, for the stationary consistency check.
    acc_window: VecDeque<(f64, [f64; 2])>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            modes: ModeTracker::new(cfg.detector)?,
            filter: None,
            last_pose: cfg.placement_pose,
            acc_window: VecDeque::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn mode(&self) -> DeviceMode {
        self.modes.mode()
    }

    pub fn filter(&self) -> Option<&FilterState> {
        self.filter.as_ref()
    }

    pub fn pose(&self) -> Pose2D {
        self.filter.as_ref().map_or(self.last_pose, FilterState::pose)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.modes.last_time()
    }

    /// Back to aloft with no filter; configuration is kept.
    pub fn reset(&mut self) {
        self.modes.reset();
        self.filter = None;
        self.last_pose = self.cfg.placement_pose;
        self.acc_window.clear();
    }

    /// Processes one sample. On error the pipeline is left unchanged.
    pub fn step(&mut self, sample: &ImuSample) -> Result<StepOutput> {
        sample.validate()?;
        if let Some(prev) = self.modes.last_time() {
            if !(sample.t > prev) {
                return Err(Error::Stream { prev, t: sample.t });
            }
        }
        let events = self.modes.step(sample)?;
        self.push_acc(sample);

        let mut out = StepOutput {
            t: sample.t,
            pose: self.last_pose,
            filter: None,
            mode: self.modes.mode(),
            events,
            held: false,
            zupt: None,
            mag: None,
            reanchored: false,
        };

        let placed_now = out.events.contains(&Event::Placed);
        if out.events.contains(&Event::Lifted) {
            self.filter = None;
        }
        if placed_now {
            self.filter = Some(anchor(&self.cfg.placement_pose, sample.t, &self.cfg.initial.stds())?);
        } else if let Some(state) = self.filter.take() {
            self.filter = Some(self.advance(state, sample, &mut out)?);
        }

        if let Some(f) = &self.filter {
            self.last_pose = f.pose();
        }
        out.pose = self.last_pose;
        out.filter = self.filter.clone();
        Ok(out)
    }

    fn advance(&mut self, state: FilterState, sample: &ImuSample, out: &mut StepOutput) -> Result<FilterState> {
        let noise = &self.cfg.noise;
        let held = self.cfg.zupt_enabled
            && out.mode.is_stationary()
            && zero_velocity_distance(&state) <= GATE_SIGMA
            && self.acceleration_consistent(&state);
        let motion = if held { Motion::Held } else { Motion::Free };
        let mut next = match predict_with(&state, sample, noise, motion) {
            Ok(s) => s,
            Err(Error::Gap { .. }) => {
                out.reanchored = true;
                anchor(&state.pose(), sample.t, &self.cfg.initial.stds())?
            }
            Err(e) => return Err(e),
        };
        if held && !out.reanchored {
            let (s, outcome) = zupt_update(&next, sample.gyro[2], noise);
            next = s;
            out.zupt = Some(outcome);
        }
        out.held = held;
        if self.cfg.mag_enabled {
            if let Some(setup) = &self.cfg.magnet {
                let (s, outcome) = mag_update(&next, sample, setup, noise);
                next = s;
                out.mag = Some(outcome);
            }
        }
        Ok(next)
    }

    fn push_acc(&mut self, sample: &ImuSample) {
        self.acc_window.push_back((sample.t, [sample.acc[0], sample.acc[1]]));
        let start = sample.t - self.cfg.detector.stationary_window - 1e-9;
        while self.acc_window.front().is_some_and(|(t, _)| *t < start) {
            self.acc_window.pop_front();
        }
    }

    /// A window with low variance can still be a steady acceleration, or
    /// hide one that has just begun. The bias-corrected mean of every
    /// trailing stretch of the window must be consistent with rest.
    fn acceleration_consistent(&self, state: &FilterState) -> bool {
        let var_acc = self.cfg.noise.sigma_acc.powi(2);
        let gate2 = GATE_SIGMA * GATE_SIGMA;
        [BAX, BAY].iter().enumerate().all(|(axis, &b)| {
            let bias = state.mean[b];
            let var_bias = state.cov[(b, b)];
            let mut sum = 0.0;
            self.acc_window.iter().rev().enumerate().all(|(i, (_, a))| {
                sum += a[axis] - bias;
                let n = (i + 1) as f64;
                let mean = sum / n;
                mean * mean <= gate2 * (var_acc / n + var_bias)
            })
        }) && !self.acc_window.is_empty()
    }
}

/// Runs a whole trace, stopping at the first error.
pub fn run_trace(cfg: &PipelineConfig, samples: &[ImuSample]) -> Result<Vec<StepOutput>> {
    let mut p = Pipeline::new(cfg.clone())?;
    samples.iter().map(|s| p.step(s)).collect()
}
