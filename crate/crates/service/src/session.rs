//! One tracking session: a sequential pipeline turning client batches into
//! ordered server messages. Transport-agnostic and synchronous.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use camo_core::geometry::{normalize_angle, Pose2D, SurfaceMap};
use camo_core::motion_events::ImuSample;
use camo_core::pipeline::{Pipeline, PipelineConfig, StepOutput};
use camo_core::renderer::{render_placeholder, render_screen};
use camo_core::simulator::{ImuSynthesizer, TruthSample};
use camo_core::tracker::DIPOLE_GUARD_MM;
use image::{ImageFormat, RgbImage};

use crate::protocol::{
    AckOp, ClientMessage, ErrorCode, FrameDelivery, MapSpec, PointerPose, ServerMessage, SessionConfig, SessionMode,
};

pub const DEFAULT_DECIMATION: u32 = 5;
const MAX_ID_LEN: usize = 128;
/// Pitch of the simulated device while the UI reports it being lifted.
const LIFT_TILT_RAD: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{detail}")]
pub struct SessionError {
    pub code: ErrorCode,
    pub detail: String,
}

impl SessionError {
    fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        SessionError {
            code,
            detail: detail.into(),
        }
    }

    fn invalid(detail: impl std::fmt::Display) -> Self {
        SessionError::new(ErrorCode::InvalidConfig, detail.to_string())
    }

    pub fn into_message(self) -> ServerMessage {
        ServerMessage::error(self.code, self.detail)
    }
}

/// Server-side truth → IMU synthesis for `live_pointer` sessions.
#[derive(Debug, Clone)]
struct PointerFeed {
    synth: ImuSynthesizer,
    last: Option<PointerPose>,
    /// Time of sample 0 of the synthesis grid.
    origin: f64,
    next_index: u64,
}

impl PointerFeed {
    fn new(cfg: &SessionConfig) -> Self {
        let p = &cfg.pointer;
        PointerFeed {
            synth: ImuSynthesizer::new(p.seed, p.noise, p.bias_true, cfg.magnet),
            last: None,
            origin: 0.0,
            next_index: 0,
        }
    }

    /// Synthesized samples up to and including `pose.t`, interpolating the
    /// pose linearly (heading along the shorter arc) from the previous one.
    fn advance(&mut self, pose: &PointerPose, rate: f64) -> Result<Vec<ImuSample>, SessionError> {
        let finite = [pose.t, pose.x_mm, pose.y_mm, pose.theta_rad]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SessionError::new(ErrorCode::BadMessage, "pointer pose must be finite"));
        }
        let Some(prev) = self.last else {
            self.last = Some(*pose);
            self.origin = pose.t;
            self.next_index = 1;
            return Ok(vec![self.emit(pose, pose.t)]);
        };
        if !(pose.t > prev.t) {
            return Err(SessionError::new(
                ErrorCode::Stream,
                format!("pointer timestamp {} does not follow {}", pose.t, prev.t),
            ));
        }
        let dtheta = normalize_angle(pose.theta_rad - prev.theta_rad);
        let mut out = Vec::new();
        loop {
            let t = self.origin + self.next_index as f64 / rate;
            if t > pose.t + 1e-12 {
                break;
            }
            let f = (t - prev.t) / (pose.t - prev.t);
            let at = PointerPose {
                t,
                x_mm: prev.x_mm + (pose.x_mm - prev.x_mm) * f,
                y_mm: prev.y_mm + (pose.y_mm - prev.y_mm) * f,
                theta_rad: prev.theta_rad + dtheta * f,
                ..*pose
            };
            out.push(self.emit(&at, t));
            self.next_index += 1;
        }
        self.last = Some(*pose);
        Ok(out)
    }

    fn emit(&mut self, pose: &PointerPose, t: f64) -> ImuSample {
        let truth = TruthSample {
            t,
            pose: Pose2D::new(pose.x_mm, pose.y_mm, pose.theta_rad),
            contact: pose.contact,
        };
        let mut s = self.synth.next(&truth);
        if pose.lifting {
            // Pitch up about the device x axis.
            let (sin, cos) = LIFT_TILT_RAD.sin_cos();
            let [x, y, z] = s.acc;
            s.acc = [x, cos * y + sin * z, -sin * y + cos * z];
        }
        s
    }
}

pub struct Session {
    config: SessionConfig,
    pipeline: Pipeline,
    map: SurfaceMap,
    decimation: u32,
    samples: u64,
    seq: u64,
    pointer: Option<PointerFeed>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.config.session_id)
            .field("mode", &self.pipeline.mode())
            .field("seq", &self.seq)
            .finish_non_exhaustive()
    }
}

fn decode_map(spec: &MapSpec) -> Result<SurfaceMap, SessionError> {
    match spec {
        MapSpec::Simulate(p) => p.generate().map_err(SessionError::invalid),
        MapSpec::Inline { png_base64, mm_per_px } => {
            let bytes = B64
                .decode(png_base64)
                .map_err(|e| SessionError::invalid(format!("map.inline.png_base64: {e}")))?;
            let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
                .map_err(|e| SessionError::invalid(format!("map.inline: {e}")))?
                .to_rgb8();
            SurfaceMap::new(img, *mm_per_px).map_err(SessionError::invalid)
        }
    }
}

pub fn encode_png(img: &RgbImage) -> String {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    B64.encode(buf.into_inner())
}

impl Session {
    /// Validates the configuration and builds the session in ALOFT mode.
    pub fn open(config: SessionConfig, default_decimation: u32) -> Result<Session, SessionError> {
        let id = &config.session_id;
        if id.is_empty() || id.len() > MAX_ID_LEN || id.chars().any(char::is_control) {
            return Err(SessionError::invalid("session_id must be 1-128 printable characters"));
        }
        config
            .geometry
            .validate()
            .map_err(|e| SessionError::invalid(format!("geometry: {e}")))?;
        let decimation = config.decimation.unwrap_or(default_decimation);
        if decimation == 0 {
            return Err(SessionError::invalid("decimation must be at least 1"));
        }
        let pipeline = Pipeline::new(PipelineConfig {
            detector: config.detector,
            noise: config.noise,
            magnet: config.magnet,
            placement_pose: config.placement_pose,
            zupt_enabled: config.zupt_enabled,
            mag_enabled: config.mag_enabled,
            ..PipelineConfig::default()
        })
        .map_err(SessionError::invalid)?;
        let pointer = match config.mode {
            SessionMode::LivePointer => {
                let p = &config.pointer;
                if !(50.0..=2000.0).contains(&p.rate) {
                    return Err(SessionError::invalid("pointer.rate must be in [50, 2000] Hz"));
                }
                p.noise.validate().map_err(SessionError::invalid)?;
                if let Some(m) = &config.magnet {
                    if (m.magnet.position[2] - m.sensor_height).abs() < DIPOLE_GUARD_MM {
                        return Err(SessionError::invalid(
                            "magnet must sit at least 5 mm off the sensor plane for pointer synthesis",
                        ));
                    }
                }
                Some(PointerFeed::new(&config))
            }
            SessionMode::Replay | SessionMode::LiveImu => None,
        };
        let map = decode_map(&config.map)?;
        Ok(Session {
            config,
            pipeline,
            map,
            decimation,
            samples: 0,
            seq: 0,
            pointer,
        })
    }

    pub fn id(&self) -> &str {
        &self.config.session_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn ack(&self) -> ServerMessage {
        ServerMessage::Ack {
            session_id: self.config.session_id.clone(),
            op: AckOp::Init,
            map: Some(self.map.metadata()),
        }
    }

    /// Handles one post-init client message.
    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Init { .. } => vec![ServerMessage::error(
                ErrorCode::AlreadyInitialized,
                "this connection already has a session",
            )],
            ClientMessage::Imu { samples } => self.ingest_imu(&samples),
            ClientMessage::Pointer { poses } => self.ingest_pointer(&poses),
            ClientMessage::Reset => vec![self.reset()],
            ClientMessage::FrameRequest => vec![self.frame(self.seq)],
        }
    }

    pub fn ingest_imu(&mut self, samples: &[ImuSample]) -> Vec<ServerMessage> {
        if self.pointer.is_some() {
            return vec![ServerMessage::error(
                ErrorCode::ModeMismatch,
                "imu batches are not accepted in live_pointer mode",
            )];
        }
        let mut out = Vec::new();
        for s in samples {
            if let Err(e) = self.process(s, &mut out) {
                out.push(e.into_message());
                break;
            }
        }
        out
    }

    pub fn ingest_pointer(&mut self, poses: &[PointerPose]) -> Vec<ServerMessage> {
        let rate = self.config.pointer.rate;
        let mut out = Vec::new();
        for p in poses {
            let Some(feed) = self.pointer.as_mut() else {
                return vec![ServerMessage::error(
                    ErrorCode::ModeMismatch,
                    "pointer batches need a live_pointer session",
                )];
            };
            let synthesized = match feed.advance(p, rate) {
                Ok(s) => s,
                Err(e) => {
                    out.push(e.into_message());
                    break;
                }
            };
            for s in &synthesized {
                if let Err(e) = self.process(s, &mut out) {
                    out.push(e.into_message());
                    return out;
                }
            }
        }
        out
    }

    fn process(&mut self, sample: &ImuSample, out: &mut Vec<ServerMessage>) -> Result<(), SessionError> {
        let step = self.pipeline.step(sample).map_err(|e| match e {
            camo_core::Error::Stream { .. } | camo_core::Error::Gap { .. } => {
                SessionError::new(ErrorCode::Stream, e.to_string())
            }
            camo_core::Error::Domain(_) => SessionError::new(ErrorCode::BadMessage, e.to_string()),
            other => SessionError::new(ErrorCode::Internal, other.to_string()),
        })?;
        out.extend(step.events.iter().map(|e| ServerMessage::Event {
            name: e.name().to_string(),
            t: step.t,
        }));
        self.samples += 1;
        if self.samples.is_multiple_of(u64::from(self.decimation)) {
            self.seq += 1;
            out.push(state_message(self.seq, &step));
            if self.config.frame_delivery == FrameDelivery::ServerRendered {
                out.push(self.frame(self.seq));
            }
        }
        Ok(())
    }

    /// Back to ALOFT without a filter; the map and sequence numbers persist.
    pub fn reset(&mut self) -> ServerMessage {
        self.pipeline.reset();
        if self.pointer.is_some() {
            self.pointer = Some(PointerFeed::new(&self.config));
        }
        ServerMessage::Ack {
            session_id: self.config.session_id.clone(),
            op: AckOp::Reset,
            map: None,
        }
    }

    /// Screen content for the current estimate; a fill-colour placeholder
    /// while the device is not placed.
    pub fn render(&self) -> RgbImage {
        let g = &self.config.geometry;
        if self.pipeline.mode().is_placed() {
            render_screen(&self.pipeline.pose(), g, &self.map, &self.config.render)
        } else {
            render_placeholder(g, &self.config.render, None).expect("no glyph to place")
        }
    }

    pub fn frame(&self, seq: u64) -> ServerMessage {
        ServerMessage::Frame {
            seq,
            png_base64: encode_png(&self.render()),
        }
    }
}

fn state_message(seq: u64, step: &StepOutput) -> ServerMessage {
    ServerMessage::State {
        seq,
        t: step.t,
        pose: step.pose,
        cov_diag: step.cov_diag(),
        mode: step.mode.name().to_string(),
        stationary: step.mode.is_stationary(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use camo_core::simulator::{builtin, plan_trajectory, synthesize_imu, PatternSpec};

    fn small_map() -> MapSpec {
        MapSpec::Simulate(PatternSpec {
            width_mm: 200.0,
            height_mm: 200.0,
            ..PatternSpec::default()
        })
    }

    fn config(id: &str) -> SessionConfig {
        SessionConfig {
            map: small_map(),
            ..SessionConfig::new(id)
        }
    }

    fn states(msgs: &[ServerMessage]) -> Vec<(u64, Pose2D)> {
        msgs.iter()
            .filter_map(|m| match m {
                ServerMessage::State { seq, pose, .. } => Some((*seq, *pose)),
                _ => None,
            })
            .collect()
    }

    fn straight_line_trace() -> Vec<ImuSample> {
        let s = builtin::straight_line();
        synthesize_imu(&plan_trajectory(&s).unwrap(), &s)
    }

    #[test]
    fn open_validates() {
        let s = Session::open(config("a"), DEFAULT_DECIMATION).unwrap();
        assert!(matches!(s.ack(), ServerMessage::Ack { map: Some(_), .. }));
        for bad in [
            SessionConfig {
                decimation: Some(0),
                ..config("a")
            },
            config(""),
            SessionConfig {
                map: MapSpec::Inline {
                    png_base64: "!!".into(),
                    mm_per_px: 1.0,
                },
                ..config("a")
            },
        ] {
            let e = Session::open(bad, DEFAULT_DECIMATION).unwrap_err();
            assert_eq!(e.code, ErrorCode::InvalidConfig);
        }
    }

    #[test]
    fn inline_map_round_trip() {
        let img = RgbImage::from_fn(30, 20, |x, y| image::Rgb([x as u8, y as u8, 7]));
        let cfg = SessionConfig {
            map: MapSpec::Inline {
                png_base64: encode_png(&img),
                mm_per_px: 0.5,
            },
            ..config("m")
        };
        let s = Session::open(cfg, 5).unwrap();
        let ServerMessage::Ack { map: Some(meta), .. } = s.ack() else {
            panic!()
        };
        assert_eq!((meta.width_px, meta.height_px, meta.mm_per_px), (30, 20, 0.5));
    }

    #[test]
    fn decimation_and_sequence() {
        let trace = straight_line_trace();
        let mut s = Session::open(config("d"), DEFAULT_DECIMATION).unwrap();
        let mut all = Vec::new();
        for chunk in trace[..1000].chunks(37) {
            all.extend(s.ingest_imu(chunk));
        }
        let st = states(&all);
        assert_eq!(st.len(), 200);
        assert!(st.windows(2).all(|w| w[1].0 == w[0].0 + 1));
    }

    #[test]
    fn events_precede_their_state() {
        let trace = straight_line_trace();
        let mut s = Session::open(
            SessionConfig {
                decimation: Some(1),
                ..config("e")
            },
            5,
        )
        .unwrap();
        let msgs = s.ingest_imu(&trace);
        let placed = msgs
            .iter()
            .position(|m| matches!(m, ServerMessage::Event { name, .. } if name == "PLACED"))
            .unwrap();
        let ServerMessage::Event { t, .. } = &msgs[placed] else {
            unreachable!()
        };
        let ServerMessage::State { t: ts, mode, .. } = &msgs[placed + 1] else {
            panic!("{:?}", msgs[placed + 1])
        };
        assert_eq!((t, mode.as_str()), (ts, "PLACED_TRACKING"));
    }

    #[test]
    fn stationary_batch_pins_placement() {
        let trace = straight_line_trace();
        let placement = Pose2D::new(12.0, -3.0, 0.25);
        let mut s = Session::open(
            SessionConfig {
                placement_pose: placement,
                ..config("p")
            },
            5,
        )
        .unwrap();
        // Through placement and the first pause only.
        let msgs = s.ingest_imu(&trace[..3500]);
        let placed: Vec<_> = msgs
            .iter()
            .filter_map(|m| match m {
                ServerMessage::State {
                    pose, mode, stationary, ..
                } if mode == "PLACED_TRACKING" => Some((*pose, *stationary)),
                _ => None,
            })
            .collect();
        assert!(placed.iter().any(|(_, st)| *st));
        for (pose, _) in placed {
            assert!(pose.distance(&placement) < 0.1, "{pose:?}");
        }
    }

    #[test]
    fn stream_error_then_reset() {
        let trace = straight_line_trace();
        let mut s = Session::open(config("r"), 1).unwrap();
        s.ingest_imu(&trace[..100]);
        let mut batch = trace[100..110].to_vec();
        batch[5].t = 0.0;
        let out = s.ingest_imu(&batch);
        assert!(matches!(
            out.last(),
            Some(ServerMessage::Error {
                code: ErrorCode::Stream,
                ..
            })
        ));
        assert_eq!(states(&out).len(), 5);
        assert!(
            matches!(s.handle(ClientMessage::Reset), v if matches!(v[0], ServerMessage::Ack { op: AckOp::Reset, .. }))
        );
        assert!(matches!(
            s.handle(ClientMessage::Reset)[0],
            ServerMessage::Ack { op: AckOp::Reset, .. }
        ));
        // After a reset the stream may start over.
        let out = s.ingest_imu(&trace[..10]);
        assert_eq!(states(&out).len(), 10);
    }

    #[test]
    fn reset_then_place_reanchors() {
        let trace = straight_line_trace();
        let placement = Pose2D::new(4.0, 5.0, 0.0);
        let mut s = Session::open(
            SessionConfig {
                placement_pose: placement,
                ..config("x")
            },
            1,
        )
        .unwrap();
        s.ingest_imu(&trace[..5000]);
        s.reset();
        let out = s.ingest_imu(&trace[..2000]);
        let last = states(&out).last().unwrap().1;
        assert!(last.distance(&placement) < 0.1);
    }

    #[test]
    fn mode_mismatch() {
        let mut s = Session::open(config("mm"), 5).unwrap();
        let out = s.ingest_pointer(&[PointerPose {
            t: 0.0,
            x_mm: 0.0,
            y_mm: 0.0,
            theta_rad: 0.0,
            contact: false,
            lifting: false,
        }]);
        assert!(matches!(
            out[0],
            ServerMessage::Error {
                code: ErrorCode::ModeMismatch,
                ..
            }
        ));
    }

    fn pointer_session() -> Session {
        let cfg = SessionConfig {
            mode: SessionMode::LivePointer,
            decimation: Some(1),
            ..config("ptr")
        };
        Session::open(cfg, 5).unwrap()
    }

    fn pose(t: f64, x: f64, contact: bool) -> PointerPose {
        PointerPose {
            t,
            x_mm: x,
            y_mm: 0.0,
            theta_rad: 0.0,
            contact,
            lifting: false,
        }
    }

    /// UI-rate pointer script: hold aloft, place, pause, drag `dist` mm in
    /// `dur` s with smooth-step easing, pause.
    fn drag_script(dist: f64, dur: f64) -> Vec<PointerPose> {
        let hz = 60.0;
        let mut out = Vec::new();
        let mut t = 0.0;
        let mut push = |t: f64, x: f64, c: bool| out.push(pose(t, x, c));
        while t < 1.3 {
            push(t, 0.0, false);
            t += 1.0 / hz;
        }
        let drag_start = 3.5;
        while t < drag_start {
            push(t, 0.0, true);
            t += 1.0 / hz;
        }
        while t < drag_start + dur + 2.0 {
            let u = ((t - drag_start) / dur).clamp(0.0, 1.0);
            push(t, dist * u * u * (3.0 - 2.0 * u), true);
            t += 1.0 / hz;
        }
        out
    }

    #[test]
    fn pointer_drag_tracks_displacement() {
        let mut s = pointer_session();
        let msgs = s.ingest_pointer(&drag_script(50.0, 1.0));
        let names: Vec<_> = msgs
            .iter()
            .filter_map(|m| match m {
                ServerMessage::Event { name, .. } => Some(name.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(names[..3], ["CAPTURE_TRIGGERED", "PLACED", "STATIONARY_ENTER"]);
        let last = states(&msgs).last().unwrap().1;
        assert!((last.x() - 50.0).abs() < 1.0 && last.y().abs() < 1.0, "{last:?}");
    }

    #[test]
    fn pointer_lift_tilts_device() {
        let mut s = pointer_session();
        let mut script: Vec<PointerPose> = (0..200)
            .map(|i| PointerPose {
                lifting: true,
                ..pose(f64::from(i) / 60.0, 0.0, false)
            })
            .collect();
        let out = s.ingest_pointer(&script);
        assert!(!out.iter().any(|m| matches!(m, ServerMessage::Event { .. })));
        script = (200..300).map(|i| pose(f64::from(i) / 60.0, 0.0, false)).collect();
        let out = s.ingest_pointer(&script);
        assert!(out
            .iter()
            .any(|m| matches!(m, ServerMessage::Event { name, .. } if name == "CAPTURE_TRIGGERED")));
    }

    #[test]
    fn server_rendered_frames_follow_states() {
        let cfg = SessionConfig {
            frame_delivery: FrameDelivery::ServerRendered,
            decimation: Some(500),
            ..config("f")
        };
        let mut s = Session::open(cfg, 5).unwrap();
        let trace = straight_line_trace();
        let out = s.ingest_imu(&trace[..3000]);
        let mut expect_frame = None;
        for m in &out {
            match m {
                ServerMessage::State { seq, .. } => expect_frame = Some(*seq),
                ServerMessage::Frame { seq, png_base64 } => {
                    assert_eq!(Some(*seq), expect_frame.take());
                    let bytes = B64.decode(png_base64).unwrap();
                    let img = image::load_from_memory(&bytes).unwrap();
                    assert_eq!(img.width(), s.config().geometry.screen_px_w);
                }
                _ => {}
            }
        }
        assert_eq!(states(&out).len(), 6);
        assert!(matches!(
            s.handle(ClientMessage::FrameRequest)[0],
            ServerMessage::Frame { seq: 6, .. }
        ));
    }
}
