//! Wire protocol: JSON text messages tagged by `"type"`.

use camo_core::geometry::{DeviceGeometry, MapMetadata, Pose2D};
use camo_core::motion_events::{DetectorConfig, ImuSample};
use camo_core::renderer::RenderConfig;
use camo_core::simulator::{PatternSpec, SensorNoise};
use camo_core::tracker::{MagneticSetup, NoiseParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    /// Recorded IMU batches.
    #[default]
    Replay,
    /// IMU batches from a live device.
    LiveImu,
    /// Ground-truth poses from a UI; IMU is synthesized server-side.
    LivePointer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameDelivery {
    #[default]
    PosesOnly,
    ServerRendered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// A PNG the client already has.
    Inline { png_base64: String, mm_per_px: f64 },
    /// Generate a pattern server-side.
    Simulate(PatternSpec),
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec::Simulate(PatternSpec::default())
    }
}

/// Parameters of the server-side IMU synthesis in `live_pointer` mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointerSynthesis {
    /// Hz.
    pub rate: f64,
    pub seed: u64,
    pub noise: SensorNoise,
    pub bias_true: [f64; 3],
}

impl Default for PointerSynthesis {
    fn default() -> Self {
        PointerSynthesis {
            rate: 1000.0,
            seed: 0,
            noise: SensorNoise::ZERO,
            bias_true: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub session_id: String,
    #[serde(default)]
    pub geometry: DeviceGeometry,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub magnet: Option<MagneticSetup>,
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default)]
    pub mode: SessionMode,
    #[serde(default)]
    pub placement_pose: Pose2D,
    #[serde(default)]
    pub frame_delivery: FrameDelivery,
    #[serde(default)]
    pub render: RenderConfig,
    /// State messages are sent for every n-th sample; the server default
    /// applies when absent.
    #[serde(default)]
    pub decimation: Option<u32>,
    #[serde(default = "yes")]
    pub zupt_enabled: bool,
    #[serde(default = "yes")]
    pub mag_enabled: bool,
    /// Only used in `live_pointer` mode.
    #[serde(default)]
    pub pointer: PointerSynthesis,
}

fn yes() -> bool {
    true
}

impl SessionConfig {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionConfig {
            session_id: session_id.into(),
            geometry: DeviceGeometry::default(),
            detector: DetectorConfig::default(),
            noise: NoiseParams::default(),
            magnet: None,
            map: MapSpec::default(),
            mode: SessionMode::default(),
            placement_pose: Pose2D::IDENTITY,
            frame_delivery: FrameDelivery::default(),
            render: RenderConfig::default(),
            decimation: None,
            zupt_enabled: true,
            mag_enabled: true,
            pointer: PointerSynthesis::default(),
        }
    }
}

/// One UI pointer sample: the true device pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerPose {
    pub t: f64,
    pub x_mm: f64,
    pub y_mm: f64,
    pub theta_rad: f64,
    pub contact: bool,
    /// The device is being tilted up off the surface.
    #[serde(default)]
    pub lifting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Init { config: Box<SessionConfig> },
    Imu { samples: Vec<ImuSample> },
    Pointer { poses: Vec<PointerPose> },
    Reset,
    FrameRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckOp {
    Init,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    InvalidConfig,
    NotInitialized,
    AlreadyInitialized,
    DuplicateId,
    Capacity,
    ModeMismatch,
    Stream,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ack {
        session_id: String,
        op: AckOp,
        #[serde(skip_serializing_if = "Option::is_none")]
        map: Option<MapMetadata>,
    },
    State {
        seq: u64,
        t: f64,
        pose: Pose2D,
        /// Absent while no filter is running.
        cov_diag: Option<[f64; 8]>,
        mode: String,
        stationary: bool,
    },
    Event {
        name: String,
        t: f64,
    },
    Frame {
        seq: u64,
        png_base64: String,
    },
    Error {
        code: ErrorCode,
        detail: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        retry_after_ms: Option<u64>,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            detail: detail.into(),
            retry_after_ms: None,
        }
    }

    /// States and frames may be dropped under back-pressure; everything
    /// else must be delivered.
    pub fn droppable(&self) -> bool {
        matches!(self, ServerMessage::State { .. } | ServerMessage::Frame { .. })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn client_messages_parse() {
        let init: ClientMessage = serde_json::from_value(json!({
            "type": "init",
            "config": {"session_id": "a", "mode": "live_pointer", "frame_delivery": "server_rendered"}
        }))
        .unwrap();
        let ClientMessage::Init { config } = init else { panic!() };
        assert_eq!(config.session_id, "a");
        assert_eq!(config.mode, SessionMode::LivePointer);
        assert!(config.zupt_enabled);

        let imu: ClientMessage = serde_json::from_value(json!({
            "type": "imu",
            "samples": [{"t": 0.0, "acc": [0, 0, 9.81], "gyro": [0, 0, 0], "lum": 0.5}]
        }))
        .unwrap();
        assert!(matches!(imu, ClientMessage::Imu { samples } if samples.len() == 1));

        let p: ClientMessage = serde_json::from_value(json!({
            "type": "pointer",
            "poses": [{"t": 0.5, "x_mm": 1, "y_mm": 2, "theta_rad": 0.1, "contact": true, "lifting": false}]
        }))
        .unwrap();
        assert!(matches!(p, ClientMessage::Pointer { poses } if poses[0].x_mm == 1.0));

        for m in [r#"{"type":"reset"}"#, r#"{"type":"frame_request"}"#] {
            serde_json::from_str::<ClientMessage>(m).unwrap();
        }
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"dance"}"#).is_err());
    }

    #[test]
    fn server_messages_shape() {
        let s = ServerMessage::State {
            seq: 3,
            t: 0.25,
            pose: Pose2D::new(1.0, 2.0, 0.5),
            cov_diag: None,
            mode: "ALOFT".into(),
            stationary: false,
        };
        assert_eq!(
            serde_json::to_value(&s).unwrap(),
            json!({"type": "state", "seq": 3, "t": 0.25, "pose": [1.0, 2.0, 0.5],
                   "cov_diag": null, "mode": "ALOFT", "stationary": false})
        );
        let e = ServerMessage::error(ErrorCode::DuplicateId, "taken");
        assert_eq!(
            serde_json::to_value(&e).unwrap(),
            json!({"type": "error", "code": "duplicate_id", "detail": "taken"})
        );
        assert_eq!(
            serde_json::to_value(ServerMessage::Event {
                name: "PLACED".into(),
                t: 1.0
            })
            .unwrap(),
            json!({"type": "event", "name": "PLACED", "t": 1.0})
        );
    }
}
