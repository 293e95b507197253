use super::msg_type;
use crate::calibration::{HandEyeFit, NeedleCalibration, UsPlaneCalibration};
use crate::geometry::{Pose, Quat, Vec3};
use crate::guidance::{GuidanceState, TrajectoryPlan};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello(Hello),
    Subscribe(Subscribe),
    RigidBodyFrame(RigidBodyFrame),
    VideoFrame(VideoFrame),
    PlanUpdate(TrajectoryPlan),
    Guidance(GuidanceReport),
    CalibrationResult(CalibrationResult),
    SimCommand(SimCommand),
    Error(ErrorMessage),
    Heartbeat(Heartbeat),
    UsAnnotation(UsAnnotation),
    Control(Control),
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Hello(_) => msg_type::HELLO,
            Message::Subscribe(_) => msg_type::SUBSCRIBE,
            Message::RigidBodyFrame(_) => msg_type::RIGID_BODY_FRAME,
            Message::VideoFrame(_) => msg_type::VIDEO_FRAME,
            Message::PlanUpdate(_) => msg_type::PLAN_UPDATE,
            Message::Guidance(_) => msg_type::GUIDANCE,
            Message::CalibrationResult(_) => msg_type::CALIBRATION_RESULT,
            Message::SimCommand(_) => msg_type::SIM_COMMAND,
            Message::Error(_) => msg_type::ERROR,
            Message::Heartbeat(_) => msg_type::HEARTBEAT,
            Message::UsAnnotation(_) => msg_type::US_ANNOTATION,
            Message::Control(_) => msg_type::CONTROL,
        }
    }

    /// Source-clock time the message refers to, for messages that carry one.
    pub fn timestamp(&self) -> Option<f64> {
        match self {
            Message::RigidBodyFrame(f) => Some(f.timestamp),
            Message::VideoFrame(v) => Some(v.timestamp),
            Message::Guidance(g) => Some(g.timestamp),
            Message::Heartbeat(h) => Some(h.timestamp),
            Message::UsAnnotation(a) => Some(a.timestamp),
            _ => None,
        }
    }

    pub fn error(code: u16, text: impl Into<String>) -> Message {
        Message::Error(ErrorMessage { code, text: text.into() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub client_name: String,
    pub protocol_version: u8,
}

/// `bodies: None` subscribes to every body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscribe {
    pub bodies: Option<Vec<u16>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyFrame {
    pub body_id: u16,
    pub sequence: u32,
    /// Source clock, seconds.
    pub timestamp: f64,
    pub position: Vec3,
    /// Scalar-first `[w, x, y, z]`.
    pub orientation: Quat,
    pub valid: bool,
    /// Server receive time in seconds since server start; 0 from sources.
    #[serde(default)]
    pub received_at: f64,
}

impl RigidBodyFrame {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.orientation, self.timestamp)
    }

    pub fn with_pose(mut self, pose: &Pose) -> Self {
        self.position = pose.position;
        self.orientation = pose.orientation;
        self.timestamp = pose.timestamp;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelFormat {
    Gray8,
}

impl PixelFormat {
    pub fn code(self) -> u8 {
        match self {
            PixelFormat::Gray8 => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PixelFormat::Gray8),
            _ => None,
        }
    }

    pub fn bytes_per_pixel(self) -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoFrame {
    pub stream_id: u16,
    pub sequence: u32,
    pub timestamp: f64,
    pub width: u16,
    pub height: u16,
    pub format: PixelFormat,
    #[serde(with = "base64_bytes")]
    pub data: Vec<u8>,
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text.as_bytes()).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceReport {
    pub plan_id: u32,
    /// Timestamp of the needle sample the guidance was computed from.
    pub timestamp: f64,
    pub state: GuidanceState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationResult {
    Sphere { center: Vec3, radius: f64, rms: f64, point_count: u32 },
    Circle { center: Vec3, normal: Vec3, radius: f64, rms: f64 },
    NeedleTip { tip_world: Vec3, tip_offset: Vec3, rms: f64 },
    NeedleAxis { axis_dir: Vec3, rms: f64 },
    Needle { tip_offset: Vec3, axis_dir: Vec3, tip_rms: f64, axis_rms: f64 },
    HandEye {
        x: Pose,
        rotation_residual: f64,
        translation_residual: f64,
        /// Tracker pose in the display frame.
        camera_pose: Pose,
    },
    UsPlane { image_to_probe: Pose, pixel_spacing: f64, rms: f64 },
}

impl CalibrationResult {
    pub fn kind_code(&self) -> u8 {
        match self {
            CalibrationResult::Sphere { .. } => 0,
            CalibrationResult::Circle { .. } => 1,
            CalibrationResult::NeedleTip { .. } => 2,
            CalibrationResult::NeedleAxis { .. } => 3,
            CalibrationResult::Needle { .. } => 4,
            CalibrationResult::HandEye { .. } => 5,
            CalibrationResult::UsPlane { .. } => 6,
        }
    }

    pub fn from_needle(c: &NeedleCalibration) -> Self {
        CalibrationResult::Needle {
            tip_offset: c.tip_offset,
            axis_dir: c.axis_dir,
            tip_rms: c.tip_rms,
            axis_rms: c.axis_rms,
        }
    }

    pub fn from_hand_eye(fit: &HandEyeFit, camera_pose: &Pose) -> Self {
        CalibrationResult::HandEye {
            x: fit.x.with_timestamp(0.0),
            rotation_residual: fit.rotation_residual,
            translation_residual: fit.translation_residual,
            camera_pose: camera_pose.with_timestamp(0.0),
        }
    }

    pub fn from_us_plane(c: &UsPlaneCalibration) -> Self {
        CalibrationResult::UsPlane {
            image_to_probe: c.image_to_probe.with_timestamp(0.0),
            pixel_spacing: c.pixel_spacing,
            rms: c.rms_residual,
        }
    }
}

/// Operator commands for the simulated tracking source. Vectors are in the
/// frame the server publishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum SimCommand {
    /// Translate the needle tip by `delta` meters.
    NudgeTranslate { delta: Vec3 },
    /// Rotate the needle about its tip by a rotation vector (radians).
    NudgeRotate { rotation: Vec3 },
    SetNoise { position_sigma: f64, orientation_sigma: f64 },
    SelectScenario { name: String },
}

impl SimCommand {
    pub fn kind_code(&self) -> u8 {
        match self {
            SimCommand::NudgeTranslate { .. } => 0,
            SimCommand::NudgeRotate { .. } => 1,
            SimCommand::SetNoise { .. } => 2,
            SimCommand::SelectScenario { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub code: u16,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub timestamp: f64,
}

/// A needle tip located by hand (or detector) in an ultrasound frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsAnnotation {
    pub stream_id: u16,
    pub sequence: u32,
    pub timestamp: f64,
    /// Pixel column.
    pub u: f64,
    /// Pixel row, increasing downward.
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationRoutine {
    NeedleTip,
    NeedleAxis,
    HandEye,
    UsPlane,
}

impl CalibrationRoutine {
    pub fn code(self) -> u8 {
        match self {
            CalibrationRoutine::NeedleTip => 0,
            CalibrationRoutine::NeedleAxis => 1,
            CalibrationRoutine::HandEye => 2,
            CalibrationRoutine::UsPlane => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => CalibrationRoutine::NeedleTip,
            1 => CalibrationRoutine::NeedleAxis,
            2 => CalibrationRoutine::HandEye,
            3 => CalibrationRoutine::UsPlane,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Control {
    /// Start capturing samples for a calibration routine.
    BeginCalibration { routine: CalibrationRoutine },
    /// Stop capturing and run the routine over the captured samples.
    EndCalibration,
    ClearPlan,
}

impl Control {
    pub fn code(&self) -> u8 {
        match self {
            Control::BeginCalibration { .. } => 0,
            Control::EndCalibration => 1,
            Control::ClearPlan => 2,
        }
    }
}
