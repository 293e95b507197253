use super::messages::*;
use super::wire::{FieldError, Reader, Writer};
use super::{msg_type, HEADER_LEN, MAGIC, MAX_PAYLOAD_LEN, PROTOCOL_VERSION};
use crate::geometry::Pose;
use crate::guidance::{GuidanceState, GuidanceStatus, TrajectoryPlan};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 16 MiB limit")]
    PayloadTooLarge(usize),
    #[error("non-finite value in field `{0}`")]
    NonFinite(&'static str),
    #[error("invalid message: {0}")]
    InvalidMessage(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeErrorKind {
    BadMagic,
    UnsupportedVersion(u8),
    PayloadTooLarge(u32),
    MalformedPayload(String),
}

/// Framing or payload error. `offset` counts bytes from the start of the
/// input (or, for [`FrameDecoder`], of the whole stream).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} at byte offset {offset}")]
pub struct DecodeError {
    pub kind: DecodeErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    NeedMoreData,
    Message { message: Message, consumed: usize },
    /// A well-framed message of a type this build does not know.
    Skipped { msg_type: u8, consumed: usize },
}

pub fn encode(m: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(64);
    encode_into(m, &mut out)?;
    Ok(out)
}

/// Appends the encoded message to `out`. On error `out` is left unchanged.
pub fn encode_into(m: &Message, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let start = out.len();
    out.extend_from_slice(&MAGIC);
    out.push(PROTOCOL_VERSION);
    out.push(m.msg_type());
    out.extend_from_slice(&[0; 4]);
    let result = write_payload(m, out);
    let len = out.len() - start - HEADER_LEN;
    let result = result.and_then(|_| {
        if len > MAX_PAYLOAD_LEN {
            Err(EncodeError::PayloadTooLarge(len))
        } else {
            Ok(())
        }
    });
    match result {
        Ok(()) => {
            out[start + 4..start + 8].copy_from_slice(&(len as u32).to_le_bytes());
            Ok(())
        }
        Err(e) => {
            out.truncate(start);
            Err(e)
        }
    }
}

fn untimed(field: &str, p: &Pose) -> Result<(), EncodeError> {
    if p.timestamp != 0.0 {
        return Err(EncodeError::InvalidMessage(format!("{field}: embedded poses carry no timestamp")));
    }
    Ok(())
}

fn status_code(s: GuidanceStatus) -> u8 {
    match s {
        GuidanceStatus::OnTrack => 0,
        GuidanceStatus::Deviating => 1,
        GuidanceStatus::Lost => 2,
    }
}

fn write_payload(m: &Message, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let mut w = Writer::new(out);
    match m {
        Message::Hello(h) => {
            w.string(&h.client_name);
            w.u8(h.protocol_version);
        }
        Message::Subscribe(s) => match &s.bodies {
            None => {
                w.u8(0);
                w.u16(0);
            }
            Some(ids) => {
                let count = u16::try_from(ids.len())
                    .map_err(|_| EncodeError::InvalidMessage("too many subscribed bodies".into()))?;
                w.u8(1);
                w.u16(count);
                for id in ids {
                    w.u16(*id);
                }
            }
        },
        Message::RigidBodyFrame(f) => {
            w.u16(f.body_id);
            w.u32(f.sequence);
            w.f64("timestamp", f.timestamp);
            w.vec3("position", &f.position);
            w.quat("orientation", &f.orientation);
            w.u8(f.valid as u8);
            w.f64("received_at", f.received_at);
        }
        Message::VideoFrame(v) => {
            let expected = v.width as usize * v.height as usize * v.format.bytes_per_pixel();
            if v.data.len() != expected {
                return Err(EncodeError::InvalidMessage(format!(
                    "video frame {}x{} needs {expected} bytes, has {}",
                    v.width,
                    v.height,
                    v.data.len()
                )));
            }
            if expected > MAX_PAYLOAD_LEN {
                return Err(EncodeError::PayloadTooLarge(expected));
            }
            w.u16(v.stream_id);
            w.u32(v.sequence);
            w.f64("timestamp", v.timestamp);
            w.u16(v.width);
            w.u16(v.height);
            w.u8(v.format.code());
            w.bytes(&v.data);
        }
        Message::PlanUpdate(p) => {
            w.u32(p.id);
            w.vec3("entry", &p.entry);
            w.vec3("target", &p.target);
        }
        Message::Guidance(g) => {
            let s = &g.state;
            w.u32(g.plan_id);
            w.f64("timestamp", g.timestamp);
            w.f64("progress", s.progress);
            w.vec3("lateral_offset", &s.lateral_offset);
            w.f64("lateral_magnitude", s.lateral_magnitude);
            w.vec3("magnified_offset", &s.magnified_offset);
            w.f64("angle_offset_deg", s.angle_offset_deg);
            for v in &s.triangle {
                w.vec3("triangle", v);
            }
            w.u8(status_code(s.status));
        }
        Message::CalibrationResult(c) => {
            w.u8(c.kind_code());
            match c {
                CalibrationResult::Sphere { center, radius, rms, point_count } => {
                    w.vec3("center", center);
                    w.f64("radius", *radius);
                    w.f64("rms", *rms);
                    w.u32(*point_count);
                }
                CalibrationResult::Circle { center, normal, radius, rms } => {
                    w.vec3("center", center);
                    w.vec3("normal", normal);
                    w.f64("radius", *radius);
                    w.f64("rms", *rms);
                }
                CalibrationResult::NeedleTip { tip_world, tip_offset, rms } => {
                    w.vec3("tip_world", tip_world);
                    w.vec3("tip_offset", tip_offset);
                    w.f64("rms", *rms);
                }
                CalibrationResult::NeedleAxis { axis_dir, rms } => {
                    w.vec3("axis_dir", axis_dir);
                    w.f64("rms", *rms);
                }
                CalibrationResult::Needle { tip_offset, axis_dir, tip_rms, axis_rms } => {
                    w.vec3("tip_offset", tip_offset);
                    w.vec3("axis_dir", axis_dir);
                    w.f64("tip_rms", *tip_rms);
                    w.f64("axis_rms", *axis_rms);
                }
                CalibrationResult::HandEye { x, rotation_residual, translation_residual, camera_pose } => {
                    untimed("x", x)?;
                    untimed("camera_pose", camera_pose)?;
                    w.pose("x", x);
                    w.f64("rotation_residual", *rotation_residual);
                    w.f64("translation_residual", *translation_residual);
                    w.pose("camera_pose", camera_pose);
                }
                CalibrationResult::UsPlane { image_to_probe, pixel_spacing, rms } => {
                    untimed("image_to_probe", image_to_probe)?;
                    w.pose("image_to_probe", image_to_probe);
                    w.f64("pixel_spacing", *pixel_spacing);
                    w.f64("rms", *rms);
                }
            }
        }
        Message::SimCommand(c) => {
            w.u8(c.kind_code());
            match c {
                SimCommand::NudgeTranslate { delta } => w.vec3("delta", delta),
                SimCommand::NudgeRotate { rotation } => w.vec3("rotation", rotation),
                SimCommand::SetNoise { position_sigma, orientation_sigma } => {
                    w.f64("position_sigma", *position_sigma);
                    w.f64("orientation_sigma", *orientation_sigma);
                }
                SimCommand::SelectScenario { name } => w.string(name),
            }
        }
        Message::Error(e) => {
            w.u16(e.code);
            w.string(&e.text);
        }
        Message::Heartbeat(h) => w.f64("timestamp", h.timestamp),
        Message::UsAnnotation(a) => {
            w.u16(a.stream_id);
            w.u32(a.sequence);
            w.f64("timestamp", a.timestamp);
            w.f64("u", a.u);
            w.f64("v", a.v);
        }
        Message::Control(c) => {
            w.u8(c.code());
            if let Control::BeginCalibration { routine } = c {
                w.u8(routine.code());
            }
        }
    }
    match w.non_finite() {
        Some(field) => Err(EncodeError::NonFinite(field)),
        None => Ok(()),
    }
}

/// Decodes one message from the front of `buf`.
///
/// Partial input yields [`Decoded::NeedMoreData`]; header problems are
/// reported as soon as the offending byte is visible.
pub fn decode(buf: &[u8]) -> Result<Decoded, DecodeError> {
    let err = |kind, offset| Err(DecodeError { kind, offset });
    for (i, &m) in MAGIC.iter().enumerate() {
        match buf.get(i) {
            None => return Ok(Decoded::NeedMoreData),
            Some(&b) if b != m => return err(DecodeErrorKind::BadMagic, i),
            _ => {}
        }
    }
    match buf.get(2) {
        None => return Ok(Decoded::NeedMoreData),
        Some(&v) if v != PROTOCOL_VERSION => return err(DecodeErrorKind::UnsupportedVersion(v), 2),
        _ => {}
    }
    if buf.len() < HEADER_LEN {
        return Ok(Decoded::NeedMoreData);
    }
    let kind = buf[3];
    let len = u32::from_le_bytes([buf[4], buf[5], buf[6], buf[7]]);
    if len as usize > MAX_PAYLOAD_LEN {
        return err(DecodeErrorKind::PayloadTooLarge(len), 4);
    }
    let total = HEADER_LEN + len as usize;
    if buf.len() < total {
        return Ok(Decoded::NeedMoreData);
    }
    let payload = &buf[HEADER_LEN..total];
    match read_payload(kind, payload) {
        Ok(Some(message)) => Ok(Decoded::Message { message, consumed: total }),
        Ok(None) => Ok(Decoded::Skipped { msg_type: kind, consumed: total }),
        Err((at, why)) => err(DecodeErrorKind::MalformedPayload(why), HEADER_LEN + at),
    }
}

fn read_payload(kind: u8, payload: &[u8]) -> Result<Option<Message>, FieldError> {
    let mut r = Reader::new(payload);
    let m = match kind {
        msg_type::HELLO => Message::Hello(Hello {
            client_name: r.string("client_name")?,
            protocol_version: r.u8("protocol_version")?,
        }),
        msg_type::SUBSCRIBE => {
            let at = r.pos();
            let mode = r.u8("subscribe mode")?;
            let count = r.u16("subscribe count")?;
            let bodies = match mode {
                0 if count == 0 => None,
                1 => Some((0..count).map(|_| r.u16("body id")).collect::<Result<Vec<_>, _>>()?),
                _ => return Err((at, format!("invalid subscribe mode {mode}"))),
            };
            Message::Subscribe(Subscribe { bodies })
        }
        msg_type::RIGID_BODY_FRAME => Message::RigidBodyFrame(RigidBodyFrame {
            body_id: r.u16("body_id")?,
            sequence: r.u32("sequence")?,
            timestamp: r.f64("timestamp")?,
            position: r.vec3("position")?,
            orientation: r.quat("orientation")?,
            valid: r.bool("valid")?,
            received_at: r.f64("received_at")?,
        }),
        msg_type::VIDEO_FRAME => {
            let stream_id = r.u16("stream_id")?;
            let sequence = r.u32("sequence")?;
            let timestamp = r.f64("timestamp")?;
            let width = r.u16("width")?;
            let height = r.u16("height")?;
            let at = r.pos();
            let format = PixelFormat::from_code(r.u8("format")?)
                .ok_or_else(|| (at, "unknown pixel format".to_string()))?;
            let at = r.pos();
            let data = r.bytes("pixels")?;
            if data.len() != width as usize * height as usize * format.bytes_per_pixel() {
                return Err((at, "pixel data does not match frame size".into()));
            }
            Message::VideoFrame(VideoFrame { stream_id, sequence, timestamp, width, height, format, data })
        }
        msg_type::PLAN_UPDATE => Message::PlanUpdate(TrajectoryPlan {
            id: r.u32("plan id")?,
            entry: r.vec3("entry")?,
            target: r.vec3("target")?,
        }),
        msg_type::GUIDANCE => {
            let plan_id = r.u32("plan_id")?;
            let timestamp = r.f64("timestamp")?;
            let progress = r.f64("progress")?;
            let lateral_offset = r.vec3("lateral_offset")?;
            let lateral_magnitude = r.f64("lateral_magnitude")?;
            let magnified_offset = r.vec3("magnified_offset")?;
            let angle_offset_deg = r.f64("angle_offset_deg")?;
            let triangle = [r.vec3("triangle")?, r.vec3("triangle")?, r.vec3("triangle")?];
            let at = r.pos();
            let status = match r.u8("status")? {
                0 => GuidanceStatus::OnTrack,
                1 => GuidanceStatus::Deviating,
                2 => GuidanceStatus::Lost,
                s => return Err((at, format!("invalid guidance status {s}"))),
            };
            Message::Guidance(GuidanceReport {
                plan_id,
                timestamp,
                state: GuidanceState {
                    progress,
                    lateral_offset,
                    lateral_magnitude,
                    magnified_offset,
                    angle_offset_deg,
                    triangle,
                    status,
                },
            })
        }
        msg_type::CALIBRATION_RESULT => {
            let at = r.pos();
            let c = match r.u8("calibration kind")? {
                0 => CalibrationResult::Sphere {
                    center: r.vec3("center")?,
                    radius: r.f64("radius")?,
                    rms: r.f64("rms")?,
                    point_count: r.u32("point_count")?,
                },
                1 => CalibrationResult::Circle {
                    center: r.vec3("center")?,
                    normal: r.vec3("normal")?,
                    radius: r.f64("radius")?,
                    rms: r.f64("rms")?,
                },
                2 => CalibrationResult::NeedleTip {
                    tip_world: r.vec3("tip_world")?,
                    tip_offset: r.vec3("tip_offset")?,
                    rms: r.f64("rms")?,
                },
                3 => CalibrationResult::NeedleAxis { axis_dir: r.vec3("axis_dir")?, rms: r.f64("rms")? },
                4 => CalibrationResult::Needle {
                    tip_offset: r.vec3("tip_offset")?,
                    axis_dir: r.vec3("axis_dir")?,
                    tip_rms: r.f64("tip_rms")?,
                    axis_rms: r.f64("axis_rms")?,
                },
                5 => CalibrationResult::HandEye {
                    x: r.pose("x")?,
                    rotation_residual: r.f64("rotation_residual")?,
                    translation_residual: r.f64("translation_residual")?,
                    camera_pose: r.pose("camera_pose")?,
                },
                6 => CalibrationResult::UsPlane {
                    image_to_probe: r.pose("image_to_probe")?,
                    pixel_spacing: r.f64("pixel_spacing")?,
                    rms: r.f64("rms")?,
                },
                k => return Err((at, format!("unknown calibration kind {k}"))),
            };
            Message::CalibrationResult(c)
        }
        msg_type::SIM_COMMAND => {
            let at = r.pos();
            let c = match r.u8("command kind")? {
                0 => SimCommand::NudgeTranslate { delta: r.vec3("delta")? },
                1 => SimCommand::NudgeRotate { rotation: r.vec3("rotation")? },
                2 => SimCommand::SetNoise {
                    position_sigma: r.f64("position_sigma")?,
                    orientation_sigma: r.f64("orientation_sigma")?,
                },
                3 => SimCommand::SelectScenario { name: r.string("scenario name")? },
                k => return Err((at, format!("unknown sim command {k}"))),
            };
            Message::SimCommand(c)
        }
        msg_type::ERROR => Message::Error(ErrorMessage { code: r.u16("error code")?, text: r.string("error text")? }),
        msg_type::HEARTBEAT => Message::Heartbeat(Heartbeat { timestamp: r.f64("timestamp")? }),
        msg_type::US_ANNOTATION => Message::UsAnnotation(UsAnnotation {
            stream_id: r.u16("stream_id")?,
            sequence: r.u32("sequence")?,
            timestamp: r.f64("timestamp")?,
            u: r.f64("u")?,
            v: r.f64("v")?,
        }),
        msg_type::CONTROL => {
            let at = r.pos();
            let c = match r.u8("control action")? {
                0 => {
                    let at = r.pos();
                    let code = r.u8("routine")?;
                    let routine = CalibrationRoutine::from_code(code)
                        .ok_or_else(|| (at, format!("unknown calibration routine {code}")))?;
                    Control::BeginCalibration { routine }
                }
                1 => Control::EndCalibration,
                2 => Control::ClearPlan,
                a => return Err((at, format!("unknown control action {a}"))),
            };
            Message::Control(c)
        }
        _ => return Ok(None),
    };
    r.finish()?;
    Ok(Some(m))
}

/// Incremental decoder for one connection.
///
/// Any error poisons the decoder: the stream cannot be resynchronized, so
/// every later call returns the same error.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    head: usize,
    stream_offset: usize,
    poisoned: Option<DecodeError>,
    skipped: u64,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, data: &[u8]) {
        if self.poisoned.is_none() {
            self.buf.extend_from_slice(data);
        }
    }

    /// Next complete message, `Ok(None)` if more bytes are needed.
    /// Unknown message types are skipped and counted.
    pub fn next_message(&mut self) -> Result<Option<Message>, DecodeError> {
        if let Some(e) = &self.poisoned {
            return Err(e.clone());
        }
        loop {
            match decode(&self.buf[self.head..]) {
                Ok(Decoded::NeedMoreData) => {
                    self.compact();
                    return Ok(None);
                }
                Ok(Decoded::Message { message, consumed }) => {
                    self.advance(consumed);
                    return Ok(Some(message));
                }
                Ok(Decoded::Skipped { consumed, .. }) => {
                    self.skipped += 1;
                    self.advance(consumed);
                }
                Err(mut e) => {
                    e.offset += self.stream_offset;
                    self.poisoned = Some(e.clone());
                    self.buf = Vec::new();
                    self.head = 0;
                    return Err(e);
                }
            }
        }
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn buffered(&self) -> usize {
        self.buf.len() - self.head
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned.is_some()
    }

    fn advance(&mut self, n: usize) {
        self.head += n;
        self.stream_offset += n;
    }

    fn compact(&mut self) {
        if self.head > 0 {
            self.buf.drain(..self.head);
            self.head = 0;
        }
    }
}
