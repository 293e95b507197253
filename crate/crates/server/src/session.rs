//! Session state and the message handling rules, free of any I/O.
//!
//! Three frames are involved:
//! - source: what the tracking source reports (right-handed tracker frame);
//! - internal: source after handedness conversion, where history, plans
//!   and guidance live;
//! - published: internal mapped through the fixed camera pose once hand-eye
//!   calibration has run, identical to internal before that.

use crate::config::SessionConfig;
use needleguide_core::calibration::{
    CalibrationSet, HandEyeFit, ImagePoint, NeedleAxisFit, NeedleCalibration, NeedleTipFit, UsPlaneCalibration,
};
use needleguide_core::geometry::{flip_rotation_vector, flip_z, Pose, Vec3};
use needleguide_core::guidance::{apply_needle_calibration, compute_guidance, GuidanceState, TrajectoryPlan};
use needleguide_core::offline::{run_routine, Routine, RoutineOptions, RoutineOutput, Samples, UsPair};
use needleguide_core::pose_history::{PoseBuffer, PushOutcome, QueryQuality};
use needleguide_core::protocol::{
    error_code, CalibrationResult, CalibrationRoutine, Control, GuidanceReport, Heartbeat, Hello, Message, RigidBodyFrame,
    SimCommand, UsAnnotation, PROTOCOL_VERSION,
};
use std::collections::HashMap;

pub type ClientId = u64;

pub const SERVER_NAME: &str = "needleguide-server";

#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    Broadcast(Message),
    To(ClientId, Message),
    /// Command for the tracking source, with the client that asked for it.
    Source(SimCommand, Option<ClientId>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub frames_in: u64,
    pub invalid_frames: u64,
    /// Frames dropped for a non-increasing sequence or timestamp.
    pub out_of_order: u64,
    pub guidance_out: u64,
    pub lost_events: u64,
}

#[derive(Debug, Clone)]
struct Capture {
    routine: CalibrationRoutine,
    needle: Vec<Pose>,
    headset: Vec<Pose>,
    display: Vec<Pose>,
    /// Display samples waiting for the headset history to cover them.
    pending_display: Vec<Pose>,
    pending_us: Vec<UsAnnotation>,
    us_pairs: Vec<UsPair>,
}

impl Capture {
    fn new(routine: CalibrationRoutine) -> Self {
        Capture {
            routine,
            needle: Vec::new(),
            headset: Vec::new(),
            display: Vec::new(),
            pending_display: Vec::new(),
            pending_us: Vec::new(),
            us_pairs: Vec::new(),
        }
    }
}

pub struct Session {
    config: SessionConfig,
    histories: HashMap<u16, PoseBuffer>,
    last_sequence: HashMap<u16, u32>,
    calibration: CalibrationSet,
    tip_fit: Option<NeedleTipFit>,
    axis_fit: Option<NeedleAxisFit>,
    plan: Option<TrajectoryPlan>,
    capture: Option<Capture>,
    last_guidance: Option<GuidanceReport>,
    needle_lost: bool,
    source_time: f64,
    last_needle_received: Option<f64>,
    last_received_at: f64,
    counters: Counters,
}

impl Session {
    pub fn new(config: SessionConfig) -> Self {
        Session {
            config,
            histories: HashMap::new(),
            last_sequence: HashMap::new(),
            calibration: CalibrationSet::default(),
            tip_fit: None,
            axis_fit: None,
            plan: None,
            capture: None,
            last_guidance: None,
            needle_lost: false,
            source_time: f64::NEG_INFINITY,
            last_needle_received: None,
            last_received_at: 0.0,
            counters: Counters::default(),
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn calibration(&self) -> &CalibrationSet {
        &self.calibration
    }

    /// Active plan in the published frame.
    pub fn plan(&self) -> Option<TrajectoryPlan> {
        self.plan.map(|p| self.publish_plan(&p))
    }

    pub fn camera_pose(&self) -> Option<Pose> {
        self.calibration.camera_pose
    }

    pub fn history(&self, body: u16) -> Option<&PoseBuffer> {
        self.histories.get(&body)
    }

    pub fn capturing(&self) -> Option<CalibrationRoutine> {
        self.capture.as_ref().map(|c| c.routine)
    }

    // ---- frame conversions ----

    fn to_internal(&self, p: &Pose) -> Pose {
        if self.config.handedness_conversion {
            p.convert_handedness()
        } else {
            *p
        }
    }

    fn internal_vector_to_source(&self, v: &Vec3, rotation: bool) -> Vec3 {
        if !self.config.handedness_conversion {
            *v
        } else if rotation {
            flip_rotation_vector(v)
        } else {
            flip_z(v)
        }
    }

    fn point_to_internal(&self, v: &Vec3) -> Vec3 {
        if self.config.handedness_conversion {
            flip_z(v)
        } else {
            *v
        }
    }

    fn publish_pose(&self, body: u16, p: &Pose) -> Pose {
        match self.calibration.camera_pose {
            Some(y) if body != self.config.bodies.headset_display => y.compose(p).with_timestamp(p.timestamp),
            _ => *p,
        }
    }

    fn publish_point(&self, v: &Vec3) -> Vec3 {
        self.calibration.camera_pose.map_or(*v, |y| y.transform_point(v))
    }

    fn publish_vector(&self, v: &Vec3) -> Vec3 {
        self.calibration.camera_pose.map_or(*v, |y| y.rotate_vector(v))
    }

    fn unpublish_point(&self, v: &Vec3) -> Vec3 {
        self.calibration.camera_pose.map_or(*v, |y| y.inverse().transform_point(v))
    }

    fn unpublish_vector(&self, v: &Vec3) -> Vec3 {
        self.calibration.camera_pose.map_or(*v, |y| y.orientation.conjugate().rotate(v))
    }

    fn publish_plan(&self, p: &TrajectoryPlan) -> TrajectoryPlan {
        TrajectoryPlan { id: p.id, entry: self.publish_point(&p.entry), target: self.publish_point(&p.target) }
    }

    fn publish_guidance(&self, g: &GuidanceState) -> GuidanceState {
        GuidanceState {
            lateral_offset: self.publish_vector(&g.lateral_offset),
            magnified_offset: self.publish_vector(&g.magnified_offset),
            triangle: g.triangle.map(|v| self.publish_point(&v)),
            ..*g
        }
    }

    /// Inverse of the ingest path for a published frame: back to source
    /// coordinates.
    pub fn unpublish_frame(&self, f: &RigidBodyFrame) -> RigidBodyFrame {
        let mut p = f.pose();
        if let Some(y) = self.calibration.camera_pose {
            if f.body_id != self.config.bodies.headset_display {
                p = y.inverse().compose(&p).with_timestamp(p.timestamp);
            }
        }
        f.with_pose(&self.to_internal(&p))
    }

    // ---- source side ----

    /// Handles one message from the tracking source. `now` is the server
    /// clock in seconds.
    pub fn ingest(&mut self, msg: Message, now: f64) -> Vec<Outbound> {
        let mut out = Vec::new();
        match msg {
            Message::RigidBodyFrame(f) => self.ingest_frame(f, now, &mut out),
            Message::VideoFrame(v) => out.push(Outbound::Broadcast(Message::VideoFrame(v))),
            Message::PlanUpdate(p) => {
                let internal =
                    TrajectoryPlan { id: p.id, entry: self.point_to_internal(&p.entry), target: self.point_to_internal(&p.target) };
                if internal.validate().is_ok() {
                    self.set_plan(internal, &mut out);
                }
            }
            Message::CalibrationResult(c) => self.ingest_calibration(c, &mut out),
            Message::UsAnnotation(a) => {
                if let Some(c) = &mut self.capture {
                    if c.routine == CalibrationRoutine::UsPlane {
                        c.pending_us.push(a);
                    }
                }
                self.resolve_pending();
                out.push(Outbound::Broadcast(Message::UsAnnotation(a)));
            }
            Message::Control(Control::ClearPlan) => self.clear_plan(&mut out),
            _ => {}
        }
        out
    }

    fn ingest_calibration(&mut self, c: CalibrationResult, out: &mut Vec<Outbound>) {
        let h = self.config.handedness_conversion;
        let v = |x: Vec3| if h { flip_z(&x) } else { x };
        match c {
            CalibrationResult::Needle { tip_offset, axis_dir, tip_rms, axis_rms } => {
                let n = NeedleCalibration { tip_offset: v(tip_offset), axis_dir: v(axis_dir), tip_rms, axis_rms };
                self.calibration.needle = Some(n);
                out.push(Outbound::Broadcast(Message::CalibrationResult(CalibrationResult::from_needle(&n))));
            }
            CalibrationResult::UsPlane { image_to_probe, pixel_spacing, rms } => {
                let c = UsPlaneCalibration {
                    image_to_probe: self.to_internal(&image_to_probe),
                    pixel_spacing,
                    rms_residual: rms,
                };
                self.calibration.us_plane = Some(c);
                out.push(Outbound::Broadcast(Message::CalibrationResult(CalibrationResult::from_us_plane(&c))));
            }
            CalibrationResult::HandEye { x, rotation_residual, translation_residual, camera_pose } => {
                let fit = HandEyeFit {
                    x: self.to_internal(&x),
                    rotation_residual,
                    translation_residual,
                };
                let y = self.to_internal(&camera_pose);
                self.fix_camera_pose(fit, y, out);
            }
            _ => {}
        }
    }

    fn ingest_frame(&mut self, f: RigidBodyFrame, now: f64, out: &mut Vec<Outbound>) {
        self.counters.frames_in += 1;
        if let Some(last) = self.last_sequence.get(&f.body_id) {
            if f.sequence <= *last {
                self.counters.out_of_order += 1;
                return;
            }
        }
        let internal = self.to_internal(&f.pose());
        if f.valid {
            let buf = self.histories.entry(f.body_id).or_insert_with(|| {
                PoseBuffer::with_limits(f.body_id, self.config.history_capacity, self.config.history_retention)
            });
            if buf.push(internal) == PushOutcome::Rejected {
                self.counters.out_of_order += 1;
                return;
            }
        } else {
            self.counters.invalid_frames += 1;
        }
        self.last_sequence.insert(f.body_id, f.sequence);
        if f.timestamp > self.source_time {
            self.source_time = f.timestamp;
        }
        self.last_received_at = self.last_received_at.max(now);

        if f.valid {
            self.capture_frame(f.body_id, &internal);
        }
        let published = self.publish_pose(f.body_id, &internal);
        out.push(Outbound::Broadcast(Message::RigidBodyFrame(RigidBodyFrame {
            received_at: self.last_received_at,
            ..f.with_pose(&published)
        })));

        if f.body_id == self.config.bodies.needle && f.valid {
            self.last_needle_received = Some(now);
            self.emit_guidance(&internal, out);
        } else {
            self.check_needle_stale(out);
        }
    }

    fn emit_guidance(&mut self, needle_pose: &Pose, out: &mut Vec<Outbound>) {
        let (Some(plan), Some(calib)) = (self.plan, self.calibration.needle) else {
            return;
        };
        let state = apply_needle_calibration(needle_pose, &calib);
        let Ok(g) = compute_guidance(&plan, &state, &self.config.guidance) else {
            return;
        };
        let report = GuidanceReport { plan_id: plan.id, timestamp: needle_pose.timestamp, state: self.publish_guidance(&g) };
        self.needle_lost = false;
        self.last_guidance = Some(report);
        self.counters.guidance_out += 1;
        out.push(Outbound::Broadcast(Message::Guidance(report)));
    }

    fn needle_staleness(&self) -> Option<f64> {
        let latest = self.histories.get(&self.config.bodies.needle)?.latest()?;
        Some(self.source_time - latest.timestamp)
    }

    fn check_needle_stale(&mut self, out: &mut Vec<Outbound>) {
        if self.needle_lost {
            return;
        }
        if let Some(s) = self.needle_staleness() {
            if s > self.config.stale_after {
                self.mark_lost(out);
            }
        }
    }

    fn mark_lost(&mut self, out: &mut Vec<Outbound>) {
        if let Some(last) = self.last_guidance {
            if self.plan.is_some() {
                self.needle_lost = true;
                self.counters.lost_events += 1;
                let report = GuidanceReport { state: last.state.mark_lost(), ..last };
                out.push(Outbound::Broadcast(Message::Guidance(report)));
            }
        }
    }

    /// Periodic housekeeping: a heartbeat, and Lost guidance when the needle
    /// has gone quiet by the server clock as well.
    pub fn tick(&mut self, now: f64) -> Vec<Outbound> {
        let mut out = vec![Outbound::Broadcast(Message::Heartbeat(Heartbeat { timestamp: now }))];
        if !self.needle_lost {
            if let Some(t) = self.last_needle_received {
                if now - t > self.config.stale_after {
                    self.mark_lost(&mut out);
                }
            }
        }
        out
    }

    fn set_plan(&mut self, internal: TrajectoryPlan, out: &mut Vec<Outbound>) {
        self.plan = Some(internal);
        self.last_guidance = None;
        self.needle_lost = false;
        out.push(Outbound::Broadcast(Message::PlanUpdate(self.publish_plan(&internal))));
    }

    fn clear_plan(&mut self, out: &mut Vec<Outbound>) {
        self.plan = None;
        self.last_guidance = None;
        out.push(Outbound::Broadcast(Message::Control(Control::ClearPlan)));
    }

    // ---- calibration capture ----

    fn capture_frame(&mut self, body: u16, internal: &Pose) {
        let bodies = self.config.bodies;
        let Some(c) = &mut self.capture else { return };
        match c.routine {
            CalibrationRoutine::NeedleTip | CalibrationRoutine::NeedleAxis if body == bodies.needle => {
                c.needle.push(*internal);
            }
            CalibrationRoutine::HandEye if body == bodies.headset_display => c.pending_display.push(*internal),
            _ => {}
        }
        self.resolve_pending();
    }

    /// Pairs display samples and ultrasound annotations with tracker poses
    /// interpolated at their timestamps, once the histories cover them.
    fn resolve_pending(&mut self) {
        let bodies = self.config.bodies;
        let Some(c) = &mut self.capture else { return };
        let query = |h: Option<&PoseBuffer>, t: f64| -> Option<Option<Pose>> {
            let h = h?;
            if h.latest()?.timestamp < t {
                return None;
            }
            let r = h.query_at(t).ok()?;
            Some((r.quality != QueryQuality::ClampedStale).then_some(r.pose))
        };
        let headset = self.histories.get(&bodies.headset);
        let mut waiting = Vec::new();
        for d in c.pending_display.drain(..) {
            match query(headset, d.timestamp) {
                None => waiting.push(d),
                Some(Some(h)) => {
                    c.headset.push(h);
                    c.display.push(d);
                }
                Some(None) => {}
            }
        }
        c.pending_display = waiting;

        let probe = self.histories.get(&bodies.probe);
        let needle = self.histories.get(&bodies.needle);
        let mut waiting = Vec::new();
        for a in c.pending_us.drain(..) {
            match (query(probe, a.timestamp), query(needle, a.timestamp)) {
                (Some(Some(p)), Some(Some(n))) => c.us_pairs.push(UsPair {
                    probe: p,
                    needle: n,
                    pixel: ImagePoint::new(a.u, a.v),
                }),
                (Some(None), _) | (_, Some(None)) => {}
                _ => waiting.push(a),
            }
        }
        c.pending_us = waiting;
    }

    fn begin_calibration(&mut self, routine: CalibrationRoutine) {
        self.capture = Some(Capture::new(routine));
    }

    fn end_calibration(&mut self, client: ClientId, out: &mut Vec<Outbound>) {
        let Some(c) = self.capture.take() else {
            out.push(Outbound::To(client, Message::error(error_code::COMMAND_REJECTED, "no calibration is being captured")));
            return;
        };
        let routine = match c.routine {
            CalibrationRoutine::NeedleTip => Routine::Tip,
            CalibrationRoutine::NeedleAxis => Routine::Axis,
            CalibrationRoutine::HandEye => Routine::HandEye,
            CalibrationRoutine::UsPlane => Routine::UsPlane,
        };
        let samples = Samples {
            needle: c.needle,
            probe: Vec::new(),
            headset: c.headset,
            display: c.display,
            us_pairs: c.us_pairs,
            needle_calibration: self.calibration.needle,
        };
        let options = RoutineOptions { pixel_spacing: self.config.us_pixel_spacing, needle: None };
        match run_routine(routine, &samples, &options) {
            Ok(result) => self.apply_result(result, out),
            Err(e) => out.push(Outbound::Broadcast(Message::error(
                error_code::CALIBRATION_FAILED,
                format!("{} calibration failed: {e}", routine.name()),
            ))),
        }
    }

    fn apply_result(&mut self, result: RoutineOutput, out: &mut Vec<Outbound>) {
        match result {
            RoutineOutput::Tip(fit) => {
                self.tip_fit = Some(fit);
                out.push(Outbound::Broadcast(Message::CalibrationResult(CalibrationResult::NeedleTip {
                    tip_world: self.publish_point(&fit.tip_world),
                    tip_offset: fit.tip_offset,
                    rms: fit.rms,
                })));
                self.combine_needle(out);
            }
            RoutineOutput::Axis(fit) => {
                self.axis_fit = Some(fit);
                out.push(Outbound::Broadcast(Message::CalibrationResult(CalibrationResult::NeedleAxis {
                    axis_dir: fit.axis_dir,
                    rms: fit.rms,
                })));
                self.combine_needle(out);
            }
            RoutineOutput::HandEye { fit, camera_pose } => match camera_pose {
                Some(y) => self.fix_camera_pose(fit, y, out),
                None => out.push(Outbound::Broadcast(Message::error(
                    error_code::CALIBRATION_FAILED,
                    "handeye calibration failed: no synchronized samples for the camera pose",
                ))),
            },
            RoutineOutput::UsPlane(c) => {
                self.calibration.us_plane = Some(c);
                out.push(Outbound::Broadcast(Message::CalibrationResult(CalibrationResult::from_us_plane(&c))));
            }
            RoutineOutput::Sphere(_) | RoutineOutput::Circle(_) => {}
        }
    }

    /// A tip fit alone gives a usable needle, with the shaft taken along the
    /// tip offset; a later spin fit refines the direction.
    fn combine_needle(&mut self, out: &mut Vec<Outbound>) {
        let Some(tip) = self.tip_fit else { return };
        let n = match self.axis_fit {
            Some(axis) => NeedleCalibration::from_fits(&tip, &axis),
            None => NeedleCalibration {
                tip_offset: tip.tip_offset,
                axis_dir: tip.tip_offset.normalize(),
                tip_rms: tip.rms,
                axis_rms: 0.0,
            },
        };
        self.calibration.needle = Some(n);
        out.push(Outbound::Broadcast(Message::CalibrationResult(CalibrationResult::from_needle(&n))));
    }

    fn fix_camera_pose(&mut self, fit: HandEyeFit, y: Pose, out: &mut Vec<Outbound>) {
        let y = y.with_timestamp(0.0);
        self.calibration.hand_eye = Some(fit);
        self.calibration.camera_pose = Some(y);
        out.push(Outbound::Broadcast(Message::CalibrationResult(CalibrationResult::from_hand_eye(&fit, &y))));
        if let Some(p) = self.plan {
            out.push(Outbound::Broadcast(Message::PlanUpdate(self.publish_plan(&p))));
        }
    }

    // ---- client side ----

    /// Messages a newly greeted client needs to catch up.
    pub fn snapshot(&self) -> Vec<Message> {
        let mut out = Vec::new();
        if let (Some(fit), Some(y)) = (self.calibration.hand_eye, self.calibration.camera_pose) {
            out.push(Message::CalibrationResult(CalibrationResult::from_hand_eye(&fit, &y)));
        }
        if let Some(n) = self.calibration.needle {
            out.push(Message::CalibrationResult(CalibrationResult::from_needle(&n)));
        }
        if let Some(u) = self.calibration.us_plane {
            out.push(Message::CalibrationResult(CalibrationResult::from_us_plane(&u)));
        }
        if let Some(p) = self.plan {
            out.push(Message::PlanUpdate(self.publish_plan(&p)));
        }
        out
    }

    pub fn handle_client(&mut self, client: ClientId, msg: Message, _now: f64) -> Vec<Outbound> {
        let mut out = Vec::new();
        match msg {
            Message::Hello(h) => {
                if h.protocol_version != PROTOCOL_VERSION {
                    out.push(Outbound::To(
                        client,
                        Message::error(
                            error_code::UNSUPPORTED,
                            format!("protocol version {} not supported, server speaks {PROTOCOL_VERSION}", h.protocol_version),
                        ),
                    ));
                }
                out.push(Outbound::To(
                    client,
                    Message::Hello(Hello { client_name: SERVER_NAME.into(), protocol_version: PROTOCOL_VERSION }),
                ));
                out.extend(self.snapshot().into_iter().map(|m| Outbound::To(client, m)));
            }
            Message::Subscribe(_) | Message::Heartbeat(_) => {}
            Message::PlanUpdate(p) => match p.validate() {
                Ok(()) => {
                    let internal =
                        TrajectoryPlan { id: p.id, entry: self.unpublish_point(&p.entry), target: self.unpublish_point(&p.target) };
                    self.plan = Some(internal);
                    self.last_guidance = None;
                    self.needle_lost = false;
                    out.push(Outbound::Broadcast(Message::PlanUpdate(p)));
                }
                Err(e) => out.push(Outbound::To(client, Message::error(error_code::INVALID_PLAN, e.to_string()))),
            },
            Message::SimCommand(cmd) => {
                let cmd = match cmd {
                    SimCommand::NudgeTranslate { delta } => SimCommand::NudgeTranslate {
                        delta: self.internal_vector_to_source(&self.unpublish_vector(&delta), false),
                    },
                    SimCommand::NudgeRotate { rotation } => SimCommand::NudgeRotate {
                        rotation: self.internal_vector_to_source(&self.unpublish_vector(&rotation), true),
                    },
                    other => other,
                };
                out.push(Outbound::Source(cmd, Some(client)));
            }
            Message::Control(Control::BeginCalibration { routine }) => self.begin_calibration(routine),
            Message::Control(Control::EndCalibration) => self.end_calibration(client, &mut out),
            Message::Control(Control::ClearPlan) => self.clear_plan(&mut out),
            Message::RigidBodyFrame(f) if self.config.debug_echo => {
                out.push(Outbound::To(client, Message::RigidBodyFrame(self.unpublish_frame(&f))));
            }
            other => out.push(Outbound::To(
                client,
                Message::error(error_code::UNSUPPORTED, format!("message type {} is not accepted from clients", other.msg_type())),
            )),
        }
        out
    }
}
