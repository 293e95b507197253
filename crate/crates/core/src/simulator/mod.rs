//! Synthetic tracking source: scripted rigid-body motion with ground truth,
//! seeded Gaussian noise, calibration scenarios, ultrasound frames and a
//! steerable needle.
//!
//! Everything runs in the tracker's native (right-handed) frame. Ground truth
//! is produced alongside the stream and never goes over the wire.

mod controller;
mod noise;
mod scenario;
mod us_image;

pub use controller::GuidanceController;
pub use noise::NoiseModel;
pub use scenario::*;
pub use us_image::{synth_us_frame, target_disc, SphereTarget, UsImageSpec, SPECKLE_MAX, TARGET_INTENSITY};

use crate::calibration::NeedleCalibration;
use crate::geometry::{canonical_direction, Pose, Quat, Vec3};
use crate::guidance::{apply_needle_calibration, compute_guidance, GuidanceParams, TrajectoryPlan};
use crate::protocol::{CalibrationResult, Message, RigidBodyFrame, SimCommand, UsAnnotation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Rigid body ids used by the simulator and the default server registry.
pub mod bodies {
    pub const HEADSET: u16 = 1;
    pub const NEEDLE: u16 = 2;
    pub const PROBE: u16 = 3;
    /// The headset pose as reported by the display's own tracking.
    pub const HEADSET_DISPLAY: u16 = 100;
}

pub const US_STREAM: u16 = 0;
pub const DEFAULT_RATE_HZ: f64 = 120.0;
/// Half the edge of the cube the steerable needle tip is confined to.
pub const WORKSPACE_HALF_EXTENT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("command rejected: {0}")]
    CommandRejected(String),
}

/// Ground truth emitted next to the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthRecord {
    Scenario { name: String, rate_hz: f64, noise: NoiseModel },
    NeedleTip { tip_world: Vec3, tip_offset: Vec3 },
    /// Body-frame shaft direction, sign-canonicalized.
    NeedleAxis { axis_dir: Vec3 },
    Needle { calibration: NeedleCalibration },
    HandEye { x: Pose, camera_pose: Pose },
    UsPlane { image_to_probe: Pose, pixel_spacing: f64 },
    Plan { plan: TrajectoryPlan },
    BodyPose { body_id: u16, sequence: u32, pose: Pose },
    /// True tracker-frame location of an annotated image point.
    UsPoint { sequence: u32, world: Vec3 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTick {
    pub timestamp: f64,
    pub messages: Vec<Message>,
    pub truth: Vec<TruthRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub messages: Vec<Message>,
    pub truth: Vec<TruthRecord>,
}

/// Poses and image points drawn once when a random scenario starts.
#[derive(Debug, Clone)]
enum Prepared {
    None,
    HandEye { tracker: Vec<Pose> },
    UsSweep { samples: Vec<UsSample> },
}

#[derive(Debug, Clone, Copy)]
struct UsSample {
    probe: Pose,
    needle: Pose,
    u: f64,
    v: f64,
    world: Vec3,
}

#[derive(Debug, Clone, Copy)]
struct NeedleTruth {
    tip: Vec3,
    orientation: Quat,
}

pub struct Simulator {
    scenario: Scenario,
    noise: NoiseModel,
    rate_hz: f64,
    noise_rng: ChaCha8Rng,
    scene_rng: ChaCha8Rng,
    tick: u64,
    scenario_start: u64,
    sequences: HashMap<u16, u32>,
    video_sequence: u32,
    prepared: Prepared,
    needle: Option<NeedleTruth>,
    pending: Vec<SimCommand>,
}

impl Simulator {
    pub fn new(scenario: Scenario, noise: NoiseModel, rate_hz: f64) -> Result<Self, SimError> {
        if !(1.0..=1000.0).contains(&rate_hz) {
            return Err(SimError::InvalidScenario(format!("rate must be within [1, 1000] Hz, got {rate_hz}")));
        }
        if !noise.is_valid() {
            return Err(SimError::InvalidScenario("noise sigmas must be finite and non-negative".into()));
        }
        scenario.validate().map_err(SimError::InvalidScenario)?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(noise.seed);
        noise_rng.set_stream(1);
        let mut scene_rng = ChaCha8Rng::seed_from_u64(noise.seed);
        scene_rng.set_stream(2);
        let mut sim = Simulator {
            scenario,
            noise,
            rate_hz,
            noise_rng,
            scene_rng,
            tick: 0,
            scenario_start: 0,
            sequences: HashMap::new(),
            video_sequence: 0,
            prepared: Prepared::None,
            needle: None,
            pending: Vec::new(),
        };
        sim.prepare();
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    /// Source time of the next tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 / self.rate_hz
    }

    /// True needle tip while a steerable needle exists.
    pub fn needle_tip(&self) -> Option<Vec3> {
        self.needle.map(|n| n.tip)
    }

    fn prepare(&mut self) {
        self.prepared = Prepared::None;
        self.needle = None;
        match self.scenario {
            Scenario::HandEyeSet(s) => {
                let base = Pose::new(Vec3::new(0.0, 0.3, 1.0), Quat::IDENTITY, 0.0);
                let tracker = (0..=s.motions)
                    .map(|_| {
                        let offset = random_vec(&mut self.scene_rng, 0.2);
                        let rot = random_rotation(&mut self.scene_rng, s.max_rotation);
                        Pose::new(base.position + offset, rot, 0.0)
                    })
                    .collect();
                self.prepared = Prepared::HandEye { tracker };
            }
            Scenario::UsSweep(s) => {
                let samples = (0..s.pairs)
                    .map(|_| {
                        let probe = Pose::new(
                            Vec3::new(0.0, 0.1, 0.0) + random_vec(&mut self.scene_rng, 0.1),
                            random_rotation(&mut self.scene_rng, 45f64.to_radians()),
                            0.0,
                        );
                        let (w, h) = (s.image.width as f64, s.image.height as f64);
                        let u = self.scene_rng.random_range(0.1 * w..0.9 * w);
                        let v = self.scene_rng.random_range(0.1 * h..0.9 * h);
                        let lifted = Vec3::new(u * s.image.spacing, v * s.image.spacing, 0.0);
                        let world = probe.compose(&s.image.image_to_probe).transform_point(&lifted);
                        let r = random_rotation(&mut self.scene_rng, 60f64.to_radians());
                        let needle = Pose::new(world - r.rotate(&s.needle.tip_offset), r, 0.0);
                        UsSample { probe, needle, u, v, world }
                    })
                    .collect();
                self.prepared = Prepared::UsSweep { samples };
            }
            Scenario::Insertion(s) => {
                let tip = s.initial_tip();
                let orientation = rotation_between(&s.needle.axis_dir, &s.plan.direction());
                self.needle = Some(NeedleTruth { tip, orientation });
            }
            _ => {}
        }
    }

    /// Messages that describe the scenario before its first frame: known
    /// calibrations and the plan, in the tracker frame.
    pub fn preamble(&self) -> Vec<Message> {
        match &self.scenario {
            Scenario::UsSweep(s) => vec![Message::CalibrationResult(CalibrationResult::from_needle(&s.needle))],
            Scenario::Insertion(s) => vec![
                Message::CalibrationResult(CalibrationResult::from_needle(&s.needle)),
                Message::PlanUpdate(s.plan),
            ],
            _ => Vec::new(),
        }
    }

    pub fn truth_header(&self) -> Vec<TruthRecord> {
        let mut out = vec![TruthRecord::Scenario {
            name: self.scenario.name().to_string(),
            rate_hz: self.rate_hz,
            noise: self.noise,
        }];
        match &self.scenario {
            Scenario::PivotSweep(s) => out.push(TruthRecord::NeedleTip { tip_world: s.tip, tip_offset: s.offset }),
            Scenario::AxisSpin(s) => out.push(TruthRecord::NeedleAxis { axis_dir: canonical_direction(&s.body_axis()) }),
            Scenario::HandEyeSet(s) => out.push(TruthRecord::HandEye { x: s.x, camera_pose: s.camera_pose }),
            Scenario::UsSweep(s) => {
                out.push(TruthRecord::Needle { calibration: s.needle });
                out.push(TruthRecord::UsPlane {
                    image_to_probe: s.image.image_to_probe,
                    pixel_spacing: s.image.spacing,
                });
            }
            Scenario::Insertion(s) => {
                out.push(TruthRecord::Needle { calibration: s.needle });
                out.push(TruthRecord::Plan { plan: s.plan });
            }
            Scenario::Static(_) => {}
        }
        out
    }

    /// Queues a command; it takes effect before the next frame.
    pub fn apply_command(&mut self, cmd: &SimCommand) -> Result<(), SimError> {
        match cmd {
            SimCommand::NudgeTranslate { delta } | SimCommand::NudgeRotate { rotation: delta } => {
                let manual = matches!(
                    self.scenario,
                    Scenario::Insertion(Insertion { controller: InsertionController::Manual, .. })
                );
                if !manual {
                    return Err(SimError::CommandRejected(format!(
                        "needle nudges need a manual insertion scenario, active scenario is {}",
                        self.scenario.name()
                    )));
                }
                if !delta.iter().all(|c| c.is_finite()) {
                    return Err(SimError::CommandRejected("nudge must be finite".into()));
                }
                self.pending.push(cmd.clone());
            }
            SimCommand::SetNoise { position_sigma, orientation_sigma } => {
                let n = NoiseModel::new(*position_sigma, *orientation_sigma, self.noise.seed);
                if !n.is_valid() {
                    return Err(SimError::CommandRejected("noise sigmas must be finite and non-negative".into()));
                }
                self.pending.push(cmd.clone());
            }
            SimCommand::SelectScenario { name } => {
                if Scenario::by_name(name, None).is_none() {
                    return Err(SimError::CommandRejected(format!("unknown scenario `{name}`")));
                }
                self.pending.push(cmd.clone());
            }
        }
        Ok(())
    }

    fn drain_commands(&mut self) {
        for cmd in std::mem::take(&mut self.pending) {
            match cmd {
                SimCommand::NudgeTranslate { delta } => {
                    if let Some(n) = &mut self.needle {
                        n.tip = clamp_workspace(&(n.tip + delta));
                    }
                }
                SimCommand::NudgeRotate { rotation } => {
                    if let Some(n) = &mut self.needle {
                        n.orientation = (Quat::from_rotation_vector(&rotation) * n.orientation).normalized();
                    }
                }
                SimCommand::SetNoise { position_sigma, orientation_sigma } => {
                    self.noise.position_sigma = position_sigma;
                    self.noise.orientation_sigma = orientation_sigma;
                }
                SimCommand::SelectScenario { name } => {
                    if let Some(s) = Scenario::by_name(&name, None) {
                        self.scenario = s;
                        self.scenario_start = self.tick;
                        self.prepare();
                    }
                }
            }
        }
    }

    fn next_sequence(&mut self, body: u16) -> u32 {
        let seq = self.sequences.entry(body).or_insert(0);
        let out = *seq;
        *seq = seq.wrapping_add(1);
        out
    }

    fn emit(&mut self, tick: &mut SimTick, body: u16, truth: Pose, noisy: bool, valid: bool) -> u32 {
        let truth = truth.with_timestamp(tick.timestamp);
        let measured = if noisy { self.noise.apply(&truth, &mut self.noise_rng) } else { truth };
        let sequence = self.next_sequence(body);
        tick.messages.push(Message::RigidBodyFrame(RigidBodyFrame {
            body_id: body,
            sequence,
            timestamp: tick.timestamp,
            position: measured.position,
            orientation: measured.orientation,
            valid,
            received_at: 0.0,
        }));
        tick.truth.push(TruthRecord::BodyPose { body_id: body, sequence, pose: truth });
        sequence
    }

    /// Advances one tick. `None` once a finite scenario has run out.
    pub fn step(&mut self) -> Option<SimTick> {
        self.drain_commands();
        let local = self.tick - self.scenario_start;
        if let Some(n) = self.scenario.tick_count() {
            if local >= n {
                return None;
            }
        }
        let mut tick = SimTick { timestamp: self.time(), messages: Vec::new(), truth: Vec::new() };
        let i = local as usize;
        match self.scenario {
            Scenario::PivotSweep(s) => {
                self.emit(&mut tick, bodies::NEEDLE, s.body_pose(i), true, true);
            }
            Scenario::AxisSpin(s) => {
                self.emit(&mut tick, bodies::NEEDLE, s.body_pose(i), true, true);
            }
            Scenario::HandEyeSet(s) => {
                let tracker = match &self.prepared {
                    Prepared::HandEye { tracker } => tracker[i],
                    _ => unreachable!("hand-eye poses are prepared with the scenario"),
                };
                let display = s.camera_pose.compose(&tracker).compose(&s.x);
                self.emit(&mut tick, bodies::HEADSET, tracker, true, true);
                self.emit(&mut tick, bodies::HEADSET_DISPLAY, display, false, true);
            }
            Scenario::UsSweep(s) => {
                let sample = match &self.prepared {
                    Prepared::UsSweep { samples } => samples[i],
                    _ => unreachable!("ultrasound samples are prepared with the scenario"),
                };
                self.emit(&mut tick, bodies::PROBE, sample.probe, true, true);
                self.emit(&mut tick, bodies::NEEDLE, sample.needle, true, true);
                let sequence = i as u32;
                tick.messages.push(Message::UsAnnotation(UsAnnotation {
                    stream_id: US_STREAM,
                    sequence,
                    timestamp: tick.timestamp,
                    u: sample.u,
                    v: sample.v,
                }));
                tick.truth.push(TruthRecord::UsPoint { sequence, world: sample.world });
                if s.video {
                    let scene = [SphereTarget { center: sample.world, radius: 1e-3 }];
                    let frame = synth_us_frame(
                        &sample.probe,
                        &scene,
                        &s.image,
                        self.noise.seed,
                        US_STREAM,
                        sequence,
                        tick.timestamp,
                    );
                    tick.messages.push(Message::VideoFrame(frame));
                }
            }
            Scenario::Insertion(s) => {
                if s.controller == InsertionController::Scripted {
                    self.scripted_step(&s);
                }
                let needle = self.needle.expect("insertion keeps a needle");
                let body = Pose::new(needle.tip - needle.orientation.rotate(&s.needle.tip_offset), needle.orientation, 0.0);
                let headset_visible = s.headset_hidden_after.is_none_or(|t| local as f64 / self.rate_hz <= t);
                self.emit(&mut tick, bodies::HEADSET, s.headset_pose, true, headset_visible);
                self.emit(&mut tick, bodies::NEEDLE, body, true, true);
                self.emit(&mut tick, bodies::PROBE, s.probe_pose, true, true);
                if let Some(every) = s.video_every {
                    if local % every as u64 == 0 {
                        let scene = [
                            SphereTarget { center: s.plan.target, radius: 5e-3 },
                            SphereTarget { center: needle.tip, radius: 1.5e-3 },
                        ];
                        let seq = self.video_sequence;
                        self.video_sequence += 1;
                        let frame = synth_us_frame(&s.probe_pose, &scene, &s.image, self.noise.seed, US_STREAM, seq, tick.timestamp);
                        tick.messages.push(Message::VideoFrame(frame));
                    }
                }
            }
            Scenario::Static(s) => {
                self.emit(&mut tick, bodies::HEADSET, s.headset_pose, true, true);
                self.emit(&mut tick, bodies::NEEDLE, s.needle_pose, true, true);
                self.emit(&mut tick, bodies::PROBE, s.probe_pose, true, true);
            }
        }
        self.tick += 1;
        Some(tick)
    }

    fn scripted_step(&mut self, s: &Insertion) {
        let Some(needle) = &mut self.needle else { return };
        let body = Pose::new(needle.tip - needle.orientation.rotate(&s.needle.tip_offset), needle.orientation, 0.0);
        let state = apply_needle_calibration(&body, &s.needle);
        if let Ok(g) = compute_guidance(&s.plan, &state, &GuidanceParams::default()) {
            if let Some(SimCommand::NudgeTranslate { delta }) = GuidanceController::new(s.plan.direction()).command(&g) {
                needle.tip = clamp_workspace(&(needle.tip + delta));
            }
        }
    }
}

/// Runs a finite scenario to completion.
pub fn generate(scenario: Scenario, noise: NoiseModel, rate_hz: f64) -> Result<SimOutput, SimError> {
    if scenario.tick_count().is_none() {
        return Err(SimError::InvalidScenario(format!(
            "scenario {} is open-ended; give it a frame count",
            scenario.name()
        )));
    }
    let mut sim = Simulator::new(scenario, noise, rate_hz)?;
    let mut messages = sim.preamble();
    let mut truth = sim.truth_header();
    while let Some(tick) = sim.step() {
        messages.extend(tick.messages);
        truth.extend(tick.truth);
    }
    Ok(SimOutput { messages, truth })
}

fn clamp_workspace(v: &Vec3) -> Vec3 {
    v.map(|c| c.clamp(-WORKSPACE_HALF_EXTENT, WORKSPACE_HALF_EXTENT))
}

fn random_vec<R: Rng>(rng: &mut R, half_extent: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-half_extent..half_extent),
        rng.random_range(-half_extent..half_extent),
        rng.random_range(-half_extent..half_extent),
    )
}

fn random_rotation<R: Rng>(rng: &mut R, max_angle: f64) -> Quat {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(0.0..max_angle);
    Quat::from_axis_angle(&Vec3::new(axis[0], axis[1], axis[2]), angle)
}

/// Shortest rotation taking direction `from` onto `to`.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Quat {
    let a = from.normalize();
    let b = to.normalize();
    let axis = a.cross(&b);
    let s = axis.norm();
    let c = a.dot(&b);
    if s < 1e-12 {
        if c > 0.0 {
            return Quat::IDENTITY;
        }
        let ortho = if a.x.abs() < 0.9 { a.cross(&Vec3::x()) } else { a.cross(&Vec3::y()) };
        return Quat::from_axis_angle(&ortho, std::f64::consts::PI);
    }
    Quat::from_axis_angle(&axis, s.atan2(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::calibrate_needle_tip;

    fn frames(out: &SimOutput, body: u16) -> Vec<RigidBodyFrame> {
        out.messages
            .iter()
            .filter_map(|m| match m {
                Message::RigidBodyFrame(f) if f.body_id == body => Some(*f),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn static_zero_noise_frames_identical() {
        let out = generate(Scenario::by_name("static", Some(20)).unwrap(), NoiseModel::none(1), 120.0).unwrap();
        let needle = frames(&out, bodies::NEEDLE);
        assert_eq!(needle.len(), 20);
        for f in &needle {
            assert_eq!(f.position, needle[0].position);
            assert_eq!(f.orientation, needle[0].orientation);
        }
        for (i, f) in needle.iter().enumerate() {
            assert_eq!(f.sequence, i as u32);
            assert_eq!(f.timestamp, i as f64 / 120.0);
        }
    }

    #[test]
    fn pivot_zero_noise_closes() {
        let out = generate(Scenario::by_name("pivot", None).unwrap(), NoiseModel::none(3), 120.0).unwrap();
        let poses: Vec<Pose> = frames(&out, bodies::NEEDLE).iter().map(|f| f.pose()).collect();
        let fit = calibrate_needle_tip(&poses).unwrap();
        assert!(fit.tip_world.norm() < 1e-9);
        assert!((fit.tip_offset - Vec3::new(0.0, 0.0, 0.15)).norm() < 1e-9);
    }

    #[test]
    fn same_seed_same_stream() {
        let noise = NoiseModel::new(1e-3, 0.003, 42);
        let a = generate(Scenario::by_name("handeye", None).unwrap(), noise, 120.0).unwrap();
        let b = generate(Scenario::by_name("handeye", None).unwrap(), noise, 120.0).unwrap();
        assert_eq!(a, b);
        let c = generate(Scenario::by_name("handeye", None).unwrap(), NoiseModel { seed: 43, ..noise }, 120.0).unwrap();
        assert_ne!(a.messages, c.messages);
    }

    #[test]
    fn invalid_rate_and_scenario() {
        assert!(Simulator::new(Scenario::by_name("static", None).unwrap(), NoiseModel::none(0), 0.5).is_err());
        let mut s = PivotSweep::default_with(3);
        s.samples = 3;
        assert!(matches!(
            Simulator::new(Scenario::PivotSweep(s), NoiseModel::none(0), 120.0),
            Err(SimError::InvalidScenario(_))
        ));
        assert!(generate(Scenario::by_name("insertion", None).unwrap(), NoiseModel::none(0), 120.0).is_err());
    }

    #[test]
    fn manual_nudge_moves_tip_next_frame() {
        let mut sim = Simulator::new(Scenario::by_name("insertion", None).unwrap(), NoiseModel::none(0), 120.0).unwrap();
        let tip_of = |t: &SimTick| -> Vec3 {
            let f = t.messages.iter().find_map(|m| match m {
                Message::RigidBodyFrame(f) if f.body_id == bodies::NEEDLE => Some(*f),
                _ => None,
            });
            let calib = default_needle();
            f.unwrap().pose().transform_point(&calib.tip_offset)
        };
        let before = tip_of(&sim.step().unwrap());
        sim.apply_command(&SimCommand::NudgeTranslate { delta: Vec3::new(1e-3, 0.0, 0.0) }).unwrap();
        let after = tip_of(&sim.step().unwrap());
        assert!((after - before - Vec3::new(1e-3, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn nudge_rejected_outside_manual_insertion() {
        let mut sim = Simulator::new(Scenario::by_name("pivot", None).unwrap(), NoiseModel::none(0), 120.0).unwrap();
        let r = sim.apply_command(&SimCommand::NudgeTranslate { delta: Vec3::x() * 1e-3 });
        assert!(matches!(r, Err(SimError::CommandRejected(_))));
        let mut scripted =
            Simulator::new(Scenario::by_name("insertion-scripted", None).unwrap(), NoiseModel::none(0), 120.0).unwrap();
        assert!(scripted.apply_command(&SimCommand::NudgeRotate { rotation: Vec3::x() * 0.01 }).is_err());
    }

    #[test]
    fn nudges_clamped_to_workspace() {
        let mut sim = Simulator::new(Scenario::by_name("insertion", None).unwrap(), NoiseModel::none(0), 120.0).unwrap();
        sim.apply_command(&SimCommand::NudgeTranslate { delta: Vec3::new(5.0, -5.0, 0.0) }).unwrap();
        sim.step();
        let tip = sim.needle_tip().unwrap();
        assert_eq!(tip.x, WORKSPACE_HALF_EXTENT);
        assert_eq!(tip.y, -WORKSPACE_HALF_EXTENT);
    }

    #[test]
    fn rotation_nudge_keeps_tip() {
        let mut sim = Simulator::new(Scenario::by_name("insertion", None).unwrap(), NoiseModel::none(0), 120.0).unwrap();
        sim.step();
        let tip = sim.needle_tip().unwrap();
        sim.apply_command(&SimCommand::NudgeRotate { rotation: Vec3::new(0.0, 0.0, 1f64.to_radians()) }).unwrap();
        sim.step();
        assert_eq!(sim.needle_tip().unwrap(), tip);
    }

    #[test]
    fn scenario_switch_restarts() {
        let mut sim = Simulator::new(Scenario::by_name("static", None).unwrap(), NoiseModel::none(0), 120.0).unwrap();
        sim.step();
        sim.apply_command(&SimCommand::SelectScenario { name: "pivot".into() }).unwrap();
        let t = sim.step().unwrap();
        assert_eq!(t.messages.len(), 1);
        assert!(sim.apply_command(&SimCommand::SelectScenario { name: "nope".into() }).is_err());
    }

    #[test]
    fn rotation_between_cases() {
        let q = rotation_between(&Vec3::z(), &Vec3::x());
        assert!((q.rotate(&Vec3::z()) - Vec3::x()).norm() < 1e-12);
        let q = rotation_between(&Vec3::z(), &-Vec3::z());
        assert!((q.rotate(&Vec3::z()) + Vec3::z()).norm() < 1e-12);
        assert!(rotation_between(&Vec3::y(), &Vec3::y()).angle() == 0.0);
    }
}
