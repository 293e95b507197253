//! Offline calibration over recorded streams: sample extraction, routine
//! dispatch and error against ground truth.

use crate::calibration::{
    calibrate_needle_axis, calibrate_needle_tip, camera_pose_from_hand_eye, fit_circle_3d, fit_sphere,
    hand_eye_calibrate, register_us_plane, relative_motions, CalibrationError, CircleFit3D, HandEyeFit,
    NeedleAxisFit, NeedleCalibration, NeedleTipFit, SphereFit, UsPlaneCalibration,
};
use crate::geometry::{angle_between, canonical_direction, Pose, Vec3};
use crate::protocol::{CalibrationResult, Message};
use crate::simulator::{bodies, TruthRecord};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routine {
    /// Sphere through the needle body origins (pivot sweep).
    Sphere,
    /// Circle through the needle body origins (axis spin).
    Circle,
    Tip,
    Axis,
    HandEye,
    UsPlane,
}

impl Routine {
    pub const ALL: [Routine; 6] =
        [Routine::Sphere, Routine::Circle, Routine::Tip, Routine::Axis, Routine::HandEye, Routine::UsPlane];

    pub fn name(self) -> &'static str {
        match self {
            Routine::Sphere => "sphere",
            Routine::Circle => "circle",
            Routine::Tip => "tip",
            Routine::Axis => "axis",
            Routine::HandEye => "handeye",
            Routine::UsPlane => "usplane",
        }
    }

    pub fn from_name(name: &str) -> Option<Routine> {
        Routine::ALL.into_iter().find(|r| r.name() == name)
    }
}

/// One annotated ultrasound point with the poses captured alongside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsPair {
    pub probe: Pose,
    pub needle: Pose,
    pub pixel: Vector2<f64>,
}

/// Valid frames grouped by body, plus what the stream says about the needle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub needle: Vec<Pose>,
    pub probe: Vec<Pose>,
    /// Headset poses from the tracker, paired index-for-index with `display`.
    pub headset: Vec<Pose>,
    pub display: Vec<Pose>,
    pub us_pairs: Vec<UsPair>,
    pub needle_calibration: Option<NeedleCalibration>,
}

/// Groups a recorded stream into calibration samples. Headset/display pairs
/// and ultrasound pairs are matched on identical timestamps.
pub fn collect_samples(messages: &[Message]) -> Samples {
    let mut out = Samples::default();
    let mut headset_at: HashMap<u64, Pose> = HashMap::new();
    let mut display_at: Vec<Pose> = Vec::new();
    let mut probe_at: HashMap<u64, Pose> = HashMap::new();
    let mut needle_at: HashMap<u64, Pose> = HashMap::new();
    let mut annotations = Vec::new();
    for m in messages {
        match m {
            Message::RigidBodyFrame(f) if f.valid => {
                let pose = f.pose();
                let key = f.timestamp.to_bits();
                match f.body_id {
                    bodies::NEEDLE => {
                        out.needle.push(pose);
                        needle_at.insert(key, pose);
                    }
                    bodies::PROBE => {
                        out.probe.push(pose);
                        probe_at.insert(key, pose);
                    }
                    bodies::HEADSET => {
                        headset_at.insert(key, pose);
                    }
                    bodies::HEADSET_DISPLAY => display_at.push(pose),
                    _ => {}
                }
            }
            Message::CalibrationResult(CalibrationResult::Needle { tip_offset, axis_dir, tip_rms, axis_rms }) => {
                out.needle_calibration = Some(NeedleCalibration {
                    tip_offset: *tip_offset,
                    axis_dir: *axis_dir,
                    tip_rms: *tip_rms,
                    axis_rms: *axis_rms,
                });
            }
            Message::UsAnnotation(a) => annotations.push(*a),
            _ => {}
        }
    }
    for d in display_at {
        if let Some(h) = headset_at.get(&d.timestamp.to_bits()) {
            out.headset.push(*h);
            out.display.push(d);
        }
    }
    for a in annotations {
        let key = a.timestamp.to_bits();
        if let (Some(p), Some(n)) = (probe_at.get(&key), needle_at.get(&key)) {
            out.us_pairs.push(UsPair { probe: *p, needle: *n, pixel: Vector2::new(a.u, a.v) });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoutineOptions {
    /// Known ultrasound pixel spacing; estimated from the data when unset.
    pub pixel_spacing: Option<f64>,
    /// Needle calibration for the ultrasound routine when the stream has none.
    pub needle: Option<NeedleCalibration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "routine", rename_all = "snake_case")]
pub enum RoutineOutput {
    Sphere(SphereFit),
    Circle(CircleFit3D),
    Tip(NeedleTipFit),
    Axis(NeedleAxisFit),
    HandEye { fit: HandEyeFit, camera_pose: Option<Pose> },
    UsPlane(UsPlaneCalibration),
}

pub fn run_routine(
    routine: Routine,
    samples: &Samples,
    options: &RoutineOptions,
) -> Result<RoutineOutput, CalibrationError> {
    let origins = || samples.needle.iter().map(|p| p.position).collect::<Vec<_>>();
    Ok(match routine {
        Routine::Sphere => RoutineOutput::Sphere(fit_sphere(&origins())?),
        Routine::Circle => RoutineOutput::Circle(fit_circle_3d(&origins())?),
        Routine::Tip => RoutineOutput::Tip(calibrate_needle_tip(&samples.needle)?),
        Routine::Axis => RoutineOutput::Axis(calibrate_needle_axis(&samples.needle)?),
        Routine::HandEye => {
            let fit = hand_eye_calibrate(&relative_motions(&samples.headset), &relative_motions(&samples.display))?;
            let camera_pose = camera_pose_from_hand_eye(&samples.headset, &samples.display, &fit.x);
            RoutineOutput::HandEye { fit, camera_pose }
        }
        Routine::UsPlane => {
            let needle = options.needle.or(samples.needle_calibration).ok_or_else(|| {
                CalibrationError::DegenerateInput("ultrasound registration needs a needle calibration".into())
            })?;
            let world: Vec<Vec3> = samples.us_pairs.iter().map(|p| p.needle.transform_point(&needle.tip_offset)).collect();
            let pixels: Vec<_> = samples.us_pairs.iter().map(|p| p.pixel).collect();
            let probes: Vec<Pose> = samples.us_pairs.iter().map(|p| p.probe).collect();
            RoutineOutput::UsPlane(register_us_plane(&world, &pixels, &probes, options.pixel_spacing)?)
        }
    })
}

/// Errors of a routine's output against ground truth, in display units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoutineErrors {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tip_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hand_eye_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hand_eye_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera_pose_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub us_plane_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sphere_center_mm: Option<f64>,
}

/// Grid of image points (5 x 5 over the full frame) used to compare two
/// image-to-probe mappings.
pub const US_GRID: usize = 5;

/// RMS distance between where two ultrasound calibrations place the same
/// pixels, over a grid spanning a `width` x `height` image.
pub fn us_registration_rms(est: &UsPlaneCalibration, truth: &UsPlaneCalibration, width: f64, height: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..US_GRID {
        for j in 0..US_GRID {
            let px = Vector2::new(
                width * i as f64 / (US_GRID - 1) as f64,
                height * j as f64 / (US_GRID - 1) as f64,
            );
            sum += (est.image_to_probe_point(&px) - truth.image_to_probe_point(&px)).norm_squared();
        }
    }
    (sum / (US_GRID * US_GRID) as f64).sqrt()
}

/// Compares `output` with whatever truth records apply. `image_size` is the
/// frame size used for the ultrasound grid; it defaults to 256 x 256.
pub fn evaluate(output: &RoutineOutput, truth: &[TruthRecord], image_size: Option<(f64, f64)>) -> RoutineErrors {
    let mut e = RoutineErrors::default();
    for t in truth {
        match (output, t) {
            (RoutineOutput::Tip(fit), TruthRecord::NeedleTip { tip_offset, .. }) => {
                e.tip_mm = Some((fit.tip_offset - tip_offset).norm() * 1e3);
            }
            (RoutineOutput::Sphere(fit), TruthRecord::NeedleTip { tip_world, .. }) => {
                e.sphere_center_mm = Some((fit.center - tip_world).norm() * 1e3);
            }
            (RoutineOutput::Axis(fit), TruthRecord::NeedleAxis { axis_dir }) => {
                let a = canonical_direction(&fit.axis_dir);
                e.axis_deg = Some(angle_between(&a, &canonical_direction(axis_dir)).to_degrees());
            }
            (RoutineOutput::HandEye { fit, camera_pose }, TruthRecord::HandEye { x, camera_pose: y }) => {
                e.hand_eye_deg = Some(fit.x.orientation.angle_to(&x.orientation).to_degrees());
                e.hand_eye_mm = Some((fit.x.position - x.position).norm() * 1e3);
                e.camera_pose_mm = camera_pose.map(|c| (c.position - y.position).norm() * 1e3);
            }
            (RoutineOutput::UsPlane(fit), TruthRecord::UsPlane { image_to_probe, pixel_spacing }) => {
                let truth = UsPlaneCalibration {
                    image_to_probe: *image_to_probe,
                    pixel_spacing: *pixel_spacing,
                    rms_residual: 0.0,
                };
                let (w, h) = image_size.unwrap_or((256.0, 256.0));
                e.us_plane_mm = Some(us_registration_rms(fit, &truth, w, h) * 1e3);
            }
            _ => {}
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate, NoiseModel, Scenario};

    fn run(name: &str, routine: Routine, spacing: Option<f64>) -> RoutineErrors {
        let out = generate(Scenario::by_name(name, None).unwrap(), NoiseModel::none(1), 120.0).unwrap();
        let samples = collect_samples(&out.messages);
        let opts = RoutineOptions { pixel_spacing: spacing, needle: None };
        let result = run_routine(routine, &samples, &opts).unwrap();
        evaluate(&result, &out.truth, None)
    }

    #[test]
    fn zero_noise_routines_close() {
        assert!(run("pivot", Routine::Tip, None).tip_mm.unwrap() < 1e-6);
        assert!(run("pivot", Routine::Sphere, None).sphere_center_mm.unwrap() < 1e-6);
        assert!(run("axis", Routine::Axis, None).axis_deg.unwrap() < 1e-6);
        let he = run("handeye", Routine::HandEye, None);
        assert!(he.hand_eye_deg.unwrap() < 1e-6 && he.hand_eye_mm.unwrap() < 1e-6);
        assert!(he.camera_pose_mm.unwrap() < 1e-6);
        assert!(run("usplane", Routine::UsPlane, Some(0.2e-3)).us_plane_mm.unwrap() < 1e-6);
        assert!(run("usplane", Routine::UsPlane, None).us_plane_mm.unwrap() < 1e-6);
    }

    #[test]
    fn wrong_routine_for_stream_errors() {
        let out = generate(Scenario::by_name("static", Some(20)).unwrap(), NoiseModel::none(1), 120.0).unwrap();
        let samples = collect_samples(&out.messages);
        assert!(run_routine(Routine::Tip, &samples, &RoutineOptions::default()).is_err());
        assert!(run_routine(Routine::HandEye, &samples, &RoutineOptions::default()).is_err());
        assert!(run_routine(Routine::UsPlane, &samples, &RoutineOptions::default()).is_err());
    }

    #[test]
    fn routine_names_roundtrip() {
        for r in Routine::ALL {
            assert_eq!(Routine::from_name(r.name()), Some(r));
        }
        assert_eq!(Routine::from_name("pivot"), None);
    }
}
