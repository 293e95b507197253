use super::us_image::UsImageSpec;
use crate::calibration::NeedleCalibration;
use crate::geometry::{Pose, Quat, Vec3};
use crate::guidance::TrajectoryPlan;
use serde::{Deserialize, Serialize};

/// Needle pivoting about a fixed tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotSweep {
    pub tip: Vec3,
    /// Tip position in the needle body frame.
    pub offset: Vec3,
    pub samples: usize,
    /// Tilt range of the sweep cone (radians).
    pub min_tilt: f64,
    pub max_tilt: f64,
}

/// Needle spinning about its own shaft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpin {
    /// A point on the spin axis.
    pub center: Vec3,
    /// World-frame spin axis.
    pub axis: Vec3,
    /// Distance of the body origin from the axis.
    pub radius: f64,
    pub samples: usize,
    /// Body orientation at the start of the spin.
    pub base_orientation: Quat,
}

/// Headset moved around while both the tracker and the display's own
/// tracking report it: `display = camera_pose * tracker * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandEyeSet {
    pub x: Pose,
    pub camera_pose: Pose,
    /// Number of relative motions (one more pose than this is emitted).
    pub motions: usize,
    /// Largest headset rotation from its reference orientation (radians).
    pub max_rotation: f64,
}

/// Probe scanning while the calibrated needle tip is placed in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsSweep {
    pub image: UsImageSpec,
    pub needle: NeedleCalibration,
    pub pairs: usize,
    pub video: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionController {
    /// The simulator steers the needle itself from ground truth.
    Scripted,
    /// The needle moves only on operator nudges.
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    pub plan: TrajectoryPlan,
    pub controller: InsertionController,
    pub needle: NeedleCalibration,
    /// Lateral distance of the starting tip from the entry point (m).
    pub initial_lateral_offset: f64,
    /// `None` runs until stopped.
    pub frames: Option<u64>,
    /// Headset frames turn invalid after this source time.
    pub headset_hidden_after: Option<f64>,
    /// Emit an ultrasound frame every this many ticks.
    pub video_every: Option<u32>,
    pub image: UsImageSpec,
    pub probe_pose: Pose,
    pub headset_pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticScene {
    pub frames: Option<u64>,
    pub headset_pose: Pose,
    pub needle_pose: Pose,
    pub probe_pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Scenario {
    PivotSweep(PivotSweep),
    AxisSpin(AxisSpin),
    HandEyeSet(HandEyeSet),
    UsSweep(UsSweep),
    Insertion(Insertion),
    Static(StaticScene),
}

pub const SCENARIO_NAMES: [&str; 6] = ["pivot", "axis", "handeye", "usplane", "insertion", "static"];

pub fn default_needle() -> NeedleCalibration {
    NeedleCalibration { tip_offset: Vec3::new(0.0, 0.0, 0.15), axis_dir: Vec3::z(), tip_rms: 0.0, axis_rms: 0.0 }
}

pub fn default_image() -> UsImageSpec {
    UsImageSpec {
        width: 256,
        height: 256,
        spacing: 0.2e-3,
        image_to_probe: Pose::new(
            Vec3::new(-0.025, 0.004, 0.012),
            Quat::from_axis_angle(&Vec3::new(1.0, 0.3, 0.2), 1.3),
            0.0,
        ),
    }
}

impl PivotSweep {
    pub fn default_with(samples: usize) -> Self {
        PivotSweep {
            tip: Vec3::zeros(),
            offset: Vec3::new(0.0, 0.0, 0.15),
            samples,
            min_tilt: 15f64.to_radians(),
            max_tilt: 45f64.to_radians(),
        }
    }

    pub fn body_pose(&self, i: usize) -> Pose {
        let f = i as f64 / self.samples.max(1) as f64;
        let azimuth = std::f64::consts::TAU * 3.0 * f;
        let tilt = self.min_tilt
            + (self.max_tilt - self.min_tilt) * (0.5 + 0.5 * (std::f64::consts::TAU * 5.0 * f).sin());
        let r = Quat::from_axis_angle(&Vec3::z(), azimuth) * Quat::from_axis_angle(&Vec3::x(), tilt);
        Pose::new(self.tip - r.rotate(&self.offset), r, 0.0)
    }
}

impl AxisSpin {
    pub fn default_with(samples: usize) -> Self {
        AxisSpin {
            center: Vec3::new(0.05, -0.02, 0.3),
            axis: Vec3::z(),
            radius: 0.02,
            samples,
            base_orientation: Quat::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7),
        }
    }

    pub fn body_pose(&self, i: usize) -> Pose {
        let axis = self.axis.normalize();
        let perp = axis.cross(&Vec3::x());
        let perp = if perp.norm() < 1e-6 { axis.cross(&Vec3::y()) } else { perp };
        let start = self.center + perp.normalize() * self.radius;
        let theta = std::f64::consts::TAU * 1.25 * i as f64 / self.samples.max(1) as f64;
        let spin = Quat::from_axis_angle(&axis, theta);
        Pose::new(
            self.center + spin.rotate(&(start - self.center)),
            spin * self.base_orientation,
            0.0,
        )
    }

    /// Shaft direction in the body frame, before sign canonicalization.
    pub fn body_axis(&self) -> Vec3 {
        self.base_orientation.conjugate().rotate(&self.axis.normalize())
    }
}

impl HandEyeSet {
    pub fn default_with(motions: usize) -> Self {
        HandEyeSet {
            x: Pose::new(
                Vec3::new(0.02, -0.05, 0.08),
                Quat::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 30f64.to_radians()),
                0.0,
            ),
            camera_pose: Pose::new(
                Vec3::new(0.5, -1.0, 2.0),
                Quat::from_axis_angle(&Vec3::new(0.0, 1.0, 0.2), 120f64.to_radians()),
                0.0,
            ),
            motions,
            max_rotation: 60f64.to_radians(),
        }
    }
}

impl UsSweep {
    pub fn default_with(pairs: usize) -> Self {
        UsSweep { image: default_image(), needle: default_needle(), pairs, video: false }
    }
}

impl Insertion {
    pub fn default_with(controller: InsertionController) -> Self {
        Insertion {
            plan: TrajectoryPlan { id: 1, entry: Vec3::new(0.02, 0.10, -0.05), target: Vec3::new(0.0, 0.0, -0.05) },
            controller,
            needle: default_needle(),
            initial_lateral_offset: 0.03,
            frames: None,
            headset_hidden_after: None,
            video_every: Some(12),
            // scan plane contains the planned line: u along +x, v along -y
            image: UsImageSpec { width: 128, height: 128, spacing: 1e-3, image_to_probe: Pose::IDENTITY },
            probe_pose: Pose::new(
                Vec3::new(-0.05, 0.12, -0.05),
                Quat::from_axis_angle(&Vec3::x(), std::f64::consts::PI),
                0.0,
            ),
            headset_pose: Pose::new(Vec3::new(0.0, 0.4, 0.5), Quat::IDENTITY, 0.0),
        }
    }

    /// Initial true tip: at the entry, displaced sideways from the plan.
    pub fn initial_tip(&self) -> Vec3 {
        let dir = self.plan.direction();
        let side = dir.cross(&Vec3::z());
        let side = if side.norm() < 1e-6 { dir.cross(&Vec3::x()) } else { side };
        self.plan.entry + side.normalize() * self.initial_lateral_offset
    }
}

impl StaticScene {
    pub fn default_with(frames: Option<u64>) -> Self {
        StaticScene {
            frames,
            headset_pose: Pose::new(Vec3::new(0.0, 0.4, 0.5), Quat::IDENTITY, 0.0),
            needle_pose: Pose::new(Vec3::new(0.05, 0.2, 0.0), Quat::from_axis_angle(&Vec3::x(), 2.5), 0.0),
            probe_pose: Pose::new(Vec3::new(-0.05, 0.1, 0.0), Quat::from_axis_angle(&Vec3::y(), 0.4), 0.0),
        }
    }
}

impl Scenario {
    /// Built-in scenario by name. `samples` overrides the sample, motion,
    /// pair or frame count.
    pub fn by_name(name: &str, samples: Option<usize>) -> Option<Scenario> {
        Some(match name {
            "pivot" => Scenario::PivotSweep(PivotSweep::default_with(samples.unwrap_or(200))),
            "axis" => Scenario::AxisSpin(AxisSpin::default_with(samples.unwrap_or(100))),
            "handeye" => Scenario::HandEyeSet(HandEyeSet::default_with(samples.unwrap_or(20))),
            "usplane" => Scenario::UsSweep(UsSweep::default_with(samples.unwrap_or(12))),
            "insertion" => {
                let mut s = Insertion::default_with(InsertionController::Manual);
                s.frames = samples.map(|n| n as u64);
                Scenario::Insertion(s)
            }
            "insertion-scripted" => {
                let mut s = Insertion::default_with(InsertionController::Scripted);
                s.frames = Some(samples.unwrap_or(600) as u64);
                s.headset_hidden_after = Some(1.0);
                Scenario::Insertion(s)
            }
            "static" => Scenario::Static(StaticScene::default_with(samples.map(|n| n as u64))),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::PivotSweep(_) => "pivot",
            Scenario::AxisSpin(_) => "axis",
            Scenario::HandEyeSet(_) => "handeye",
            Scenario::UsSweep(_) => "usplane",
            Scenario::Insertion(_) => "insertion",
            Scenario::Static(_) => "static",
        }
    }

    /// Number of ticks, `None` for open-ended scenarios.
    pub fn tick_count(&self) -> Option<u64> {
        match self {
            Scenario::PivotSweep(s) => Some(s.samples as u64),
            Scenario::AxisSpin(s) => Some(s.samples as u64),
            Scenario::HandEyeSet(s) => Some(s.motions as u64 + 1),
            Scenario::UsSweep(s) => Some(s.pairs as u64),
            Scenario::Insertion(s) => s.frames,
            Scenario::Static(s) => s.frames,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be positive, got {v}"))
            }
        };
        match self {
            Scenario::PivotSweep(s) => {
                if s.samples < 10 {
                    return Err("pivot sweep needs at least 10 samples".into());
                }
                positive(s.offset.norm(), "tip offset length")?;
                if !(0.0..std::f64::consts::FRAC_PI_2).contains(&s.min_tilt) || s.max_tilt <= s.min_tilt {
                    return Err("pivot tilt range must satisfy 0 <= min < max < 90 degrees".into());
                }
            }
            Scenario::AxisSpin(s) => {
                if s.samples < 8 {
                    return Err("axis spin needs at least 8 samples".into());
                }
                positive(s.axis.norm(), "spin axis length")?;
                if s.radius < 0.0 {
                    return Err("spin radius must be non-negative".into());
                }
            }
            Scenario::HandEyeSet(s) => {
                if s.motions < 2 {
                    return Err("hand-eye set needs at least 2 motions".into());
                }
                positive(s.max_rotation, "max rotation")?;
            }
            Scenario::UsSweep(s) => {
                if s.pairs < 3 {
                    return Err("ultrasound sweep needs at least 3 pairs".into());
                }
                positive(s.image.spacing, "pixel spacing")?;
                if s.image.width < 2 || s.image.height < 2 {
                    return Err("image must be at least 2x2 pixels".into());
                }
            }
            Scenario::Insertion(s) => {
                s.plan.validate().map_err(|e| e.to_string())?;
                positive(s.image.spacing, "pixel spacing")?;
                if s.initial_lateral_offset < 0.0 {
                    return Err("initial lateral offset must be non-negative".into());
                }
                if s.video_every == Some(0) {
                    return Err("video interval must be at least one tick".into());
                }
            }
            Scenario::Static(_) => {}
        }
        Ok(())
    }
}
