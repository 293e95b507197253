use super::{fit_circle_3d, fit_sphere, CalibrationError, Result, MAX_TIP_OFFSET_SPREAD, MIN_SPIN_RADIUS};
use crate::geometry::{canonical_direction, Pose, Vec3};
use serde::{Deserialize, Serialize};

pub const MIN_PIVOT_POSES: usize = 10;
pub const MIN_SPIN_POSES: usize = 8;

/// Needle tip and shaft direction in the needle rigid-body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedleCalibration {
    pub tip_offset: Vec3,
    /// Unit shaft direction pointing from the handle toward the tip.
    pub axis_dir: Vec3,
    pub tip_rms: f64,
    pub axis_rms: f64,
}

impl NeedleCalibration {
    /// Combines separate tip and axis fits. The spin fit only knows the axis
    /// up to sign; the tip offset decides which way is "toward the tip".
    pub fn from_fits(tip: &NeedleTipFit, axis: &NeedleAxisFit) -> NeedleCalibration {
        let axis_dir = if axis.axis_dir.dot(&tip.tip_offset) < 0.0 {
            -axis.axis_dir
        } else {
            axis.axis_dir
        };
        NeedleCalibration { tip_offset: tip.tip_offset, axis_dir, tip_rms: tip.rms, axis_rms: axis.rms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedleTipFit {
    /// Pivot point in the tracker frame.
    pub tip_world: Vec3,
    /// Pivot point in the needle body frame.
    pub tip_offset: Vec3,
    pub rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedleAxisFit {
    /// Spin axis in the needle body frame, sign-canonicalized.
    pub axis_dir: Vec3,
    pub rms: f64,
    pub radius: f64,
}

/// Pivot calibration: the body origin sweeps a sphere centered on the fixed tip.
pub fn calibrate_needle_tip(poses: &[Pose]) -> Result<NeedleTipFit> {
    if poses.len() < MIN_PIVOT_POSES {
        return Err(CalibrationError::DegenerateInput(format!(
            "pivot calibration needs at least {MIN_PIVOT_POSES} poses, got {}",
            poses.len()
        )));
    }
    let positions: Vec<Vec3> = poses.iter().map(|p| p.position).collect();
    let sphere = fit_sphere(&positions)?;
    let tip_world = sphere.center;

    let offsets: Vec<Vec3> = poses
        .iter()
        .map(|p| p.orientation.conjugate().rotate(&(tip_world - p.position)))
        .collect();
    let tip_offset = offsets.iter().sum::<Vec3>() / offsets.len() as f64;
    let spread = (offsets.iter().map(|o| (o - tip_offset).norm_squared()).sum::<f64>()
        / offsets.len() as f64)
        .sqrt();
    if spread > MAX_TIP_OFFSET_SPREAD {
        return Err(CalibrationError::PoorConditioning(format!(
            "tip offset estimates disagree by {:.1} mm RMS; the sweep did not pivot about a fixed point",
            spread * 1e3
        )));
    }
    Ok(NeedleTipFit { tip_world, tip_offset, rms: sphere.rms_residual })
}

/// Spin calibration: the body origin traces a circle about the shaft.
pub fn calibrate_needle_axis(poses: &[Pose]) -> Result<NeedleAxisFit> {
    if poses.len() < MIN_SPIN_POSES {
        return Err(CalibrationError::DegenerateInput(format!(
            "axis calibration needs at least {MIN_SPIN_POSES} poses, got {}",
            poses.len()
        )));
    }
    let positions: Vec<Vec3> = poses.iter().map(|p| p.position).collect();
    let centroid = positions.iter().sum::<Vec3>() / positions.len() as f64;
    let extent = positions.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max);
    if extent < MIN_SPIN_RADIUS {
        return Err(CalibrationError::PoorConditioning(format!(
            "markers sit {:.3} mm from the spin axis; axis direction is unobservable",
            extent * 1e3
        )));
    }
    let circle = fit_circle_3d(&positions)?;
    if circle.radius < MIN_SPIN_RADIUS {
        return Err(CalibrationError::PoorConditioning(format!(
            "spin radius {:.3} mm is below {} mm",
            circle.radius * 1e3,
            MIN_SPIN_RADIUS * 1e3
        )));
    }
    // Align each body-frame estimate with the first before averaging.
    let first = poses[0].orientation.conjugate().rotate(&circle.normal);
    let sum: Vec3 = poses
        .iter()
        .map(|p| {
            let a = p.orientation.conjugate().rotate(&circle.normal);
            if a.dot(&first) < 0.0 {
                -a
            } else {
                a
            }
        })
        .sum();
    let axis_dir = canonical_direction(&sum.normalize());
    Ok(NeedleAxisFit { axis_dir, rms: circle.rms_residual, radius: circle.radius })
}
