//! Planned-versus-actual needle trajectory metrics.

use crate::calibration::NeedleCalibration;
use crate::geometry::{angle_between, Pose, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shortest allowed plan, entry to target.
pub const MIN_PLAN_LENGTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GuidanceError {
    #[error("invalid plan: entry and target are {0:.6} m apart (minimum 1 mm)")]
    InvalidPlan(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub id: u32,
    pub entry: Vec3,
    pub target: Vec3,
}

impl TrajectoryPlan {
    pub fn new(id: u32, entry: Vec3, target: Vec3) -> Result<Self, GuidanceError> {
        let plan = TrajectoryPlan { id, entry, target };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), GuidanceError> {
        let len = (self.target - self.entry).norm();
        if !(len > MIN_PLAN_LENGTH) {
            return Err(GuidanceError::InvalidPlan(len));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        (self.target - self.entry).norm()
    }

    pub fn direction(&self) -> Vec3 {
        (self.target - self.entry).normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedleState {
    pub tip: Vec3,
    /// Unit vector from handle toward tip.
    pub axis: Vec3,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceStatus {
    OnTrack,
    Deviating,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceParams {
    pub magnification: f64,
    /// Meters.
    pub on_track_radius: f64,
    pub on_track_angle_deg: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        GuidanceParams { magnification: 5.0, on_track_radius: 3e-3, on_track_angle_deg: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceState {
    /// 0 at entry, 1 at target; unbounded either way.
    pub progress: f64,
    /// Tip displacement perpendicular to the planned line.
    pub lateral_offset: Vec3,
    pub lateral_magnitude: f64,
    pub magnified_offset: Vec3,
    pub angle_offset_deg: f64,
    /// Deviation triangle: tip, its foot on the planned line, and the entry.
    pub triangle: [Vec3; 3],
    pub status: GuidanceStatus,
}

impl GuidanceState {
    pub fn mark_lost(mut self) -> Self {
        self.status = GuidanceStatus::Lost;
        self
    }
}

pub fn compute_guidance(
    plan: &TrajectoryPlan,
    needle: &NeedleState,
    params: &GuidanceParams,
) -> Result<GuidanceState, GuidanceError> {
    plan.validate()?;
    let dir = plan.direction();
    let rel = needle.tip - plan.entry;
    let along = rel.dot(&dir);
    let progress = along / plan.length();
    let foot = plan.entry + dir * along;
    let lateral_offset = rel - dir * along;
    let lateral_magnitude = lateral_offset.norm();
    let angle_offset_deg = angle_between(&needle.axis, &dir).to_degrees();
    let status = if lateral_magnitude < params.on_track_radius && angle_offset_deg < params.on_track_angle_deg {
        GuidanceStatus::OnTrack
    } else {
        GuidanceStatus::Deviating
    };
    Ok(GuidanceState {
        progress,
        lateral_offset,
        lateral_magnitude,
        magnified_offset: lateral_offset * params.magnification,
        angle_offset_deg,
        triangle: [needle.tip, foot, plan.entry],
        status,
    })
}

/// Tip and shaft of a calibrated needle at `body_pose`.
pub fn apply_needle_calibration(body_pose: &Pose, calib: &NeedleCalibration) -> NeedleState {
    NeedleState {
        tip: body_pose.transform_point(&calib.tip_offset),
        axis: body_pose.rotate_vector(&calib.axis_dir).normalize(),
        timestamp: body_pose.timestamp,
    }
}
