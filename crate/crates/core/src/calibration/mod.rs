//! Calibration solvers: pivot (sphere) and spin (circle) fits for the needle,
//! AX = XB hand-eye for the tracker/display frames, and absolute orientation
//! for registering the ultrasound image plane to the probe.

mod absolute_orientation;
mod circle;
mod hand_eye;
mod needle;
mod sphere;
mod us_plane;

pub use absolute_orientation::{absolute_orientation, RigidTransformFit};
pub use circle::{fit_circle_3d, CircleFit3D};
pub use hand_eye::{camera_pose_from_hand_eye, hand_eye_calibrate, relative_motions, HandEyeFit};
pub use needle::{calibrate_needle_axis, calibrate_needle_tip, NeedleAxisFit, NeedleCalibration, NeedleTipFit};
pub use sphere::{fit_sphere, SphereFit};
pub use us_plane::{register_us_plane, ImagePoint, UsPlaneCalibration};

use crate::geometry::Pose;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative singular-value floor below which a linear system counts as
/// rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Rotation axes closer than this (radians) count as parallel in hand-eye input.
pub const PARALLEL_AXIS_THRESHOLD: f64 = 1.0 * std::f64::consts::PI / 180.0;
/// Spin radius below which the needle axis is unobservable from positions.
pub const MIN_SPIN_RADIUS: f64 = 1e-3;
/// Largest allowed RMS disagreement between per-pose tip offset estimates.
pub const MAX_TIP_OFFSET_SPREAD: f64 = 5e-3;
/// Image-point span (pixels) needed to estimate pixel spacing.
pub const MIN_SCALE_SPAN_PX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("poorly conditioned input: {0}")]
    PoorConditioning(String),
    #[error("degenerate motion: {0}; more varied motion is required (rotate about at least two different axes)")]
    DegenerateMotion(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("pixel spacing unobservable: {0}")]
    ScaleUnobservable(String),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

/// Everything the server needs to turn raw body poses into display geometry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub needle: Option<NeedleCalibration>,
    pub hand_eye: Option<HandEyeFit>,
    pub us_plane: Option<UsPlaneCalibration>,
    /// Tracker (camera) pose in the display frame, fixed once after hand-eye.
    pub camera_pose: Option<Pose>,
}

/// Index of the smallest entry of a slice of singular values.
pub(crate) fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}
