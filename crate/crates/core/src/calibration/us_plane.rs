use super::{absolute_orientation, CalibrationError, Result, MIN_SCALE_SPAN_PX};
use crate::geometry::{Pose, Vec3};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Pixel coordinates: u to the right, v down the image.
pub type ImagePoint = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsPlaneCalibration {
    /// Maps lifted image coordinates `(u*s, v*s, 0)` into the probe body frame.
    pub image_to_probe: Pose,
    /// Meters per pixel, same along both image axes.
    pub pixel_spacing: f64,
    pub rms_residual: f64,
}

impl UsPlaneCalibration {
    pub fn lift(&self, px: &ImagePoint) -> Vec3 {
        Vec3::new(px.x * self.pixel_spacing, px.y * self.pixel_spacing, 0.0)
    }

    /// Image pixel to probe-frame point.
    pub fn image_to_probe_point(&self, px: &ImagePoint) -> Vec3 {
        self.image_to_probe.transform_point(&self.lift(px))
    }
}

/// Registers the ultrasound image plane to the probe rigid body from
/// corresponded world/image points.
///
/// Each world point is pulled into the probe frame with the probe pose at its
/// capture time. With `known_pixel_spacing` unset, the spacing is recovered as
/// the similarity scale of the alignment.
pub fn register_us_plane(
    world_points: &[Vec3],
    image_points: &[ImagePoint],
    probe_poses: &[Pose],
    known_pixel_spacing: Option<f64>,
) -> Result<UsPlaneCalibration> {
    if world_points.len() != image_points.len() {
        return Err(CalibrationError::LengthMismatch { left: world_points.len(), right: image_points.len() });
    }
    if world_points.len() != probe_poses.len() {
        return Err(CalibrationError::LengthMismatch { left: world_points.len(), right: probe_poses.len() });
    }
    if let Some(s) = known_pixel_spacing {
        if !(s > 0.0) || !s.is_finite() {
            return Err(CalibrationError::DegenerateInput(format!("pixel spacing must be positive, got {s}")));
        }
    } else {
        let span = image_span(image_points);
        if span < MIN_SCALE_SPAN_PX {
            return Err(CalibrationError::ScaleUnobservable(format!(
                "image points span {span:.1} px, need at least {MIN_SCALE_SPAN_PX} px"
            )));
        }
    }

    let lift = known_pixel_spacing.unwrap_or(1.0);
    let source: Vec<Vec3> = image_points.iter().map(|p| Vec3::new(p.x * lift, p.y * lift, 0.0)).collect();
    let target: Vec<Vec3> = world_points
        .iter()
        .zip(probe_poses)
        .map(|(w, probe)| probe.inverse().transform_point(w))
        .collect();
    let fit = absolute_orientation(&source, &target, known_pixel_spacing.is_none())?;
    Ok(UsPlaneCalibration {
        image_to_probe: fit.transform,
        pixel_spacing: lift * fit.scale,
        rms_residual: fit.rms_residual,
    })
}

fn image_span(points: &[ImagePoint]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    best
}
