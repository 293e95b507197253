//! AX = XB hand-eye calibration.
//!
//! Rotation comes from the null vector of the stacked quaternion relation
//! `(L(q_a) - R(q_b)) q_x = 0`; translation from the stacked linear system
//! `(R_a - I) t_x = R_x t_b - t_a`.

use super::{argmin, CalibrationError, Result, PARALLEL_AXIS_THRESHOLD};
use crate::geometry::{Pose, Quat, Vec3};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

/// Motions rotating less than this carry no usable axis.
const MIN_AXIS_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandEyeFit {
    pub x: Pose,
    /// Largest rotation disagreement between `A_i X` and `X B_i` (radians).
    pub rotation_residual: f64,
    /// Largest translation disagreement between `A_i X` and `X B_i` (meters).
    pub translation_residual: f64,
}

fn quat_left(q: &Quat) -> Matrix4<f64> {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Matrix4::new(w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w)
}

fn quat_right(q: &Quat) -> Matrix4<f64> {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Matrix4::new(w, -x, -y, -z, x, w, z, -y, y, -z, w, x, z, y, -x, w)
}

/// Solves `A_i X = X B_i` for `X` in least squares.
pub fn hand_eye_calibrate(motions_a: &[Pose], motions_b: &[Pose]) -> Result<HandEyeFit> {
    if motions_a.len() != motions_b.len() {
        return Err(CalibrationError::LengthMismatch { left: motions_a.len(), right: motions_b.len() });
    }
    let n = motions_a.len();
    if n < 2 {
        return Err(CalibrationError::DegenerateMotion(format!("need at least 2 motions, got {n}")));
    }
    check_axis_diversity(motions_a)?;

    let mut m = DMatrix::<f64>::zeros(4 * n, 4);
    for (i, (a, b)) in motions_a.iter().zip(motions_b).enumerate() {
        let qa = a.orientation.normalized().canonical();
        let qb = b.orientation.normalized().canonical();
        m.view_mut((4 * i, 0), (4, 4)).copy_from(&(quat_left(&qa) - quat_right(&qb)));
    }
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| CalibrationError::DegenerateMotion("rotation solve failed".into()))?;
    let k = argmin(svd.singular_values.as_slice());
    let row = v_t.row(k);
    let qx = Quat::new_normalized(row[0], row[1], row[2], row[3])
        .ok_or_else(|| CalibrationError::DegenerateMotion("rotation solve failed".into()))?
        .canonical();
    let rx = qx.to_rotation_matrix();

    let mut c = DMatrix::<f64>::zeros(3 * n, 3);
    let mut d = DVector::<f64>::zeros(3 * n);
    for (i, (a, b)) in motions_a.iter().zip(motions_b).enumerate() {
        let ra = a.orientation.to_rotation_matrix();
        c.view_mut((3 * i, 0), (3, 3)).copy_from(&(ra - Matrix3::identity()));
        let rhs = rx * b.position - a.position;
        d.rows_mut(3 * i, 3).copy_from(&rhs);
    }
    let tsvd = c.svd(true, true);
    if tsvd.singular_values.min() <= 1e-12 * tsvd.singular_values.max() {
        return Err(CalibrationError::DegenerateMotion("translation is unobservable".into()));
    }
    let t = tsvd
        .solve(&d, 0.0)
        .map_err(|e| CalibrationError::DegenerateMotion(e.to_string()))?;
    let x = Pose::new(Vec3::new(t[0], t[1], t[2]), qx, 0.0);

    let (mut rot_res, mut trans_res) = (0.0f64, 0.0f64);
    for (a, b) in motions_a.iter().zip(motions_b) {
        let lhs = a.compose(&x);
        let rhs = x.compose(b);
        let (dr, dt) = lhs.distance_to(&rhs);
        rot_res = rot_res.max(dr);
        trans_res = trans_res.max(dt);
    }
    Ok(HandEyeFit { x, rotation_residual: rot_res, translation_residual: trans_res })
}

fn check_axis_diversity(motions: &[Pose]) -> Result<()> {
    let axes: Vec<Vec3> = motions
        .iter()
        .filter(|m| m.orientation.angle() > MIN_AXIS_ANGLE)
        .map(|m| m.orientation.to_rotation_vector().normalize())
        .collect();
    let Some(first) = axes.first() else {
        return Err(CalibrationError::DegenerateMotion("no motion contains a rotation".into()));
    };
    let min_sin = PARALLEL_AXIS_THRESHOLD.sin();
    if axes.iter().any(|a| a.cross(first).norm() > min_sin) {
        Ok(())
    } else {
        Err(CalibrationError::DegenerateMotion(
            "all rotation axes are parallel within 1 degree".into(),
        ))
    }
}

/// Consecutive relative motions `P_i^-1 P_{i+1}`.
pub fn relative_motions(poses: &[Pose]) -> Vec<Pose> {
    poses
        .windows(2)
        .map(|w| w[0].inverse().compose(&w[1]).with_timestamp(w[1].timestamp))
        .collect()
}

/// Tracker pose in the display frame, averaged over synchronized samples.
///
/// With `display = Y * tracker * X`, each sample gives
/// `Y = display * X^-1 * tracker^-1`.
pub fn camera_pose_from_hand_eye(tracker: &[Pose], display: &[Pose], x: &Pose) -> Option<Pose> {
    if tracker.is_empty() || tracker.len() != display.len() {
        return None;
    }
    let x_inv = x.inverse();
    let samples: Vec<Pose> = tracker
        .iter()
        .zip(display)
        .map(|(t, d)| d.compose(&x_inv).compose(&t.inverse()))
        .collect();
    let n = samples.len() as f64;
    let position = samples.iter().map(|p| p.position).sum::<Vec3>() / n;
    let reference = samples[0].orientation;
    let (mut w, mut qx, mut qy, mut qz) = (0.0, 0.0, 0.0, 0.0);
    for s in &samples {
        let q = if s.orientation.dot(&reference) < 0.0 { s.orientation.negated() } else { s.orientation };
        w += q.w;
        qx += q.x;
        qy += q.y;
        qz += q.z;
    }
    let orientation = Quat::new_normalized(w, qx, qy, qz)?;
    Some(Pose::new(position, orientation, 0.0))
}
