use super::{argmin, CalibrationError, Result, RANK_TOLERANCE};
use crate::geometry::{Pose, Quat, Vec3};
use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransformFit {
    /// Maps source into target: `target ~ scale * R * source + t`.
    pub transform: Pose,
    pub scale: f64,
    pub rms_residual: f64,
}

impl RigidTransformFit {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.transform.orientation.rotate(p) * self.scale + self.transform.position
    }
}

/// Closed-form rigid (optionally similarity) alignment of corresponded clouds.
///
/// The rotation always comes out proper: the singular direction with the
/// smallest singular value absorbs any reflection.
pub fn absolute_orientation(source: &[Vec3], target: &[Vec3], estimate_scale: bool) -> Result<RigidTransformFit> {
    if source.len() != target.len() {
        return Err(CalibrationError::LengthMismatch { left: source.len(), right: target.len() });
    }
    let n = source.len();
    if n < 3 {
        return Err(CalibrationError::DegenerateInput(format!(
            "absolute orientation needs at least 3 pairs, got {n}"
        )));
    }
    let nf = n as f64;
    let mu_s = source.iter().sum::<Vec3>() / nf;
    let mu_t = target.iter().sum::<Vec3>() / nf;

    let mut scatter = Matrix3::<f64>::zeros();
    let mut cross = Matrix3::<f64>::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let sc = s - mu_s;
        let tc = t - mu_t;
        scatter += sc * sc.transpose();
        cross += tc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cross /= nf;
    var_s /= nf;

    let mut ev: Vec<f64> = SymmetricEigen::new(scatter).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= RANK_TOLERANCE * ev[0] {
        return Err(CalibrationError::DegenerateInput(
            "source points are collinear; rotation about their line is undetermined".into(),
        ));
    }

    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(CalibrationError::DegenerateInput("SVD failed".into())),
    };
    let sv = svd.singular_values;
    let mut signs = [1.0, 1.0, 1.0];
    if (u * v_t).determinant() < 0.0 {
        signs[argmin(sv.as_slice())] = -1.0;
    }
    let d = Matrix3::from_diagonal(&Vec3::new(signs[0], signs[1], signs[2]));
    let rot = u * d * v_t;
    let scale = if estimate_scale {
        let trace: f64 = (0..3).map(|i| sv[i] * signs[i]).sum();
        trace / var_s
    } else {
        1.0
    };
    if !(scale > 0.0) {
        return Err(CalibrationError::DegenerateInput("estimated scale is not positive".into()));
    }
    let q = Quat::from_rotation_matrix(&rot).normalized();
    let t = mu_t - q.rotate(&mu_s) * scale;
    let fit = RigidTransformFit { transform: Pose::new(t, q, 0.0), scale, rms_residual: 0.0 };
    let rms = (source
        .iter()
        .zip(target)
        .map(|(s, t)| (fit.apply(s) - t).norm_squared())
        .sum::<f64>()
        / nf)
        .sqrt();
    Ok(RigidTransformFit { rms_residual: rms, ..fit })
}
