use super::{CalibrationError, Result, RANK_TOLERANCE};
use crate::geometry::Vec3;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereFit {
    pub center: Vec3,
    pub radius: f64,
    /// RMS of `| |p - center| - radius |`.
    pub rms_residual: f64,
    pub point_count: usize,
}

/// Least-squares sphere through `points`.
///
/// An algebraic fit on centered, scaled coordinates seeds one Gauss-Newton
/// step on the geometric residuals.
pub fn fit_sphere(points: &[Vec3]) -> Result<SphereFit> {
    let n = points.len();
    if n < 4 {
        return Err(CalibrationError::DegenerateInput(format!(
            "sphere fit needs at least 4 points, got {n}"
        )));
    }
    let mean = points.iter().sum::<Vec3>() / n as f64;
    let scale = (points.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / n as f64).sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(CalibrationError::DegenerateInput(
            "all points coincide; the pivot sweep did not move".into(),
        ));
    }

    // |q|^2 = 2 c.q + d
    let mut a = DMatrix::<f64>::zeros(n, 4);
    let mut b = DVector::<f64>::zeros(n);
    for (i, p) in points.iter().enumerate() {
        let q = (p - mean) / scale;
        a[(i, 0)] = 2.0 * q.x;
        a[(i, 1)] = 2.0 * q.y;
        a[(i, 2)] = 2.0 * q.z;
        a[(i, 3)] = 1.0;
        b[i] = q.norm_squared();
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= RANK_TOLERANCE * smax {
        return Err(CalibrationError::DegenerateInput(
            "points are coplanar or collinear; pivot about more than one axis".into(),
        ));
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| CalibrationError::DegenerateInput(e.to_string()))?;
    let cq = Vec3::new(sol[0], sol[1], sol[2]);
    let r2 = sol[3] + cq.norm_squared();
    if !(r2 > 0.0) {
        return Err(CalibrationError::DegenerateInput("algebraic fit gave no real sphere".into()));
    }
    let mut center = mean + cq * scale;
    let mut radius = r2.sqrt() * scale;

    // Gauss-Newton on r_i = |p_i - c| - R.
    let mut jac = DMatrix::<f64>::zeros(n, 4);
    let mut res = DVector::<f64>::zeros(n);
    for (i, p) in points.iter().enumerate() {
        let d = p - center;
        let dist = d.norm();
        if dist > 0.0 {
            let u = d / dist;
            jac[(i, 0)] = -u.x;
            jac[(i, 1)] = -u.y;
            jac[(i, 2)] = -u.z;
        }
        jac[(i, 3)] = -1.0;
        res[i] = -(dist - radius);
    }
    if let Ok(step) = jac.svd(true, true).solve(&res, 0.0) {
        center += Vec3::new(step[0], step[1], step[2]);
        radius += step[3];
    }

    let rms = (points
        .iter()
        .map(|p| ((p - center).norm() - radius).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(SphereFit { center, radius, rms_residual: rms, point_count: n })
}
