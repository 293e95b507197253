use super::{CalibrationError, Result, RANK_TOLERANCE};
use crate::geometry::{canonical_direction, Vec3};
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFit3D {
    pub center: Vec3,
    /// Plane normal, sign-canonicalized (largest component positive).
    pub normal: Vec3,
    pub radius: f64,
    pub rms_residual: f64,
}

/// Circle in 3D: best-fit plane through the centroid, then an algebraic
/// circle fit in plane coordinates.
pub fn fit_circle_3d(points: &[Vec3]) -> Result<CircleFit3D> {
    let n = points.len();
    if n < 3 {
        return Err(CalibrationError::DegenerateInput(format!(
            "circle fit needs at least 3 points, got {n}"
        )));
    }
    let centroid = points.iter().sum::<Vec3>() / n as f64;
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l_max, l_mid) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l_max > 0.0) || l_mid <= RANK_TOLERANCE * l_max {
        return Err(CalibrationError::DegenerateInput(
            "points are collinear or coincident".into(),
        ));
    }
    let u: Vec3 = eig.eigenvectors.column(order[0]).into();
    let normal: Vec3 = eig.eigenvectors.column(order[2]).into();
    let normal = canonical_direction(&normal.normalize());
    let u = (u - normal * normal.dot(&u)).normalize();
    let v = normal.cross(&u);

    // In-plane Kasa fit, scaled for conditioning: |q|^2 = 2 c.q + d
    let scale = l_max.sqrt();
    let mut a = DMatrix::<f64>::zeros(n, 3);
    let mut b = DVector::<f64>::zeros(n);
    for (i, p) in points.iter().enumerate() {
        let d = p - centroid;
        let (x, y) = (d.dot(&u) / scale, d.dot(&v) / scale);
        a[(i, 0)] = 2.0 * x;
        a[(i, 1)] = 2.0 * y;
        a[(i, 2)] = 1.0;
        b[i] = x * x + y * y;
    }
    let svd = a.svd(true, true);
    if svd.singular_values.min() <= RANK_TOLERANCE * svd.singular_values.max() {
        return Err(CalibrationError::DegenerateInput("in-plane circle fit is rank-deficient".into()));
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| CalibrationError::DegenerateInput(e.to_string()))?;
    let r2 = sol[2] + sol[0] * sol[0] + sol[1] * sol[1];
    if !(r2 > 0.0) {
        return Err(CalibrationError::DegenerateInput("algebraic fit gave no real circle".into()));
    }
    let center = centroid + (u * sol[0] + v * sol[1]) * scale;
    let radius = r2.sqrt() * scale;

    let rms = (points
        .iter()
        .map(|p| {
            let d = p - center;
            let h = d.dot(&normal);
            let rho = (d - normal * h).norm();
            h * h + (rho - radius).powi(2)
        })
        .sum::<f64>()
        / n as f64)
        .sqrt();

    Ok(CircleFit3D { center, normal, radius, rms_residual: rms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_circle_in_xy() {
        let pts = [Vec3::x(), Vec3::y(), -Vec3::x(), -Vec3::y()];
        let f = fit_circle_3d(&pts).unwrap();
        assert!(f.center.norm() < 1e-15);
        assert!((f.radius - 1.0).abs() < 1e-15);
        assert!((f.normal - Vec3::z()).norm() < 1e-15);
        assert!(f.rms_residual < 1e-15);
    }

    #[test]
    fn collinear_rejected() {
        let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(fit_circle_3d(&pts), Err(CalibrationError::DegenerateInput(_))));
        assert!(fit_circle_3d(&pts[..2]).is_err());
    }

    #[test]
    fn normal_sign_is_canonical() {
        // same circle traversed in both directions
        let mut pts: Vec<Vec3> = (0..8)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 8.0;
                Vec3::new(a.cos(), 0.0, a.sin())
            })
            .collect();
        let n1 = fit_circle_3d(&pts).unwrap().normal;
        pts.reverse();
        let n2 = fit_circle_3d(&pts).unwrap().normal;
        assert_eq!(n1, n2);
        assert!(n1.y > 0.0);
    }
}
