//! Independent reference implementations and random generators shared by the
//! integration tests. Nothing here calls the solvers under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Rotation3, SymmetricEigen, UnitQuaternion};
use needleguide_core::{Pose, Quat, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_quat<R: Rng>(rng: &mut R) -> Quat {
    let axis = random_unit(rng);
    Quat::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI))
}

pub fn random_pose<R: Rng>(rng: &mut R, extent: f64) -> Pose {
    let p = Vec3::new(
        rng.random_range(-extent..extent),
        rng.random_range(-extent..extent),
        rng.random_range(-extent..extent),
    );
    Pose::new(p, random_quat(rng), 0.0)
}

pub fn rotation(q: &Quat) -> Rotation3<f64> {
    let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q.w, q.x, q.y, q.z));
    uq.to_rotation_matrix()
}

/// Rotation angle between two orientations from the relative rotation
/// matrix: trace for the cosine, skew part for the sine.
pub fn matrix_angle(a: &Quat, b: &Quat) -> f64 {
    let r = rotation(a).matrix().transpose() * rotation(b).matrix();
    let skew = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    (skew.norm() / 2.0).atan2((r.trace() - 1.0) / 2.0)
}

pub fn vec3_strategy(extent: f64) -> impl Strategy<Value = Vec3> {
    (-extent..extent, -extent..extent, -extent..extent).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

pub fn quat_strategy() -> impl Strategy<Value = Quat> {
    (vec3_strategy(1.0), 0.0..std::f64::consts::PI).prop_filter_map("axis too short", |(axis, angle)| {
        (axis.norm() > 1e-3).then(|| Quat::from_axis_angle(&axis, angle))
    })
}

pub fn pose_strategy(extent: f64) -> impl Strategy<Value = Pose> {
    (vec3_strategy(extent), quat_strategy()).prop_map(|(p, q)| Pose::new(p, q, 0.0))
}

/// Homogeneous 4x4 of a pose.
pub fn homogeneous(p: &Pose) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation(&p.orientation).matrix());
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.position);
    m
}

/// Nelder-Mead minimisation of `f` from `x0`, used as a derivative-free
/// reference for least-squares fits.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, iters: usize) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..iters {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            if fc < values[n] {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[best].clone()
}

/// Geometric sphere fit by direct minimisation of squared radial residuals.
pub fn sphere_oracle(points: &[Vec3]) -> (Vec3, f64) {
    let c0 = points.iter().sum::<Vec3>() / points.len() as f64;
    let r0 = points.iter().map(|p| (p - c0).norm()).sum::<f64>() / points.len() as f64;
    let cost = |x: &[f64]| {
        let c = Vec3::new(x[0], x[1], x[2]);
        points.iter().map(|p| ((p - c).norm() - x[3]).powi(2)).sum::<f64>()
    };
    let mut x = vec![c0.x, c0.y, c0.z, r0];
    for _ in 0..4 {
        x = nelder_mead(cost, &x, r0 * 0.1, 4000);
    }
    (Vec3::new(x[0], x[1], x[2]), x[3])
}

/// Pivot calibration as the stacked linear system `R_i t_off - t_world = -p_i`.
pub fn pivot_oracle(poses: &[Pose]) -> (Vec3, Vec3) {
    let n = poses.len();
    let mut a = DMatrix::<f64>::zeros(3 * n, 6);
    let mut b = DVector::<f64>::zeros(3 * n);
    for (i, p) in poses.iter().enumerate() {
        a.view_mut((3 * i, 0), (3, 3)).copy_from(rotation(&p.orientation).matrix());
        a.view_mut((3 * i, 3), (3, 3)).copy_from(&(-Matrix3::identity()));
        b.rows_mut(3 * i, 3).copy_from(&(-p.position));
    }
    let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
    (Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]))
}

/// Horn's closed-form absolute orientation: the rotation is the dominant
/// eigenvector of the 4x4 symmetric matrix built from the cross-covariance.
pub fn horn_oracle(src: &[Vec3], tgt: &[Vec3]) -> Pose {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let ct = tgt.iter().sum::<Vec3>() / n;
    let mut s = Matrix3::zeros();
    for (a, b) in src.iter().zip(tgt) {
        s += (a - cs) * (b - ct).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let nm = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nm);
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k);
    let q = Quat::new_normalized(v[0], v[1], v[2], v[3]).unwrap();
    let t = ct - q.rotate(&cs);
    Pose::new(t, q, 0.0)
}

/// Park-Martin hand-eye: rotation from the log-map axes, translation from
/// the stacked `(R_a - I) t = R_x t_b - t_a` system.
pub fn park_martin_oracle(a: &[Pose], b: &[Pose]) -> Pose {
    let mut m = Matrix3::zeros();
    for (pa, pb) in a.iter().zip(b) {
        let alpha = rotation(&pa.orientation).scaled_axis();
        let beta = rotation(&pb.orientation).scaled_axis();
        m += beta * alpha.transpose();
    }
    let mtm = m.transpose() * m;
    let eig = SymmetricEigen::new(mtm);
    let inv_sqrt = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let rx = inv_sqrt * m.transpose();
    let n = a.len();
    let mut lhs = DMatrix::<f64>::zeros(3 * n, 3);
    let mut rhs = DVector::<f64>::zeros(3 * n);
    for (i, (pa, pb)) in a.iter().zip(b).enumerate() {
        lhs.view_mut((3 * i, 0), (3, 3))
            .copy_from(&(rotation(&pa.orientation).matrix() - Matrix3::identity()));
        rhs.rows_mut(3 * i, 3).copy_from(&(rx * pb.position - pa.position));
    }
    let t = lhs.svd(true, true).solve(&rhs, 1e-14).unwrap();
    let q = Quat::from_rotation_matrix(&rx);
    Pose::new(Vec3::new(t[0], t[1], t[2]), q, 0.0)
}

/// Interpolated orientation `R_a (R_a^T R_b)^t` through the rotation matrix
/// power, independent of quaternion slerp.
pub fn interp_rotation_oracle(a: &Quat, b: &Quat, t: f64) -> Rotation3<f64> {
    let ra = rotation(a);
    let rel = ra.inverse() * rotation(b);
    ra * rel.powf(t)
}
