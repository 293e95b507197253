mod common;

use common::*;
use needleguide_core::geometry::{convert_handedness, flip_rotation_vector, slerp};
use needleguide_core::{Pose, Quat, Vec3};
use proptest::prelude::*;
use rand::Rng;

fn same_pose(a: &Pose, b: &Pose, tol: f64) -> bool {
    (homogeneous(a) - homogeneous(b)).abs().max() < tol
}

#[test]
fn compose_matches_homogeneous_product_over_1000_poses() {
    let mut r = rng(11);
    for _ in 0..1000 {
        let a = random_pose(&mut r, 2.0);
        let b = random_pose(&mut r, 2.0);
        let composed = homogeneous(&a.compose(&b));
        assert!((composed - homogeneous(&a) * homogeneous(&b)).abs().max() < 1e-12);
        let inv = homogeneous(&a.inverse());
        assert!((inv - homogeneous(&a).try_inverse().unwrap()).abs().max() < 1e-12);
    }
}

#[test]
fn inverse_and_associativity_over_1000_poses() {
    let mut r = rng(12);
    for _ in 0..1000 {
        let a = random_pose(&mut r, 1.0);
        let b = random_pose(&mut r, 1.0);
        let c = random_pose(&mut r, 1.0);
        assert!(same_pose(&a.compose(&a.inverse()), &Pose::IDENTITY, 1e-12));
        assert!(same_pose(&a.inverse().compose(&a), &Pose::IDENTITY, 1e-12));
        assert!(same_pose(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-12));
    }
}

#[test]
fn handedness_is_a_reflection_conjugation() {
    // converting is conjugation by S = diag(1, 1, -1)
    let s = nalgebra::Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, -1.0, 1.0));
    let mut r = rng(13);
    for _ in 0..1000 {
        let p = random_pose(&mut r, 1.0);
        let c = convert_handedness(&p);
        assert!((homogeneous(&c) - s * homogeneous(&p) * s).abs().max() < 1e-12);
    }
}

#[test]
fn rotation_vector_flip_matches_pose_flip() {
    let mut r = rng(14);
    for _ in 0..200 {
        let v = random_unit(&mut r) * r.random_range(0.0..3.0);
        let p = Pose::from_rotation(Quat::from_rotation_vector(&v));
        let flipped = convert_handedness(&p);
        let q = Quat::from_rotation_vector(&flip_rotation_vector(&v));
        assert!(matrix_angle(&flipped.orientation, &q) < 1e-9);
    }
}

#[test]
fn slerp_agrees_with_rotation_matrix_power() {
    let mut r = rng(15);
    for _ in 0..500 {
        let a = random_quat(&mut r);
        let b = random_quat(&mut r);
        let t: f64 = r.random_range(0.0..1.0);
        let s = slerp(&a, &b, t);
        let oracle = interp_rotation_oracle(&a, &b, t);
        assert!((rotation(&s).matrix() - oracle.matrix()).abs().max() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn handedness_involution(p in pose_strategy(5.0)) {
        let there = convert_handedness(&p);
        let back = convert_handedness(&there);
        prop_assert!((back.position - p.position).norm() < 1e-12);
        prop_assert!(matrix_angle(&back.orientation, &p.orientation) < 1e-12);
    }

    #[test]
    fn handedness_commutes_with_compose(a in pose_strategy(2.0), b in pose_strategy(2.0)) {
        let h = |p: &Pose| convert_handedness(p);
        prop_assert!(same_pose(&h(&a.compose(&b)), &h(&a).compose(&h(&b)), 1e-12));
    }

    #[test]
    fn handedness_preserves_distances(a in pose_strategy(2.0), p in vec3_strategy(1.0), q in vec3_strategy(1.0)) {
        let h = convert_handedness(&a);
        let flip = |v: &Vec3| Vec3::new(v.x, v.y, -v.z);
        let d0 = (a.transform_point(&p) - a.transform_point(&q)).norm();
        let d1 = (h.transform_point(&flip(&p)) - h.transform_point(&flip(&q))).norm();
        prop_assert!((d0 - d1).abs() < 1e-12);
    }

    #[test]
    fn slerp_stays_unit_and_hits_endpoints(a in quat_strategy(), b in quat_strategy(), t in 0.0f64..1.0) {
        let s = slerp(&a, &b, t);
        prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        prop_assert!(matrix_angle(&slerp(&a, &b, 0.0), &a) < 1e-7);
        prop_assert!(matrix_angle(&slerp(&a, &b, 1.0), &b) < 1e-7);
        // constant angular speed along the shorter arc
        let total = a.angle_to(&b);
        prop_assert!((a.angle_to(&s) - t * total).abs() < 1e-7);
    }

    #[test]
    fn rotation_vector_roundtrip(v in vec3_strategy(1.7)) {
        let q = Quat::from_rotation_vector(&v);
        prop_assert!((q.to_rotation_vector() - v).norm() < 1e-9);
    }
}
