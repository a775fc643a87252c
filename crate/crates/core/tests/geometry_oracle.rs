//! Geometry operations checked against noise-free synthetic scenes.

mod common;

use common::*;
use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;
use twoac::geometry::*;

#[test]
fn clean_correspondences_satisfy_epipolar_constraint() {
    for seed in 0..20 {
        let s = scene(seed);
        for ac in s.clean() {
            let r = epipolar_residual(&s.fundamental, &ac.points);
            assert!(r.abs() <= 1e-10, "seed {seed}: residual {r}");
        }
    }
}

#[test]
fn epipolar_residual_trivial_cases() {
    let f9 = FundamentalMatrix::from_entries(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let pp = PointPair::new(3.0, -2.0, 7.0, 11.0).unwrap();
    assert_eq!(epipolar_residual(&f9, &pp), 1.0);

    let tz = unit_f(&skew(&nalgebra::Vector3::z()));
    let on_line = PointPair::new(1.0, 0.0, 1.0, 0.0).unwrap();
    assert_eq!(epipolar_residual(&tz, &on_line), 0.0);
}

#[test]
fn essential_from_true_focal_satisfies_trace_constraint() {
    for seed in 0..20 {
        let s = scene(seed);
        let e = f_to_e(&s.fundamental, &s.intrinsics);
        let r = trace_residual(&unit_f(e.matrix()), 1.0).norm();
        assert!(r <= 1e-8, "seed {seed}: {r}");
    }
}

#[test]
fn trace_residual_separates_true_and_wrong_focal() {
    for seed in 0..20 {
        let s = scene(seed);
        let at_truth = trace_residual(&s.fundamental, F_TRUE.powi(-2)).norm();
        assert!(at_truth <= 1e-8, "seed {seed}: {at_truth}");
        // The pixel-unit F makes the raw residual tiny for any focal, so the
        // separation is measured on the unit-norm essential matrix.
        let wrong = essential_trace_residual(&s.fundamental, &CameraIntrinsics::new(300.0).unwrap());
        let right = essential_trace_residual(&s.fundamental, &s.intrinsics);
        assert!(wrong > 1e-3, "seed {seed}: {wrong}");
        assert!(right <= 1e-8, "seed {seed}: {right}");
    }
}

#[test]
fn fundamental_matrix_is_singular() {
    for seed in 0..50 {
        let s = scene(seed);
        assert!(s.fundamental.matrix().determinant().abs() <= 1e-10);
    }
}

#[test]
fn decomposition_recovers_scene_pose() {
    for seed in 0..20 {
        let s = scene(seed);
        let pts: Vec<PointPair> = s.clean().iter().map(|ac| ac.points).collect();
        let e = f_to_e(&s.fundamental, &s.intrinsics);
        let pose = decompose_essential(&e, &pts, &s.intrinsics).unwrap();
        let dr = pose.rotation.transpose() * s.pose.rotation;
        let angle = ((dr.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        assert!(angle <= 1e-6, "seed {seed}: rotation off by {angle}");
        assert!((pose.translation - s.pose.translation).norm() <= 1e-6, "seed {seed}");

        // Re-composition reproduces E up to scale and sign.
        let recomposed = EssentialMatrix::from_matrix(&pose.essential()).unwrap();
        assert!((recomposed.matrix() - e.matrix()).norm() <= 1e-8, "seed {seed}");
    }
}

#[test]
fn triangulation_recovers_points() {
    for seed in 0..10 {
        let s = scene(seed);
        for c in &s.correspondences {
            let q = triangulate(&s.pose, &s.intrinsics, &c.clean.points).unwrap();
            assert!((q - c.truth.q).norm() <= 1e-8 * c.truth.q.norm(), "seed {seed}");
            let back = project(&s.pose, &s.intrinsics, &q);
            let p = c.clean.points;
            let err = [back.u1 - p.u1, back.v1 - p.v1, back.u2 - p.u2, back.v2 - p.v2]
                .iter()
                .fold(0.0f64, |m, d| m.max(d.abs()));
            assert!(err <= 1e-8, "seed {seed}: reprojection {err}");
        }
    }
}

#[test]
fn normals_match_planes() {
    for seed in 0..10 {
        let s = scene(seed);
        for c in &s.correspondences {
            let sp = reconstruct_point(&s.pose, &s.intrinsics, &c.clean).unwrap();
            let deg = angle_deg(&sp.n, &c.truth.n);
            assert!(deg < 0.1, "seed {seed}: normal off by {deg} deg");
            assert!(sp.n.dot(&(-sp.q)) > 0.0);
        }
    }
}

/// `A⁻ᵀ (Fᵀ p2)[0..2] = −(F p1)[0..2]` for a noise-free affine correspondence.
fn lemma_residual(f: &FundamentalMatrix, ac: &AffineCorrespondence) -> f64 {
    let m = f.matrix();
    let n2 = m.transpose() * ac.points.p2();
    let n1 = m * ac.points.p1();
    let a_inv_t: Matrix2<f64> = ac.affinity.matrix().try_inverse().unwrap().transpose();
    let lhs = a_inv_t * Vector2::new(n2.x, n2.y);
    (lhs + Vector2::new(n1.x, n1.y)).amax()
}

#[test]
fn affine_lemma_holds_on_clean_scenes() {
    for seed in 0..20 {
        let s = scene(seed);
        for ac in s.clean() {
            assert!(lemma_residual(&s.fundamental, &ac) <= 1e-8, "seed {seed}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affine_lemma_property(seed in 0u64..100_000, pick in 0usize..250) {
        let s = scene(seed);
        let c = s.clean();
        let ac = c[pick % c.len()];
        prop_assert!(lemma_residual(&s.fundamental, &ac) <= 1e-8);
    }

    #[test]
    fn fundamental_normalization_is_canonical(entries in prop::array::uniform9(-10.0f64..10.0), scale in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
        prop_assume!(entries.iter().any(|v| v.abs() > 1e-3));
        let a = FundamentalMatrix::from_entries(&entries).unwrap();
        let scaled: Vec<f64> = entries.iter().map(|v| v * scale).collect();
        let b = FundamentalMatrix::from_entries(&scaled.try_into().unwrap()).unwrap();
        prop_assert!((a.matrix().norm() - 1.0).abs() <= 1e-12);
        prop_assert!(a.frobenius_distance(&b) <= 1e-12);
        let largest = a.entries().iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        prop_assert!(largest > 0.0);
    }

    #[test]
    fn estimated_normal_is_unit_and_faces_camera_one(seed in 0u64..10_000, pick in 0usize..250) {
        let s = scene(seed);
        let c = &s.correspondences[pick % s.correspondences.len()];
        let sp = reconstruct_point(&s.pose, &s.intrinsics, &c.clean).unwrap();
        prop_assert!((sp.n.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(sp.n.dot(&(-sp.q)) > 0.0);
    }
}
