use marine_pgo::lie::*;
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use std::f64::consts::PI;

fn se2() -> impl Strategy<Value = Pose2> {
    (-10.0..10.0f64, -10.0..10.0f64, -PI..PI).prop_map(|(x, y, t)| Pose2::new(x, y, t))
}

fn rot3() -> impl Strategy<Value = Rot3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..3.1f64).prop_map(|(a, b, c, angle)| {
        let axis = Vector3::new(a, b, c + 1e-3);
        Rot3::exp(&(axis.normalize() * angle))
    })
}

fn se3() -> impl Strategy<Value = Pose3> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64, rot3()).prop_map(|(x, y, z, r)| Pose3::new(Vector3::new(x, y, z), r))
}

fn close<P: LieGroup>(a: &P, b: &P, tol: f64) -> bool {
    a.between(b).log().amax() < tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn se2_exp_log(p in se2()) {
        prop_assert!(close(&Pose2::exp(&p.log()), &p, 1e-12));
    }

    #[test]
    fn se2_log_exp(x in -5.0..5.0f64, y in -5.0..5.0f64, t in -3.1..3.1f64) {
        let v = DVector::from_vec(vec![x, y, t]);
        prop_assert!((Pose2::exp(&v).log() - v).amax() < 1e-9);
    }

    #[test]
    fn se2_group_laws(a in se2(), b in se2(), c in se2()) {
        prop_assert!(close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-9));
        prop_assert!(close(&a.compose(&a.inverse()), &Pose2::identity(), 1e-12));
        prop_assert!(close(&a.compose(&a.between(&b)), &b, 1e-9));
    }

    #[test]
    fn se3_exp_log(p in se3()) {
        prop_assert!(close(&Pose3::exp(&p.log()), &p, 1e-9));
    }

    #[test]
    fn se3_log_exp(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64, r in rot3()) {
        let phi = r.log();
        let v = DVector::from_vec(vec![x, y, z, phi.x, phi.y, phi.z]);
        prop_assert!((Pose3::exp(&v).log() - v).amax() < 1e-9);
    }

    #[test]
    fn se3_group_laws(a in se3(), b in se3(), c in se3()) {
        prop_assert!(close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-9));
        prop_assert!(close(&a.compose(&a.inverse()), &Pose3::identity(), 1e-12));
        prop_assert!(close(&a.compose(&a.between(&b)), &b, 1e-9));
    }

    #[test]
    fn se3_adjoint_moves_perturbation(a in se3(), x in -0.5..0.5f64, y in -0.5..0.5f64, z in -0.5..0.5f64, r in -0.5..0.5f64) {
        let v = DVector::from_vec(vec![x, y, z, r, -r, 0.5 * r]);
        let left = Pose3::exp(&(a.adjoint() * &v)).compose(&a);
        prop_assert!(close(&left, &a.compose(&Pose3::exp(&v)), 1e-9));
    }

    #[test]
    fn project_lift_round_trip(x in -10.0..10.0f64, y in -10.0..10.0f64, z in -50.0..0.0f64, yaw in -PI..PI, pitch in -1.4..1.4f64, roll in -PI..PI) {
        let p = Pose3::new(Vector3::new(x, y, z), Rot3::from_euler_zyx(yaw, pitch, roll));
        let s = project_se3_to_se2(&p).unwrap();
        prop_assert!(close(&s.lift(), &p, 1e-12));
        prop_assert_eq!(s.z.to_bits(), z.to_bits());
    }
}

#[test]
fn gimbal_lock_is_rejected() {
    let p = Pose3::new(Vector3::zeros(), Rot3::from_euler_zyx(0.3, PI / 2.0, 0.1));
    assert!(matches!(project_se3_to_se2(&p), Err(marine_pgo::error::LieError::GimbalLock { .. })));
}

#[test]
fn se2_exp_log_small_angle_far_from_origin() {
    for th in [-2.035775706816636e-4, 3e-6, 1e-5, 1e-3, -0.05] {
        for y in [-6.892206290696085, 9.9] {
            let p = Pose2::new(0.0, y, th);
            assert!(close(&Pose2::exp(&p.log()), &p, 1e-12), "theta {th} y {y}");
        }
    }
}
