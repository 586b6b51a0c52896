use nalgebra::Vector3;
use std::f64::consts::FRAC_PI_2;

use super::{Pose2, Pose3, Rot3};
use crate::error::LieError;

/// Pitch values this close to ±π/2 are treated as gimbal lock.
pub const GIMBAL_TOLERANCE: f64 = 1e-6;

/// Planar part of a spatial pose plus the out-of-plane components needed to
/// rebuild it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarProjection {
    pub planar: Pose2,
    pub roll: f64,
    pub pitch: f64,
    pub z: f64,
}

/// Splits a pose into `(x, y, yaw)` and `(roll, pitch, z)` using the ZYX
/// Euler convention.
pub fn project_se3_to_se2(p: &Pose3) -> Result<PlanarProjection, LieError> {
    let (yaw, pitch, roll) = p.rot.euler_zyx();
    if (pitch.abs() - FRAC_PI_2).abs() < GIMBAL_TOLERANCE {
        return Err(LieError::GimbalLock { pitch });
    }
    let t = p.translation;
    Ok(PlanarProjection {
        planar: Pose2::new(t.x, t.y, yaw),
        roll,
        pitch,
        z: t.z,
    })
}

pub fn lift_se2_to_se3(planar: &Pose2, roll: f64, pitch: f64, z: f64) -> Pose3 {
    Pose3::new(
        Vector3::new(planar.x, planar.y, z),
        Rot3::from_euler_zyx(planar.theta(), pitch, roll),
    )
}

impl PlanarProjection {
    pub fn lift(&self) -> Pose3 {
        lift_se2_to_se3(&self.planar, self.roll, self.pitch, self.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::LieGroup;

    #[test]
    fn identity_projects_to_identity() {
        let p = project_se3_to_se2(&Pose3::identity()).unwrap();
        assert_eq!(p.planar, Pose2::identity());
        assert_eq!((p.roll, p.pitch, p.z), (0.0, 0.0, 0.0));
        assert_eq!(lift_se2_to_se3(&Pose2::identity(), 0.0, 0.0, 0.0), Pose3::identity());
    }

    #[test]
    fn pure_yaw_pose() {
        let p3 = Pose3::new(Vector3::new(1.0, 2.0, 3.0), Rot3::from_euler_zyx(0.7, 0.0, 0.0));
        let p = project_se3_to_se2(&p3).unwrap();
        assert!((p.planar.theta() - 0.7).abs() < 1e-15);
        assert_eq!((p.planar.x, p.planar.y, p.z), (1.0, 2.0, 3.0));
        assert!(p.roll.abs() < 1e-15 && p.pitch.abs() < 1e-15);
        let back = lift_se2_to_se3(&Pose2::new(1.0, 2.0, 0.7), 0.0, 0.0, 3.0);
        assert!((back.rot.matrix() - p3.rot.matrix()).abs().max() < 1e-15);
        assert_eq!(back.translation, p3.translation);
    }

    #[test]
    fn gimbal_lock_is_reported() {
        let p3 = Pose3::new(Vector3::zeros(), Rot3::from_euler_zyx(0.3, FRAC_PI_2, 0.1));
        assert!(matches!(project_se3_to_se2(&p3), Err(LieError::GimbalLock { .. })));
    }
}
