//! Lie groups used by the estimator: SO(2)/SE(2) for the planar refinement
//! stage and SO(3)/SE(3) for the full back-end.
//!
//! Tangent vectors are ordered translation first, rotation last:
//! `(x, y, theta)` on SE(2) and `(rho_x, rho_y, rho_z, phi_x, phi_y, phi_z)`
//! on SE(3). All perturbations are applied on the right, `X ⊕ δ = X ∘ Exp(δ)`.

mod planar;
mod se2;
mod se3;

pub use planar::{lift_se2_to_se3, project_se3_to_se2, PlanarProjection, GIMBAL_TOLERANCE};
pub use se2::{exp_se2, log_se2, Pose2, Rot2, Tangent2};
pub use se3::{Pose3, Rot3};

use nalgebra::{DMatrix, DVector, Vector3};
use std::fmt::Debug;

use crate::error::LieError;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a % (2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    } else if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Operations every pose type in a graph must provide.
///
/// The factor and solver code is written once against this trait and
/// instantiated for [`Pose2`] and [`Pose3`].
pub trait LieGroup: Clone + Debug + PartialEq + Send + Sync + 'static {
    /// Tangent-space dimension.
    const DOF: usize;
    /// Index of the tangent/translation coordinate treated as "depth"
    /// by unary depth priors (`y` for planar graphs, `z` for spatial).
    const HEIGHT_AXIS: usize;

    fn identity() -> Self;
    fn compose(&self, rhs: &Self) -> Self;
    fn inverse(&self) -> Self;

    fn between(&self, other: &Self) -> Self {
        self.inverse().compose(other)
    }

    fn exp(v: &DVector<f64>) -> Self;
    fn log(&self) -> DVector<f64>;

    /// Adjoint matrix in the tangent ordering above.
    fn adjoint(&self) -> DMatrix<f64>;

    /// Inverse of the right Jacobian evaluated at tangent `v`.
    fn right_jacobian_inv(v: &DVector<f64>) -> DMatrix<f64>;

    fn retract(&self, v: &DVector<f64>) -> Self {
        self.compose(&Self::exp(v))
    }

    /// Translation embedded in 3-space (planar poses get `z = 0`).
    fn translation3(&self) -> Vector3<f64>;

    /// Same rotation, translation multiplied by `s`.
    fn scale_translation(&self, s: f64) -> Self;

    /// Value of the depth-like coordinate.
    fn height(&self) -> f64;

    /// Derivative of [`LieGroup::height`] with respect to a right perturbation.
    fn height_jacobian(&self) -> DVector<f64>;

    /// Rotation as a 3×3 matrix (planar rotations embed about z).
    fn rotation_matrix3(&self) -> nalgebra::Matrix3<f64>;

    fn is_finite(&self) -> bool;
}

pub(crate) fn check_finite(v: &[f64]) -> Result<(), LieError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LieError::NonFinite)
    }
}
