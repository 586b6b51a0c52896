use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use super::{check_finite, wrap_angle, LieGroup};
use crate::error::LieError;

/// Below this rotation magnitude exp/log switch to their Taylor expansions.
const SMALL_ANGLE: f64 = 1e-6;
/// Threshold for the Taylor branch of the right Jacobian's coupling column.
const SMALL_ANGLE_JAC: f64 = 1e-4;

/// Planar rotation stored as an angle in `(-π, π]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot2 {
    theta: f64,
}

impl Rot2 {
    pub fn new(theta: f64) -> Self {
        Self { theta: wrap_angle(theta) }
    }

    pub fn identity() -> Self {
        Self { theta: 0.0 }
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    pub fn compose(&self, rhs: &Rot2) -> Rot2 {
        Rot2::new(self.theta + rhs.theta)
    }

    pub fn inverse(&self) -> Rot2 {
        Rot2::new(-self.theta)
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn rotate(&self, v: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }
}

/// SE(2) tangent vector `(dx, dy, dtheta)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Tangent2 {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl Tangent2 {
    pub const ZERO: Tangent2 = Tangent2 { dx: 0.0, dy: 0.0, dtheta: 0.0 };

    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }

    pub fn try_new(dx: f64, dy: f64, dtheta: f64) -> Result<Self, LieError> {
        check_finite(&[dx, dy, dtheta])?;
        Ok(Self::new(dx, dy, dtheta))
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.dx, self.dy, self.dtheta])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.dx, -self.dy, -self.dtheta)
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite() && self.dtheta.is_finite()
    }
}

/// Rigid planar transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub rot: Rot2,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, rot: Rot2::new(theta) }
    }

    pub fn theta(&self) -> f64 {
        self.rot.angle()
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// 3×3 homogeneous matrix.
    pub fn matrix(&self) -> Matrix3<f64> {
        let r = self.rot.matrix();
        Matrix3::new(r[(0, 0)], r[(0, 1)], self.x, r[(1, 0)], r[(1, 1)], self.y, 0.0, 0.0, 1.0)
    }

    pub fn transform_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rot.rotate(p) + self.translation()
    }

    pub fn retract_tangent(&self, v: &Tangent2) -> Pose2 {
        LieGroup::compose(self, &exp_se2(v))
    }
}

/// Closed-form SE(2) exponential.
pub fn exp_se2(v: &Tangent2) -> Pose2 {
    let th = v.dtheta;
    let (a, b) = if th.abs() < SMALL_ANGLE {
        let th2 = th * th;
        (1.0 - th2 / 6.0, th / 2.0 - th * th2 / 24.0)
    } else {
        // 1 - cos θ = 2 sin²(θ/2) without cancellation
        (th.sin() / th, 2.0 * (0.5 * th).sin().powi(2) / th)
    };
    Pose2 {
        x: a * v.dx - b * v.dy,
        y: b * v.dx + a * v.dy,
        rot: Rot2::new(th),
    }
}

/// SE(2) logarithm. At `θ = π` the principal value `+π` is returned.
pub fn log_se2(p: &Pose2) -> Tangent2 {
    let th = p.rot.angle();
    let half = 0.5 * th;
    // V⁻¹ = [[h·cot h, h], [-h, h·cot h]] with h = θ/2
    let hc = if th.abs() < SMALL_ANGLE {
        1.0 - th * th / 12.0
    } else {
        half / half.tan()
    };
    Tangent2 {
        dx: hc * p.x + half * p.y,
        dy: -half * p.x + hc * p.y,
        dtheta: th,
    }
}

fn right_jacobian(v: &Tangent2) -> Matrix3<f64> {
    let (r1, r2, th) = (v.dx, v.dy, v.dtheta);
    let (a, b, c1, c2) = if th.abs() < SMALL_ANGLE_JAC {
        let th2 = th * th;
        (
            1.0 - th2 / 6.0,
            th / 2.0 - th * th2 / 24.0,
            -r2 / 2.0 + r1 * th / 6.0 + r2 * th2 / 24.0,
            r1 / 2.0 + r2 * th / 6.0 - r1 * th2 / 24.0,
        )
    } else {
        let s = th.sin();
        let one_minus_c = 2.0 * (0.5 * th).sin().powi(2);
        let th2 = th * th;
        (
            s / th,
            one_minus_c / th,
            (r1 * (th - s) - r2 * one_minus_c) / th2,
            (r2 * (th - s) + r1 * one_minus_c) / th2,
        )
    };
    Matrix3::new(a, b, c1, -b, a, c2, 0.0, 0.0, 1.0)
}

impl LieGroup for Pose2 {
    const DOF: usize = 3;
    const HEIGHT_AXIS: usize = 1;

    fn identity() -> Self {
        Pose2 { x: 0.0, y: 0.0, rot: Rot2::identity() }
    }

    fn compose(&self, rhs: &Self) -> Self {
        let t = self.rot.rotate(&rhs.translation());
        Pose2 {
            x: self.x + t.x,
            y: self.y + t.y,
            rot: self.rot.compose(&rhs.rot),
        }
    }

    fn inverse(&self) -> Self {
        let inv = self.rot.inverse();
        let t = inv.rotate(&self.translation());
        Pose2 { x: -t.x, y: -t.y, rot: inv }
    }

    fn exp(v: &DVector<f64>) -> Self {
        exp_se2(&Tangent2::from_slice(v.as_slice()))
    }

    fn log(&self) -> DVector<f64> {
        log_se2(self).to_vector()
    }

    fn adjoint(&self) -> DMatrix<f64> {
        let r = self.rot.matrix();
        DMatrix::from_row_slice(
            3,
            3,
            &[r[(0, 0)], r[(0, 1)], self.y, r[(1, 0)], r[(1, 1)], -self.x, 0.0, 0.0, 1.0],
        )
    }

    fn right_jacobian_inv(v: &DVector<f64>) -> DMatrix<f64> {
        let jr = right_jacobian(&Tangent2::from_slice(v.as_slice()));
        // Jr = [[A, b], [0, 1]] with A a scaled rotation
        let a = jr[(0, 0)];
        let b = jr[(0, 1)];
        let det = a * a + b * b;
        let ainv = Matrix2::new(a, -b, b, a) / det;
        let col = -(ainv * Vector2::new(jr[(0, 2)], jr[(1, 2)]));
        DMatrix::from_row_slice(
            3,
            3,
            &[ainv[(0, 0)], ainv[(0, 1)], col.x, ainv[(1, 0)], ainv[(1, 1)], col.y, 0.0, 0.0, 1.0],
        )
    }

    fn translation3(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 0.0)
    }

    fn scale_translation(&self, s: f64) -> Self {
        Pose2 { x: self.x * s, y: self.y * s, rot: self.rot }
    }

    fn height(&self) -> f64 {
        self.y
    }

    fn height_jacobian(&self) -> DVector<f64> {
        // y(X ∘ Exp(δ)) ≈ y + (R δ_t)_y
        let r = self.rot.matrix();
        DVector::from_vec(vec![r[(1, 0)], r[(1, 1)], 0.0])
    }

    fn rotation_matrix3(&self) -> Matrix3<f64> {
        let r = self.rot.matrix();
        Matrix3::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 0)], r[(1, 1)], 0.0, 0.0, 0.0, 1.0)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.rot.angle().is_finite()
    }
}
