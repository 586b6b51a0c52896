use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, UnitQuaternion, Vector3};

use super::LieGroup;

const SMALL_ANGLE: f64 = 1e-6;
const SMALL_ANGLE_SERIES: f64 = 0.1;

pub(crate) fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Spatial rotation backed by a unit quaternion, renormalized after every
/// operation.
#[derive(Clone, Copy, Debug)]
pub struct Rot3 {
    q: UnitQuaternion<f64>,
}

impl PartialEq for Rot3 {
    fn eq(&self, other: &Self) -> bool {
        self.q.coords == other.q.coords
    }
}

impl Rot3 {
    pub fn identity() -> Self {
        Self { q: UnitQuaternion::identity() }
    }

    /// Builds from quaternion components; the input is normalized.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { q: UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)) }
    }

    pub fn from_unit(q: UnitQuaternion<f64>) -> Self {
        Self { q: UnitQuaternion::new_normalize(q.into_inner()) }
    }

    /// `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_euler_zyx(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { q: UnitQuaternion::from_euler_angles(roll, pitch, yaw) }
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.q
    }

    /// `(w, x, y, z)`
    pub fn wxyz(&self) -> [f64; 4] {
        let c = self.q.coords;
        [c.w, c.x, c.y, c.z]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.q.to_rotation_matrix().into_inner()
    }

    pub fn compose(&self, rhs: &Rot3) -> Rot3 {
        Self::from_unit(self.q * rhs.q)
    }

    pub fn inverse(&self) -> Rot3 {
        Self { q: self.q.inverse() }
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.q.transform_vector(v)
    }

    pub fn exp(phi: &Vector3<f64>) -> Rot3 {
        let th = phi.norm();
        let (w, k) = if th < SMALL_ANGLE {
            let th2 = th * th;
            (1.0 - th2 / 8.0, 0.5 - th2 / 48.0)
        } else {
            let half = 0.5 * th;
            (half.cos(), half.sin() / th)
        };
        Self::from_wxyz(w, k * phi.x, k * phi.y, k * phi.z)
    }

    pub fn log(&self) -> Vector3<f64> {
        let c = self.q.coords;
        let (w, v) = if c.w < 0.0 {
            (-c.w, -Vector3::new(c.x, c.y, c.z))
        } else {
            (c.w, Vector3::new(c.x, c.y, c.z))
        };
        let n = v.norm();
        if n < SMALL_ANGLE {
            v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w))
        } else {
            v * (2.0 * n.atan2(w) / n)
        }
    }

    /// Geodesic angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    /// ZYX Euler angles `(yaw, pitch, roll)`.
    pub fn euler_zyx(&self) -> (f64, f64, f64) {
        let r = self.matrix();
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        let pitch = (-r[(2, 0)]).atan2((r[(0, 0)].powi(2) + r[(1, 0)].powi(2)).sqrt());
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        (yaw, pitch, roll)
    }
}

/// Left Jacobian of SO(3) (the SE(3) `V` matrix).
fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let th = phi.norm();
    let k = hat(phi);
    let (a, b) = if th < SMALL_ANGLE_SERIES {
        let t2 = th * th;
        let t4 = t2 * t2;
        (
            0.5 - t2 / 24.0 + t4 / 720.0 - t4 * t2 / 40320.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362880.0,
        )
    } else {
        (2.0 * (0.5 * th).sin().powi(2) / (th * th), (th - th.sin()) / (th * th * th))
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Inverse left Jacobian of SO(3). The right one is its transpose.
fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let th = phi.norm();
    let k = hat(phi);
    let c = if th < 1e-3 {
        1.0 / 12.0 + th * th / 720.0
    } else {
        let half = 0.5 * th;
        (1.0 - half / half.tan()) / (th * th)
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Coupling block `Q(ρ, φ)` of the SE(3) left Jacobian.
fn se3_q(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let th = phi.norm();
    let p = hat(phi);
    let r = hat(rho);
    let (c1, c2, c3) = if th < SMALL_ANGLE_SERIES {
        let t2 = th * th;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        (
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0,
            -1.0 / 24.0 + t2 / 720.0 - t4 / 40320.0 + t6 / 3628800.0,
            -1.0 / 120.0 + t2 / 5040.0 - t4 / 362880.0 + t6 / 39916800.0,
        )
    } else {
        let (s, c) = th.sin_cos();
        let t2 = th * th;
        (
            (th - s) / (t2 * th),
            (1.0 - t2 / 2.0 - c) / (t2 * t2),
            (th - s - t2 * th / 6.0) / (t2 * t2 * th),
        )
    };
    let pr = p * r;
    let rp = r * p;
    let prp = p * r * p;
    r * 0.5 + (pr + rp + prp) * c1 - (p * pr + rp * p - prp * 3.0) * c2
        - (prp * p + p * prp) * (0.5 * (c2 - 3.0 * c3))
}

/// Rigid spatial transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose3 {
    pub translation: Vector3<f64>,
    pub rot: Rot3,
}

impl Pose3 {
    pub fn new(translation: Vector3<f64>, rot: Rot3) -> Self {
        Self { translation, rot }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), Rot3::identity())
    }

    pub fn matrix(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot.rotate(p) + self.translation
    }

    fn split(v: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }
}

impl LieGroup for Pose3 {
    const DOF: usize = 6;
    const HEIGHT_AXIS: usize = 2;

    fn identity() -> Self {
        Self::new(Vector3::zeros(), Rot3::identity())
    }

    fn compose(&self, rhs: &Self) -> Self {
        Self::new(self.translation + self.rot.rotate(&rhs.translation), self.rot.compose(&rhs.rot))
    }

    fn inverse(&self) -> Self {
        let inv = self.rot.inverse();
        Self::new(-inv.rotate(&self.translation), inv)
    }

    fn exp(v: &DVector<f64>) -> Self {
        let (rho, phi) = Self::split(v);
        Self::new(so3_left_jacobian(&phi) * rho, Rot3::exp(&phi))
    }

    fn log(&self) -> DVector<f64> {
        let phi = self.rot.log();
        let rho = so3_left_jacobian_inv(&phi) * self.translation;
        DVector::from_vec(vec![rho.x, rho.y, rho.z, phi.x, phi.y, phi.z])
    }

    fn adjoint(&self) -> DMatrix<f64> {
        let r = self.rot.matrix();
        let tr = hat(&self.translation) * r;
        let mut m = DMatrix::zeros(6, 6);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&tr);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        m
    }

    fn right_jacobian_inv(v: &DVector<f64>) -> DMatrix<f64> {
        let (rho, phi) = Self::split(v);
        // Jr(ρ, φ) = [[Jr(φ), Q(-ρ, -φ)], [0, Jr(φ)]], Jr(φ) = Jl(φ)ᵀ
        let jr_inv = so3_left_jacobian_inv(&phi).transpose();
        let q = se3_q(&(-rho), &(-phi));
        let mut m = DMatrix::zeros(6, 6);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jr_inv);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-(jr_inv * q * jr_inv)));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jr_inv);
        m
    }

    fn translation3(&self) -> Vector3<f64> {
        self.translation
    }

    fn scale_translation(&self, s: f64) -> Self {
        Self::new(self.translation * s, self.rot)
    }

    fn height(&self) -> f64 {
        self.translation.z
    }

    fn height_jacobian(&self) -> DVector<f64> {
        let r = self.rot.matrix();
        DVector::from_vec(vec![r[(2, 0)], r[(2, 1)], r[(2, 2)], 0.0, 0.0, 0.0])
    }

    fn rotation_matrix3(&self) -> Matrix3<f64> {
        self.rot.matrix()
    }

    fn is_finite(&self) -> bool {
        self.translation.iter().all(|x| x.is_finite()) && self.rot.wxyz().iter().all(|x| x.is_finite())
    }
}
