//! Trajectory evaluation: similarity alignment, ATE, RPE and drift.
//!
//! RPE's combined figure is reported in degrees per meter: the mean
//! rotational error of all `delta`-frame pairs divided by the mean ground
//! truth distance traveled per pair. Drift is endpoint based: the final
//! position error after aligning the first poses, over total path length.

use nalgebra::{Matrix3, Vector3};

use crate::error::MetricsError;
use crate::lie::{LieGroup, Pose3, Rot3};

/// Minimum points for a similarity alignment.
pub const MIN_ALIGN_POINTS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult {
    pub scale: f64,
    pub rotation: Rot3,
    pub translation: Vector3<f64>,
    pub rmse_after: f64,
    /// Points were collinear or coincident, so the rotation is not unique.
    pub degenerate: bool,
}

impl AlignmentResult {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * self.rotation.rotate(p) + self.translation
    }
}

fn check_lengths(a: usize, b: usize, needed: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a < needed {
        return Err(MetricsError::TooShort { needed, got: a });
    }
    Ok(())
}

fn rmse(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / a.len() as f64).sqrt()
}

/// Least-squares `s, R, t` minimizing `Σ‖s·R·est_i + t − gt_i‖²`.
pub fn umeyama_align(
    est: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    with_scale: bool,
) -> Result<AlignmentResult, MetricsError> {
    check_lengths(est.len(), gt.len(), MIN_ALIGN_POINTS)?;
    let n = est.len() as f64;
    let mu_e = est.iter().sum::<Vector3<f64>>() / n;
    let mu_g = gt.iter().sum::<Vector3<f64>>() / n;
    let var_e = est.iter().map(|p| (p - mu_e).norm_squared()).sum::<f64>() / n;
    let mut cov = Matrix3::zeros();
    for (e, g) in est.iter().zip(gt) {
        cov += (g - mu_g) * (e - mu_e).transpose();
    }
    cov /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let sv = svd.singular_values;
    let mut d = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let mut order: Vec<f64> = sv.iter().copied().collect();
    order.sort_by(|a, b| b.total_cmp(a));
    let degenerate = !(order[1] > 1e-12 * order[0].max(f64::MIN_POSITIVE)) || var_e <= 0.0;
    let scale = if with_scale && var_e > 0.0 {
        let trace: f64 = (0..3).map(|k| sv[k] * d[(k, k)]).sum();
        trace / var_e
    } else {
        1.0
    };
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let rotation = Rot3::from_unit(nalgebra::UnitQuaternion::from_matrix(&r));
    let translation = mu_g - scale * rotation.rotate(&mu_e);
    let mut res = AlignmentResult { scale, rotation, translation, rmse_after: 0.0, degenerate };
    let aligned: Vec<Vector3<f64>> = est.iter().map(|p| res.apply(p)).collect();
    res.rmse_after = rmse(&aligned, gt);
    Ok(res)
}

fn positions(traj: &[Pose3]) -> Vec<Vector3<f64>> {
    traj.iter().map(|p| p.translation).collect()
}

/// Translational RMSE, optionally after similarity alignment.
pub fn ate_rmse(est: &[Pose3], gt: &[Pose3], align: bool) -> Result<f64, MetricsError> {
    let (e, g) = (positions(est), positions(gt));
    if align {
        return Ok(umeyama_align(&e, &g, true)?.rmse_after);
    }
    check_lengths(e.len(), g.len(), 1)?;
    Ok(rmse(&e, &g))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RpeResult {
    /// Mean translational error per pair [m].
    pub trans: f64,
    /// Mean rotational geodesic error per pair [deg].
    pub rot_deg: f64,
    /// `rot_deg` divided by the mean ground-truth distance per pair [deg/m].
    pub deg_per_m: f64,
    pub pairs: usize,
}

/// Relative pose error over all frame pairs `(i, i + delta)`.
pub fn rpe(est: &[Pose3], gt: &[Pose3], delta: usize) -> Result<RpeResult, MetricsError> {
    check_lengths(est.len(), gt.len(), delta.max(1) + 1)?;
    let delta = delta.max(1);
    let pairs = est.len() - delta;
    let (mut t, mut r, mut dist) = (0.0, 0.0, 0.0);
    for i in 0..pairs {
        let rel_g = gt[i].between(&gt[i + delta]);
        let rel_e = est[i].between(&est[i + delta]);
        let e = rel_g.between(&rel_e);
        t += e.translation.norm();
        r += e.rot.angle().to_degrees();
        dist += rel_g.translation.norm();
    }
    let k = pairs as f64;
    let (trans, rot_deg, mean_dist) = (t / k, r / k, dist / k);
    let deg_per_m = if mean_dist > 0.0 { rot_deg / mean_dist } else { 0.0 };
    Ok(RpeResult { trans, rot_deg, deg_per_m, pairs })
}

/// Total ground-truth path length [m].
pub fn path_length(gt: &[Pose3]) -> f64 {
    gt.windows(2).map(|w| (w[1].translation - w[0].translation).norm()).sum()
}

/// `100 ×` final position error after aligning the first poses, over the
/// ground-truth path length.
pub fn drift_percent(est: &[Pose3], gt: &[Pose3]) -> Result<f64, MetricsError> {
    check_lengths(est.len(), gt.len(), 2)?;
    let len = path_length(gt);
    if !(len > 0.0) {
        return Err(MetricsError::ZeroPathLength);
    }
    let t = gt[0].compose(&est[0].inverse());
    let last = t.compose(est.last().expect("non-empty"));
    Ok(100.0 * (last.translation - gt.last().expect("non-empty").translation).norm() / len)
}

/// Per-frame translational errors (without alignment) as CSV.
pub fn per_frame_csv(est: &[Pose3], gt: &[Pose3]) -> Result<String, MetricsError> {
    check_lengths(est.len(), gt.len(), 1)?;
    let mut out = String::from("frame,trans_err_m,rot_err_deg\n");
    for (i, (e, g)) in est.iter().zip(gt).enumerate() {
        let d = g.between(e);
        out.push_str(&format!("{i},{:.17e},{:.17e}\n", d.translation.norm(), d.rot.angle().to_degrees()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj() -> Vec<Pose3> {
        (0..10)
            .map(|i| {
                let a = i as f64 * 0.4;
                Pose3::new(Vector3::new(3.0 * a.cos(), 2.0 * a.sin(), 0.3 * a), Rot3::from_euler_zyx(a, 0.1, -0.05))
            })
            .collect()
    }

    #[test]
    fn identity_alignment() {
        let p = positions(&traj());
        let a = umeyama_align(&p, &p, true).unwrap();
        assert!((a.scale - 1.0).abs() < 1e-12);
        assert!(a.rotation.angle() < 1e-9);
        assert!(a.translation.norm() < 1e-9);
        assert!(a.rmse_after < 1e-9);
        assert!(!a.degenerate);
    }

    #[test]
    fn half_scale_recovers_two() {
        let g = positions(&traj());
        let e: Vec<_> = g.iter().map(|p| 0.5 * p + Vector3::new(1.0, -2.0, 0.5)).collect();
        let a = umeyama_align(&e, &g, true).unwrap();
        assert!((a.scale - 2.0).abs() < 1e-12);
        assert!(a.rmse_after < 1e-9);
    }

    #[test]
    fn collinear_is_flagged() {
        let g: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(umeyama_align(&g, &g, true).unwrap().degenerate);
    }

    #[test]
    fn ate_offset() {
        let g = traj();
        let e: Vec<_> = g.iter().map(|p| Pose3::new(p.translation + Vector3::x(), p.rot)).collect();
        assert!((ate_rmse(&e, &g, false).unwrap() - 1.0).abs() < 1e-12);
        assert!(ate_rmse(&e, &g, true).unwrap() < 1e-9);
        assert_eq!(ate_rmse(&e[..3], &g, false), Err(MetricsError::LengthMismatch(3, 10)));
    }

    #[test]
    fn rpe_invariant_to_constant_yaw() {
        let g = traj();
        let yaw = Pose3::new(Vector3::zeros(), Rot3::from_euler_zyx(0.7, 0.0, 0.0));
        let e: Vec<_> = g.iter().map(|p| yaw.compose(p)).collect();
        let r = rpe(&e, &g, 1).unwrap();
        assert!(r.trans < 1e-12 && r.rot_deg < 1e-6);
    }

    #[test]
    fn drift_definition() {
        let g: Vec<_> = (0..101).map(|i| Pose3::from_translation(i as f64, 0.0, 0.0)).collect();
        let mut e = g.clone();
        e[100] = Pose3::from_translation(100.0, 1.0, 0.0);
        assert!((drift_percent(&e, &g).unwrap() - 1.0).abs() < 1e-12);
        let still = vec![Pose3::identity(); 3];
        assert_eq!(drift_percent(&still, &still), Err(MetricsError::ZeroPathLength));
    }
}
