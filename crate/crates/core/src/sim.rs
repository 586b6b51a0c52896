//! Synthetic trajectories and noisy pose graphs with retained ground truth.
//!
//! Ground truth follows either a boustrophedon sweep over a Manhattan grid
//! or a circular ring. Every pose gets an odometry factor to its successor;
//! loop closures connect non-consecutive poses within `loop_radius`; spatial
//! graphs additionally get a depth prior on every pose. Initial values are
//! the dead-reckoned integration of the noisy odometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::error::{GraphError, SimError};
use crate::graph::{Factor, InfoMatrix, PoseGraph};
use crate::lie::{LieGroup, Pose2, Pose3, Rot3};
use nalgebra::{DVector, Vector3};

/// Standard deviations below this are replaced by it when forming
/// information matrices, so noiseless graphs stay well conditioned.
pub const SIGMA_FLOOR: f64 = 1e-3;
/// Standard deviation of the anchor prior on pose 0.
pub const ANCHOR_SIGMA: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Layout {
    Grid { width: usize, height: usize },
    Ring { radius: f64, n: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DepthProfile {
    Constant(f64),
    Sinusoid { base: f64, amplitude: f64, period: f64 },
}

impl DepthProfile {
    pub fn depth_at(&self, i: usize) -> f64 {
        match *self {
            DepthProfile::Constant(z) => z,
            DepthProfile::Sinusoid { base, amplitude, period } => base + amplitude * (2.0 * PI * i as f64 / period).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub layout: Layout,
    /// Truncates the layout's path to this many poses when set.
    pub n_poses: Option<usize>,
    /// Grid spacing in meters (ignored by rings).
    pub step: f64,
    /// `(σ_xy [m], σ_θ [rad])` of the tangent-space odometry noise.
    pub odo_sigma: (f64, f64),
    pub loop_prob: f64,
    pub loop_radius: f64,
    /// Loop-closure noise is the odometry noise times this factor.
    pub loop_noise_scale: f64,
    pub depth_profile: DepthProfile,
    pub depth_sigma: f64,
    /// Emit depth priors (spatial graphs only).
    pub depth_priors: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            layout: Layout::Grid { width: 5, height: 5 },
            n_poses: None,
            step: 1.0,
            odo_sigma: (0.05, 0.01),
            loop_prob: 0.5,
            loop_radius: 1.5,
            loop_noise_scale: 1.0,
            depth_profile: DepthProfile::Sinusoid { base: 5.0, amplitude: 0.5, period: 10.0 },
            depth_sigma: 0.05,
            depth_priors: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        let (sxy, sth) = self.odo_sigma;
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(sxy >= 0.0 && sth >= 0.0 && self.depth_sigma >= 0.0 && self.loop_noise_scale >= 0.0) {
            return bad("sigmas must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.loop_prob) {
            return bad("loop_prob must lie in [0, 1]");
        }
        if !(self.step > 0.0) {
            return bad("step must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimMetadata {
    pub odometry_edges: usize,
    pub loop_closures: usize,
    pub depth_priors: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput<P> {
    pub ground_truth: Vec<P>,
    pub graph: PoseGraph<P>,
    pub metadata: SimMetadata,
}

/// Pose types the simulator can emit.
pub trait SimPose: LieGroup {
    fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self;
    /// Per-component tangent noise standard deviations.
    fn noise_sigmas(sigma_xy: f64, sigma_theta: f64) -> Vec<f64>;
}

impl SimPose for Pose2 {
    fn from_xyz_yaw(x: f64, y: f64, _z: f64, yaw: f64) -> Self {
        Pose2::new(x, y, yaw)
    }

    fn noise_sigmas(sxy: f64, sth: f64) -> Vec<f64> {
        vec![sxy, sxy, sth]
    }
}

impl SimPose for Pose3 {
    fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Pose3::new(Vector3::new(x, y, z), Rot3::from_euler_zyx(yaw, 0.0, 0.0))
    }

    fn noise_sigmas(sxy: f64, sth: f64) -> Vec<f64> {
        vec![sxy, sxy, sxy, sth, sth, sth]
    }
}

/// Copy of `graph` whose initial poses in `range` are turned by π about
/// their own vertical axis. Measurements are untouched.
pub fn flip_segment<P: SimPose>(graph: &PoseGraph<P>, range: std::ops::Range<usize>) -> Result<PoseGraph<P>, GraphError> {
    let turn = P::from_xyz_yaw(0.0, 0.0, 0.0, PI);
    let mut init = graph.initial().clone();
    for p in init.poses.iter_mut().take(range.end).skip(range.start) {
        *p = p.compose(&turn);
    }
    graph.with_initial(init)
}

/// Ground-truth positions `(x, y)` along the layout's path.
pub fn layout_path(layout: &Layout, step: f64) -> Vec<(f64, f64)> {
    match *layout {
        Layout::Grid { width, height } => {
            let mut pts = Vec::with_capacity(width * height);
            for r in 0..height {
                for k in 0..width {
                    let c = if r % 2 == 0 { k } else { width - 1 - k };
                    pts.push((c as f64 * step, r as f64 * step));
                }
            }
            pts
        }
        Layout::Ring { radius, n } => (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                (radius * a.cos(), radius * a.sin())
            })
            .collect(),
    }
}

fn headings(layout: &Layout, pts: &[(f64, f64)]) -> Vec<f64> {
    let n = pts.len();
    (0..n)
        .map(|i| match layout {
            Layout::Ring { n: total, .. } => 2.0 * PI * i as f64 / *total as f64 + PI / 2.0,
            Layout::Grid { .. } => {
                let (a, b) = if i + 1 < n { (pts[i], pts[i + 1]) } else { (pts[i - 1], pts[i]) };
                (b.1 - a.1).atan2(b.0 - a.0)
            }
        })
        .collect()
}

fn sample_tangent(rng: &mut ChaCha8Rng, sigmas: &[f64]) -> DVector<f64> {
    DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)))
}

fn info_from(sigmas: &[f64]) -> InfoMatrix {
    let floored: Vec<f64> = sigmas.iter().map(|s| s.max(SIGMA_FLOOR)).collect();
    InfoMatrix::from_sigmas(&floored).expect("floored sigmas are positive")
}

/// Generates a noisy graph and its ground truth. Deterministic per seed.
pub fn generate<P: SimPose>(cfg: &SimConfig) -> Result<SimOutput<P>, SimError> {
    cfg.validate()?;
    let mut pts = layout_path(&cfg.layout, cfg.step);
    let mut yaw = headings(&cfg.layout, &pts);
    if let Some(n) = cfg.n_poses {
        if n > pts.len() {
            return Err(SimError::DegenerateLayout(format!("layout has {} poses, {n} requested", pts.len())));
        }
        pts.truncate(n);
        yaw.truncate(n);
    }
    let n = pts.len();
    if n < 2 {
        return Err(SimError::DegenerateLayout(format!("need at least 2 poses, layout yields {n}")));
    }
    let gt: Vec<P> = (0..n)
        .map(|i| P::from_xyz_yaw(pts[i].0, pts[i].1, cfg.depth_profile.depth_at(i), yaw[i]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let odo_sigmas = P::noise_sigmas(cfg.odo_sigma.0, cfg.odo_sigma.1);
    let loop_sigmas: Vec<f64> = odo_sigmas.iter().map(|s| s * cfg.loop_noise_scale).collect();

    let mut odometry = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let noise = sample_tangent(&mut rng, &odo_sigmas);
        odometry.push(gt[i].between(&gt[i + 1]).retract(&noise));
    }
    let mut initial = Vec::with_capacity(n);
    initial.push(gt[0].clone());
    for m in &odometry {
        let next = initial.last().expect("non-empty").compose(m);
        initial.push(next);
    }

    let mut b = PoseGraph::builder();
    for p in initial {
        b.add_pose(p);
    }
    let anchor = vec![ANCHOR_SIGMA; P::DOF];
    b.add_factor(Factor::AnchorPrior { pose: 0, prior: gt[0].clone(), info: info_from(&anchor) });
    let odo_info = info_from(&odo_sigmas);
    for (i, m) in odometry.into_iter().enumerate() {
        b.add_factor(Factor::Odometry { from: i, to: i + 1, measured: m, info: odo_info.clone() });
    }

    let loop_info = info_from(&loop_sigmas);
    let mut loops = 0;
    for i in 0..n {
        for j in i + 2..n {
            let d = (gt[i].translation3() - gt[j].translation3()).norm();
            if d > cfg.loop_radius {
                continue;
            }
            // draw unconditionally so the stream does not depend on loop_prob
            let u: f64 = rng.random();
            let noise = sample_tangent(&mut rng, &loop_sigmas);
            if u < cfg.loop_prob {
                let measured = gt[i].between(&gt[j]).retract(&noise);
                b.add_factor(Factor::LoopClosure { from: i, to: j, measured, info: loop_info.clone() });
                loops += 1;
            }
        }
    }

    let mut depth = 0;
    if P::DOF == 6 && cfg.depth_priors {
        let sigma = cfg.depth_sigma.max(SIGMA_FLOOR);
        for (i, p) in gt.iter().enumerate() {
            let z = p.height() + cfg.depth_sigma * rng.sample::<f64, _>(StandardNormal);
            b.add_factor(Factor::DepthPrior { pose: i, depth: z, sigma });
            depth += 1;
        }
    }

    let graph = b.build()?;
    Ok(SimOutput {
        ground_truth: gt,
        graph,
        metadata: SimMetadata { odometry_edges: n - 1, loop_closures: loops, depth_priors: depth, seed: cfg.seed },
    })
}
