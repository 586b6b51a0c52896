//! Factor-graph data model for the estimator back-end.
//!
//! A [`PoseGraph`] owns pose variables (all [`Pose2`](crate::lie::Pose2) or
//! all [`Pose3`](crate::lie::Pose3)), log-parameterized scale variables for
//! visual factors, and an ordered list of [`Factor`]s. Graphs are assembled
//! through [`GraphBuilder`] and immutable afterwards.

mod factor;
mod info;

pub use factor::{Factor, FactorKind, Linearization};
pub use info::{
    adaptive_gain, adaptive_info, InfoMatrix, MatchStats, MAX_INLIER_GAIN, REFERENCE_COVERAGE,
    REFERENCE_INLIERS,
};

use rayon::prelude::*;
use std::fmt;

use crate::error::GraphError;
use crate::lie::LieGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariableKind {
    Pose2,
    Pose3,
    Scale,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableId {
    pub index: usize,
    pub kind: VariableKind,
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            VariableKind::Pose2 => "pose2",
            VariableKind::Pose3 => "pose3",
            VariableKind::Scale => "scale",
        };
        write!(f, "{tag}#{}", self.index)
    }
}

/// Current estimate of every variable. Scales are stored as `log(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Values<P> {
    pub poses: Vec<P>,
    pub log_scales: Vec<f64>,
}

impl<P: LieGroup> Values<P> {
    pub fn scale(&self, i: usize) -> f64 {
        self.log_scales[i].exp()
    }

    /// Total tangent dimension.
    pub fn dim(&self) -> usize {
        self.poses.len() * P::DOF + self.log_scales.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraph<P> {
    initial: Values<P>,
    factors: Vec<Factor<P>>,
    gauge_fixed: bool,
}

impl<P: LieGroup> PoseGraph<P> {
    pub fn builder() -> GraphBuilder<P> {
        GraphBuilder::new()
    }

    pub fn initial(&self) -> &Values<P> {
        &self.initial
    }

    pub fn factors(&self) -> &[Factor<P>] {
        &self.factors
    }

    pub fn num_poses(&self) -> usize {
        self.initial.poses.len()
    }

    pub fn num_scales(&self) -> usize {
        self.initial.log_scales.len()
    }

    pub fn is_planar(&self) -> bool {
        P::DOF == 3
    }

    /// True when the graph was built with an explicit gauge flag; the solver
    /// then holds pose 0 fixed.
    pub fn gauge_fixed(&self) -> bool {
        self.gauge_fixed
    }

    pub fn has_anchor(&self) -> bool {
        self.factors.iter().any(|f| f.kind() == FactorKind::AnchorPrior)
    }

    /// Same factors, different starting values.
    pub fn with_initial(&self, initial: Values<P>) -> Result<Self, GraphError> {
        if initial.poses.len() != self.num_poses() || initial.log_scales.len() != self.num_scales() {
            return Err(GraphError::ValuesMismatch);
        }
        Ok(Self { initial, factors: self.factors.clone(), gauge_fixed: self.gauge_fixed })
    }

    pub fn check_values(&self, values: &Values<P>) -> Result<(), GraphError> {
        if values.poses.len() != self.num_poses() || values.log_scales.len() != self.num_scales() {
            return Err(GraphError::ValuesMismatch);
        }
        Ok(())
    }

    /// Number of connected components of the pose variables under binary factors.
    pub fn pose_components(&self) -> usize {
        let n = self.num_poses();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut components = n;
        for f in &self.factors {
            if let Some((a, b)) = f.pose_pair() {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                    components -= 1;
                }
            }
        }
        components
    }

    /// Per-factor `rᵀ Λ r`, evaluated in parallel, returned in factor order.
    pub fn factor_chi2(&self, values: &Values<P>) -> Result<Vec<f64>, GraphError> {
        self.check_values(values)?;
        self.factors.par_iter().map(|f| f.chi2(values)).collect()
    }

    /// Sum of squared Mahalanobis residuals over all factors.
    pub fn chi2(&self, values: &Values<P>) -> Result<f64, GraphError> {
        Ok(self.factor_chi2(values)?.iter().sum())
    }
}

/// Incremental constructor for [`PoseGraph`]; validation happens in
/// [`GraphBuilder::build`].
#[derive(Clone, Debug)]
pub struct GraphBuilder<P> {
    poses: Vec<P>,
    log_scales: Vec<f64>,
    factors: Vec<Factor<P>>,
    gauge_fixed: bool,
}

impl<P: LieGroup> Default for GraphBuilder<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: LieGroup> GraphBuilder<P> {
    pub fn new() -> Self {
        Self { poses: Vec::new(), log_scales: Vec::new(), factors: Vec::new(), gauge_fixed: false }
    }

    pub fn add_pose(&mut self, initial: P) -> usize {
        self.poses.push(initial);
        self.poses.len() - 1
    }

    /// Adds a scale variable with initial value `s` (stored as `log s`).
    pub fn add_scale(&mut self, s: f64) -> usize {
        self.log_scales.push(s.ln());
        self.log_scales.len() - 1
    }

    pub fn add_factor(&mut self, f: Factor<P>) -> &mut Self {
        self.factors.push(f);
        self
    }

    pub fn gauge_fixed(&mut self, yes: bool) -> &mut Self {
        self.gauge_fixed = yes;
        self
    }

    pub fn build(&self) -> Result<PoseGraph<P>, GraphError> {
        let n = self.poses.len();
        let mut scale_users = vec![0usize; self.log_scales.len()];
        for (index, f) in self.factors.iter().enumerate() {
            let bad = |reason: String| GraphError::MalformedFactor { index, reason };
            for id in f.endpoints() {
                let limit = if id.kind == VariableKind::Scale { self.log_scales.len() } else { n };
                if id.index >= limit {
                    return Err(GraphError::MissingVariable(id));
                }
                if id.kind == VariableKind::Scale {
                    scale_users[id.index] += 1;
                }
            }
            if let Some((a, b)) = f.pose_pair() {
                if a == b {
                    return Err(bad("binary factor connects a pose to itself".into()));
                }
            }
            let info = f.info();
            if info.dim() != f.residual_dim() {
                return Err(bad(format!("information is {}x{}, residual has {} rows", info.dim(), info.dim(), f.residual_dim())));
            }
            match f {
                Factor::DepthPrior { depth, sigma, .. } => {
                    if !depth.is_finite() || !(*sigma > 0.0) || !sigma.is_finite() {
                        return Err(bad("depth prior needs a finite depth and positive sigma".into()));
                    }
                }
                Factor::VisualScaled { .. } | Factor::Odometry { .. } | Factor::LoopClosure { .. } => {
                    if !f.measurement().is_some_and(|m| m.is_finite()) {
                        return Err(bad("non-finite measurement".into()));
                    }
                }
                Factor::AnchorPrior { prior, .. } => {
                    if !prior.is_finite() {
                        return Err(bad("non-finite prior".into()));
                    }
                }
            }
        }
        for (i, users) in scale_users.iter().enumerate() {
            match users {
                0 => return Err(GraphError::UnusedScale(i)),
                1 => {}
                _ => return Err(GraphError::ScaleReused(i)),
            }
        }
        let graph = PoseGraph {
            initial: Values { poses: self.poses.clone(), log_scales: self.log_scales.clone() },
            factors: self.factors.clone(),
            gauge_fixed: self.gauge_fixed,
        };
        if !graph.has_anchor() && !graph.gauge_fixed {
            return Err(GraphError::NotGaugeFixed);
        }
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{Pose2, Tangent2};

    fn chain(n: usize) -> PoseGraph<Pose2> {
        let mut b = PoseGraph::builder();
        let gt: Vec<Pose2> = (0..n).map(|i| Pose2::new(i as f64, 0.1 * i as f64, 0.2 * i as f64)).collect();
        for p in &gt {
            b.add_pose(*p);
        }
        b.add_factor(Factor::AnchorPrior { pose: 0, prior: gt[0], info: InfoMatrix::identity(3) });
        for i in 0..n - 1 {
            b.add_factor(Factor::Odometry { from: i, to: i + 1, measured: gt[i].between(&gt[i + 1]), info: InfoMatrix::identity(3) });
        }
        b.build().unwrap()
    }

    #[test]
    fn noiseless_chain_has_zero_chi2() {
        let g = chain(6);
        assert!(g.chi2(g.initial()).unwrap() < 1e-18);
        assert_eq!(g.pose_components(), 1);
    }

    #[test]
    fn unit_anchor_residual() {
        let mut b = PoseGraph::builder();
        b.add_pose(crate::lie::exp_se2(&Tangent2::new(1.0, 0.0, 0.0)));
        b.add_factor(Factor::AnchorPrior { pose: 0, prior: Pose2::identity(), info: InfoMatrix::identity(3) });
        let g = b.build().unwrap();
        assert!((g.chi2(g.initial()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn builder_rejects_invalid_graphs() {
        let mut b: GraphBuilder<Pose2> = PoseGraph::builder();
        b.add_pose(Pose2::identity());
        assert_eq!(b.build(), Err(GraphError::NotGaugeFixed));
        b.gauge_fixed(true);
        assert!(b.build().is_ok());
        b.add_factor(Factor::Odometry { from: 0, to: 1, measured: Pose2::identity(), info: InfoMatrix::identity(3) });
        assert!(matches!(b.build(), Err(GraphError::MissingVariable(_))));

        let mut b: GraphBuilder<Pose2> = PoseGraph::builder();
        b.gauge_fixed(true);
        for _ in 0..3 {
            b.add_pose(Pose2::identity());
        }
        let s = b.add_scale(1.0);
        for (i, j) in [(0, 1), (1, 2)] {
            b.add_factor(Factor::VisualScaled { from: i, to: j, measured: Pose2::new(1.0, 0.0, 0.0), scale: s, info: InfoMatrix::identity(3), stats: None });
        }
        assert_eq!(b.build(), Err(GraphError::ScaleReused(0)));

        let mut b: GraphBuilder<Pose2> = PoseGraph::builder();
        b.gauge_fixed(true);
        b.add_pose(Pose2::identity());
        b.add_scale(1.0);
        assert_eq!(b.build(), Err(GraphError::UnusedScale(0)));

        let mut b: GraphBuilder<Pose2> = PoseGraph::builder();
        b.add_pose(Pose2::identity());
        b.add_factor(Factor::AnchorPrior { pose: 0, prior: Pose2::identity(), info: InfoMatrix::identity(6) });
        assert!(matches!(b.build(), Err(GraphError::MalformedFactor { .. })));
    }

    #[test]
    fn components_are_counted() {
        let mut b = PoseGraph::builder();
        for _ in 0..4 {
            b.add_pose(Pose2::identity());
        }
        b.gauge_fixed(true);
        b.add_factor(Factor::Odometry { from: 0, to: 1, measured: Pose2::identity(), info: InfoMatrix::identity(3) });
        b.add_factor(Factor::Odometry { from: 2, to: 3, measured: Pose2::identity(), info: InfoMatrix::identity(3) });
        assert_eq!(b.build().unwrap().pose_components(), 2);
    }
}
