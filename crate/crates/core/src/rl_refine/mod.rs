//! Episodic refinement of planar pose graphs.
//!
//! An episode starts from a set of SE(2) values. Each step a policy picks a
//! binary edge and a bounded tangent; the edge's endpoint with the larger
//! pose index is retracted by that tangent. The reward is the decrease of
//! the log-weighted orientation cost. `refine` runs an episode and, with the
//! guard enabled, rolls back every step whose reward is negative.

mod encoder;
mod policy;
mod train;

pub use encoder::{Embeddings, Encoder, DEFAULT_DIM, DEFAULT_ENCODER_SEED, DEFAULT_ROUNDS};
pub use policy::{
    step_seed, EdgeObservation, GreedyPolicy, LinearPolicy, NullPolicy, Observation, Policy, RandomPolicy,
};
pub use train::{
    evaluate_policy, read_policy, single_axis_instance, train_policy, write_policy, PolicyMethod, TrainConfig,
    TrainOutcome, TrainingInstance, POLICY_MAGIC, POLICY_VERSION,
};

use nalgebra::Vector2;

use crate::error::RefineError;
use crate::graph::{FactorKind, PoseGraph, Values};
use crate::lie::{wrap_angle, LieGroup, Pose2, Tangent2};
use crate::solver::{chordal_rotation_error, edge_weights, EdgeSubset, WeightingParams};

pub const DEFAULT_BUDGET: usize = 64;

/// Per-component action bounds: `|dx|, |dy| ≤ a_t`, `|dθ| ≤ a_r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionBounds {
    pub a_t: f64,
    pub a_r: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self { a_t: 0.5, a_r: 0.2 }
    }
}

impl ActionBounds {
    pub fn clip(&self, t: &Tangent2) -> Tangent2 {
        Tangent2::new(t.dx.clamp(-self.a_t, self.a_t), t.dy.clamp(-self.a_t, self.a_t), t.dtheta.clamp(-self.a_r, self.a_r))
    }

    pub fn contains(&self, t: &Tangent2) -> bool {
        t.dx.abs() <= self.a_t && t.dy.abs() <= self.a_t && t.dtheta.abs() <= self.a_r
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a_t, self.a_t, self.a_r]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineAction {
    /// Index into the environment's edge list.
    pub edge_index: usize,
    pub tangent: Tangent2,
}

impl RefineAction {
    pub fn noop() -> Self {
        Self { edge_index: 0, tangent: Tangent2::ZERO }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeFeature {
    /// Geodesic angle of `R_jᵀ R_i R_ij`, in `[0, π]`.
    pub rot_residual: f64,
    /// `‖R_iᵀ(t_j − t_i) − t_ij‖²` [m²].
    pub trans_residual: f64,
    pub weight: f64,
    pub is_loop_closure: bool,
}

impl EdgeFeature {
    pub const LEN: usize = 4;

    pub fn to_array(&self) -> [f64; 4] {
        [self.rot_residual, self.trans_residual, self.weight, if self.is_loop_closure { 1.0 } else { 0.0 }]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    /// Episode length `T`.
    pub budget: usize,
    pub bounds: ActionBounds,
    pub weighting: WeightingParams,
    pub subset: EdgeSubset,
    /// Move every later pose rigidly along with the retracted one.
    pub propagate: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            bounds: ActionBounds::default(),
            weighting: WeightingParams::default(),
            subset: EdgeSubset::All,
            propagate: false,
        }
    }
}

/// One binary factor as seen by the environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvEdge {
    pub factor: usize,
    pub from: usize,
    pub to: usize,
    pub measured: Pose2,
    pub weight: f64,
    pub is_loop_closure: bool,
}

impl EnvEdge {
    /// The pose an action on this edge moves.
    pub fn target(&self) -> usize {
        self.from.max(self.to)
    }

    fn term(&self, v: &Values<Pose2>) -> f64 {
        self.weight * chordal_rotation_error(&v.poses[self.from].rot, &self.measured.rot, &v.poses[self.to].rot)
    }

    /// `Log(Z⁻¹ X_i⁻¹ X_j)`.
    pub fn residual(&self, v: &Values<Pose2>) -> Tangent2 {
        let rel = v.poses[self.from].between(&v.poses[self.to]);
        crate::lie::log_se2(&self.measured.between(&rel))
    }

    pub fn feature(&self, v: &Values<Pose2>) -> EdgeFeature {
        let (xi, xj) = (&v.poses[self.from], &v.poses[self.to]);
        let rot = wrap_angle(xj.theta() - xi.theta() - self.measured.theta()).abs();
        let local = xi.rot.inverse().rotate(&(xj.translation() - xi.translation()));
        let trans = (local - Vector2::new(self.measured.x, self.measured.y)).norm_squared();
        EdgeFeature { rot_residual: rot, trans_residual: trans, weight: self.weight, is_loop_closure: self.is_loop_closure }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub cost: f64,
}

/// Environment state: graph, current values, step counter and budget.
#[derive(Clone, Debug)]
pub struct RefineEnv<'g> {
    graph: &'g PoseGraph<Pose2>,
    cfg: EnvConfig,
    edges: Vec<EnvEdge>,
    incident: Vec<Vec<usize>>,
    values: Values<Pose2>,
    terms: Vec<f64>,
    cost: f64,
    step: usize,
}

fn sum_cost(terms: &[f64]) -> f64 {
    terms.iter().sum::<f64>().max(0.0).sqrt()
}

impl<'g> RefineEnv<'g> {
    pub fn new(graph: &'g PoseGraph<Pose2>, values: Values<Pose2>, cfg: EnvConfig) -> Result<Self, RefineError> {
        graph.check_values(&values).map_err(crate::error::SolveError::from)?;
        let weights = edge_weights(graph, &cfg.weighting, cfg.subset)?;
        let edges: Vec<EnvEdge> = weights
            .into_iter()
            .map(|(k, w)| {
                let f = &graph.factors()[k];
                let (from, to) = f.pose_pair().expect("binary factor");
                EnvEdge {
                    factor: k,
                    from,
                    to,
                    measured: *f.measurement().expect("binary factor"),
                    weight: w,
                    is_loop_closure: f.kind() == FactorKind::LoopClosure,
                }
            })
            .collect();
        let mut incident = vec![Vec::new(); graph.num_poses()];
        for (e, edge) in edges.iter().enumerate() {
            incident[edge.from].push(e);
            if edge.to != edge.from {
                incident[edge.to].push(e);
            }
        }
        let terms: Vec<f64> = edges.iter().map(|e| e.term(&values)).collect();
        let cost = sum_cost(&terms);
        Ok(Self { graph, cfg, edges, incident, values, terms, cost, step: 0 })
    }

    pub fn graph(&self) -> &'g PoseGraph<Pose2> {
        self.graph
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn edges(&self) -> &[EnvEdge] {
        &self.edges
    }

    pub fn values(&self) -> &Values<Pose2> {
        &self.values
    }

    pub fn into_values(self) -> Values<Pose2> {
        self.values
    }

    /// Current log-weighted orientation cost.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.budget
    }

    pub fn features(&self) -> Vec<EdgeFeature> {
        self.edges.iter().map(|e| e.feature(&self.values)).collect()
    }

    pub fn endpoints(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.from, e.to)).collect()
    }

    pub fn observe(&self, encoder: &Encoder) -> Observation {
        let features = self.features();
        let emb = encoder.encode(&features, &self.endpoints());
        let edges = self
            .edges
            .iter()
            .zip(features)
            .zip(emb.per_edge)
            .map(|((e, feature), embedding)| EdgeObservation { feature, residual: e.residual(&self.values), embedding })
            .collect();
        Observation { pooled: emb.pooled, edges, step: self.step, budget: self.cfg.budget, cost: self.cost }
    }

    /// Values after applying `a`, the moved poses, and whether every edge
    /// term must be recomputed.
    fn apply(&self, a: &RefineAction) -> Result<(Values<Pose2>, usize), RefineError> {
        let edge = self.edges.get(a.edge_index).ok_or(RefineError::InvalidEdge(a.edge_index))?;
        let t = self.cfg.bounds.clip(&a.tangent);
        let j = edge.target();
        let mut v = self.values.clone();
        let old = v.poses[j];
        v.poses[j] = old.retract_tangent(&t);
        if self.cfg.propagate {
            let delta = v.poses[j].compose(&old.inverse());
            for p in v.poses.iter_mut().skip(j + 1) {
                *p = delta.compose(p);
            }
        }
        Ok((v, j))
    }

    fn terms_after(&self, v: &Values<Pose2>, j: usize) -> Vec<f64> {
        if self.cfg.propagate {
            return self.edges.iter().map(|e| e.term(v)).collect();
        }
        let mut terms = self.terms.clone();
        for &e in &self.incident[j] {
            terms[e] = self.edges[e].term(v);
        }
        terms
    }

    /// Reward `a` would earn, without changing the state.
    pub fn peek(&self, a: &RefineAction) -> Result<f64, RefineError> {
        let (v, j) = self.apply(a)?;
        Ok(self.cost - sum_cost(&self.terms_after(&v, j)))
    }

    /// Applies `a`; out-of-bound tangents are clipped to the bounds.
    pub fn step(&mut self, a: &RefineAction) -> Result<StepOutcome, RefineError> {
        if self.is_done() {
            return Err(RefineError::EpisodeOver);
        }
        let (v, j) = self.apply(a)?;
        let terms = self.terms_after(&v, j);
        let cost = sum_cost(&terms);
        let reward = self.cost - cost;
        self.values = v;
        self.terms = terms;
        self.cost = cost;
        self.step += 1;
        Ok(StepOutcome { reward, done: self.is_done(), cost })
    }

    /// Restores values (and their cost) without touching the step counter.
    pub fn restore(&mut self, values: Values<Pose2>) {
        self.terms = self.edges.iter().map(|e| e.term(&values)).collect();
        self.cost = sum_cost(&self.terms);
        self.values = values;
    }
}

#[derive(Clone, Debug)]
pub struct RefineOptions {
    pub env: EnvConfig,
    pub guard: bool,
    pub seed: u64,
    pub encoder: Encoder,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { env: EnvConfig::default(), guard: true, seed: 0, encoder: Encoder::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost before the first step and after every step.
    pub cost_trace: Vec<f64>,
    pub rewards: Vec<f64>,
    pub rolled_back: usize,
    pub steps: usize,
}

impl RefineReport {
    /// Line-oriented `key=value` rendering.
    pub fn to_key_value(&self) -> String {
        format!(
            "initial_cost={:.17e}\nfinal_cost={:.17e}\nsteps={}\nrolled_back={}\n",
            self.initial_cost, self.final_cost, self.steps, self.rolled_back
        )
    }
}

/// Runs up to `opts.env.budget` steps of `policy`.
pub fn refine(
    graph: &PoseGraph<Pose2>,
    values: &Values<Pose2>,
    policy: &dyn Policy,
    opts: &RefineOptions,
) -> Result<(Values<Pose2>, RefineReport), RefineError> {
    let mut env = RefineEnv::new(graph, values.clone(), opts.env)?;
    let initial_cost = env.cost();
    let mut trace = vec![initial_cost];
    let mut rewards = Vec::new();
    let mut rolled_back = 0;
    while !env.is_done() {
        let obs = env.observe(&opts.encoder);
        let action = policy.act(&obs, &env, step_seed(opts.seed, env.step_count()));
        let before = opts.guard.then(|| env.values().clone());
        let out = env.step(&action)?;
        let mut reward = out.reward;
        if let Some(prev) = before {
            if reward < 0.0 {
                env.restore(prev);
                rolled_back += 1;
                reward = 0.0;
            }
        }
        rewards.push(reward);
        trace.push(env.cost());
    }
    let steps = env.step_count();
    let final_cost = env.cost();
    Ok((env.into_values(), RefineReport { initial_cost, final_cost, cost_trace: trace, rewards, rolled_back, steps }))
}

/// Tangent that only turns the pose.
pub fn rotation_only(dtheta: f64) -> Tangent2 {
    Tangent2::new(0.0, 0.0, dtheta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Factor, InfoMatrix};

    pub(crate) fn chain(perturb: f64) -> (PoseGraph<Pose2>, Values<Pose2>) {
        let gt = [Pose2::new(0.0, 0.0, 0.0), Pose2::new(1.0, 0.0, 0.3), Pose2::new(1.5, 1.0, 1.0)];
        let mut b = PoseGraph::builder();
        for p in &gt {
            b.add_pose(*p);
        }
        for (i, j) in [(0, 1), (1, 2)] {
            b.add_factor(Factor::Odometry { from: i, to: j, measured: gt[i].between(&gt[j]), info: InfoMatrix::identity(3) });
        }
        b.add_factor(Factor::LoopClosure { from: 0, to: 2, measured: gt[0].between(&gt[2]), info: InfoMatrix::identity(3) });
        b.gauge_fixed(true);
        let g = b.build().unwrap();
        let mut v = g.initial().clone();
        v.poses[2] = gt[2].retract_tangent(&rotation_only(perturb));
        (g, v)
    }

    #[test]
    fn zero_action_zero_reward() {
        let (g, v) = chain(0.3);
        let mut env = RefineEnv::new(&g, v.clone(), EnvConfig::default()).unwrap();
        let out = env.step(&RefineAction::noop()).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(env.values(), &v);
    }

    #[test]
    fn correcting_action_zeroes_cost() {
        let (g, v) = chain(0.15);
        let mut env = RefineEnv::new(&g, v.clone(), EnvConfig::default()).unwrap();
        let start = env.cost();
        assert!(start > 0.0);
        let out = env.step(&RefineAction { edge_index: 1, tangent: rotation_only(-0.15) }).unwrap();
        assert!(env.cost() < 1e-12);
        assert!((out.reward - start).abs() < 1e-12);
    }

    #[test]
    fn budget_and_index_errors() {
        let (g, v) = chain(0.1);
        let cfg = EnvConfig { budget: 1, ..EnvConfig::default() };
        let mut env = RefineEnv::new(&g, v, cfg).unwrap();
        assert!(matches!(env.step(&RefineAction { edge_index: 9, tangent: Tangent2::ZERO }), Err(RefineError::InvalidEdge(9))));
        assert!(env.step(&RefineAction::noop()).unwrap().done);
        assert!(matches!(env.step(&RefineAction::noop()), Err(RefineError::EpisodeOver)));
    }

    #[test]
    fn peek_matches_step() {
        let (g, v) = chain(0.4);
        for propagate in [false, true] {
            let cfg = EnvConfig { propagate, ..EnvConfig::default() };
            let mut env = RefineEnv::new(&g, v.clone(), cfg).unwrap();
            let a = RefineAction { edge_index: 0, tangent: Tangent2::new(0.1, -0.2, 0.15) };
            let p = env.peek(&a).unwrap();
            assert_eq!(p, env.step(&a).unwrap().reward);
        }
    }

    #[test]
    fn budget_zero_leaves_values() {
        let (g, v) = chain(0.4);
        let opts = RefineOptions { env: EnvConfig { budget: 0, ..EnvConfig::default() }, ..RefineOptions::default() };
        let (out, rep) = refine(&g, &v, &RandomPolicy, &opts).unwrap();
        assert_eq!(out, v);
        assert_eq!(rep.cost_trace.len(), 1);
    }
}
