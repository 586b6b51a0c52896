use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EdgeFeature, RefineAction, RefineEnv};
use crate::lie::{log_se2, LieGroup, Tangent2};

/// Per-edge part of an observation.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeObservation {
    pub feature: EdgeFeature,
    /// Signed residual `Log(Z⁻¹ X_i⁻¹ X_j)`.
    pub residual: Tangent2,
    pub embedding: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub pooled: DVector<f64>,
    pub edges: Vec<EdgeObservation>,
    pub step: usize,
    pub budget: usize,
    pub cost: f64,
}

/// Chooses the next action. `seed` is fixed per (episode seed, step), so
/// `act` is deterministic. The environment is available for lookahead.
pub trait Policy: Send + Sync {
    fn name(&self) -> &'static str;
    fn act(&self, obs: &Observation, env: &RefineEnv<'_>, seed: u64) -> RefineAction;
}

/// Mixes an episode seed and a step counter into one stream seed.
pub fn step_seed(seed: u64, step: usize) -> u64 {
    let mut z = seed ^ (step as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Always the zero tangent on edge 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn name(&self) -> &'static str {
        "null"
    }

    fn act(&self, _: &Observation, _: &RefineEnv<'_>, _: u64) -> RefineAction {
        RefineAction::noop()
    }
}

/// Uniform edge, uniform tangent within bounds.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn act(&self, obs: &Observation, env: &RefineEnv<'_>, seed: u64) -> RefineAction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = env.config().bounds;
        let edge_index = rng.random_range(0..obs.edges.len());
        let tangent = Tangent2::new(
            rng.random_range(-b.a_t..=b.a_t),
            rng.random_range(-b.a_t..=b.a_t),
            rng.random_range(-b.a_r..=b.a_r),
        );
        RefineAction { edge_index, tangent }
    }
}

/// One-step lookahead over a fixed candidate set per edge: the clipped
/// corrections of the edge's rotation and full residual, plus rotations by
/// `±a_r`, `±a_r/2`, `±a_r/8`. Picks the candidate with the largest strictly
/// positive reward, otherwise the zero action.
#[derive(Clone, Copy, Debug, Default)]
pub struct GreedyPolicy;

impl GreedyPolicy {
    fn candidates(env: &RefineEnv<'_>, e: usize) -> Vec<Tangent2> {
        let edge = &env.edges()[e];
        let b = env.config().bounds;
        let v = env.values();
        // correction that makes the edge's relative pose match exactly
        let full = if edge.target() == edge.to {
            edge.residual(v).neg()
        } else {
            let rel = v.poses[edge.from].between(&v.poses[edge.to]);
            log_se2(&rel.compose(&edge.measured.inverse()))
        };
        let mut out = vec![b.clip(&Tangent2::new(0.0, 0.0, full.dtheta)), b.clip(&full)];
        for k in [1.0, -1.0, 0.5, -0.5, 0.125, -0.125] {
            out.push(Tangent2::new(0.0, 0.0, k * b.a_r));
        }
        out
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn act(&self, obs: &Observation, env: &RefineEnv<'_>, _: u64) -> RefineAction {
        let scored: Vec<(RefineAction, f64)> = (0..obs.edges.len())
            .into_par_iter()
            .flat_map_iter(|e| {
                Self::candidates(env, e).into_iter().map(move |tangent| {
                    let a = RefineAction { edge_index: e, tangent };
                    let r = env.peek(&a).unwrap_or(f64::NEG_INFINITY);
                    (a, r)
                })
            })
            .collect();
        let mut best = (RefineAction::noop(), 0.0);
        for (a, r) in scored {
            if r > best.1 {
                best = (a, r);
            }
        }
        best.0
    }
}

/// Linear scoring of edges plus a bounded linear tangent head.
///
/// ```text
/// x_e = [embedding_e, pooled, feature_e, 1]        score_e = u·x_e
/// y_e = [embedding_e, oriented residual_e, 1]      tangent = bounds ⊙ tanh(V y_e)
/// ```
///
/// The residual is negated when the edge's moved pose is its `from` end.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPolicy {
    dim: usize,
    params: Vec<f64>,
}

impl LinearPolicy {
    pub fn score_len(dim: usize) -> usize {
        2 * dim + EdgeFeature::LEN + 1
    }

    pub fn head_len(dim: usize) -> usize {
        dim + 3 + 1
    }

    pub fn param_count(dim: usize) -> usize {
        Self::score_len(dim) + 3 * Self::head_len(dim)
    }

    pub fn from_params(dim: usize, params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::param_count(dim) && params.iter().all(|p| p.is_finite())).then_some(Self { dim, params })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, params: vec![0.0; Self::param_count(dim)] }
    }

    /// Gaussian `N(0, std²)` parameters.
    pub fn seeded(dim: usize, seed: u64, std: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..Self::param_count(dim))
            .map(|_| std * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Self { dim, params }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn score_input(obs: &Observation, e: usize) -> Vec<f64> {
        let eo = &obs.edges[e];
        let mut x: Vec<f64> = eo.embedding.iter().chain(obs.pooled.iter()).copied().collect();
        x.extend_from_slice(&eo.feature.to_array());
        x.push(1.0);
        x
    }

    pub(crate) fn head_input(obs: &Observation, env: &RefineEnv<'_>, e: usize) -> Vec<f64> {
        let eo = &obs.edges[e];
        let edge = &env.edges()[e];
        let s = if edge.target() == edge.to { 1.0 } else { -1.0 };
        let mut y: Vec<f64> = eo.embedding.iter().copied().collect();
        y.extend_from_slice(&[s * eo.residual.dx, s * eo.residual.dy, s * eo.residual.dtheta, 1.0]);
        y
    }

    pub(crate) fn scores(&self, obs: &Observation) -> Vec<f64> {
        let u = &self.params[..Self::score_len(self.dim)];
        (0..obs.edges.len()).map(|e| dot(u, &Self::score_input(obs, e))).collect()
    }

    /// Pre-squash head outputs `V y_e`.
    pub(crate) fn head(&self, y: &[f64]) -> [f64; 3] {
        let off = Self::score_len(self.dim);
        let h = Self::head_len(self.dim);
        [0, 1, 2].map(|c| dot(&self.params[off + c * h..off + (c + 1) * h], y))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Policy for LinearPolicy {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn act(&self, obs: &Observation, env: &RefineEnv<'_>, _: u64) -> RefineAction {
        let scores = self.scores(obs);
        let mut edge_index = 0;
        for (e, s) in scores.iter().enumerate() {
            if *s > scores[edge_index] {
                edge_index = e;
            }
        }
        let z = self.head(&Self::head_input(obs, env, edge_index));
        let b = env.config().bounds.as_array();
        let t = [0, 1, 2].map(|c| b[c] * z[c].tanh());
        RefineAction { edge_index, tangent: Tangent2::new(t[0], t[1], t[2]) }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::chain;
    use super::super::{refine, Encoder, EnvConfig, RefineOptions};
    use super::*;

    #[test]
    fn greedy_zeroes_single_perturbation() {
        let (g, v) = chain(0.5);
        let opts = RefineOptions { env: EnvConfig { budget: 10, ..EnvConfig::default() }, ..RefineOptions::default() };
        let (_, rep) = refine(&g, &v, &GreedyPolicy, &opts).unwrap();
        assert!(rep.final_cost < 1e-9, "{}", rep.final_cost);
    }

    #[test]
    fn greedy_never_increases_unguarded() {
        let (g, v) = chain(2.0);
        let opts = RefineOptions { guard: false, ..RefineOptions::default() };
        let (_, rep) = refine(&g, &v, &GreedyPolicy, &opts).unwrap();
        assert!(rep.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn linear_param_layout() {
        assert_eq!(LinearPolicy::param_count(16), 37 + 3 * 20);
        assert!(LinearPolicy::from_params(16, vec![0.0; 5]).is_none());
        let (g, v) = chain(0.3);
        let env = RefineEnv::new(&g, v, EnvConfig::default()).unwrap();
        let obs = env.observe(&Encoder::default());
        let a = LinearPolicy::zeros(16).act(&obs, &env, 0);
        assert_eq!(a, RefineAction::noop());
    }

    #[test]
    fn step_seeds_differ() {
        assert_ne!(step_seed(1, 0), step_seed(1, 1));
        assert_ne!(step_seed(1, 0), step_seed(2, 0));
    }
}
