//! Desk-scale policy search for the linear policy: cross-entropy method and
//! REINFORCE with a moving-average baseline. Rollouts run in parallel and
//! are merged in a fixed order, so training is deterministic per seed.
//!
//! Policy file layout (little-endian):
//!
//! ```text
//! "MRVP" | version: u32 | method: u32 | count: u64 | params: count × f64
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::policy::dot;
use super::{step_seed, Encoder, EnvConfig, LinearPolicy, Policy, RefineAction, RefineEnv, DEFAULT_DIM};
use crate::error::RefineError;
use crate::graph::{Factor, InfoMatrix, PoseGraph, Values};
use crate::lie::{LieGroup, Pose2, Tangent2};

pub const POLICY_MAGIC: &[u8; 4] = b"MRVP";
pub const POLICY_VERSION: u32 = 1;

const CEM_SALT: u64 = 0x6365_6d00;
const REINFORCE_SALT: u64 = 0x7266_6f72;
const INSTANCE_SALT: u64 = 0x696e_7374;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyMethod {
    /// Untrained initial parameters.
    Initial,
    Cem,
    Reinforce,
}

impl PolicyMethod {
    pub fn tag(self) -> u32 {
        match self {
            PolicyMethod::Initial => 0,
            PolicyMethod::Cem => 1,
            PolicyMethod::Reinforce => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(PolicyMethod::Initial),
            1 => Some(PolicyMethod::Cem),
            2 => Some(PolicyMethod::Reinforce),
            _ => None,
        }
    }
}

/// A planar graph and the values an episode starts from.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingInstance {
    pub graph: PoseGraph<Pose2>,
    pub start: Values<Pose2>,
}

/// Three-pose odometry chain with exact measurements; one non-root pose
/// starts with a yaw error of 0.1 to 0.6 rad.
pub fn single_axis_instance(seed: u64) -> TrainingInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = |rng: &mut ChaCha8Rng| Pose2::new(1.0, 0.0, rng.random_range(-0.5..=0.5));
    let p0 = Pose2::identity();
    let p1 = p0.compose(&step(&mut rng));
    let p2 = p1.compose(&step(&mut rng));
    let gt = [p0, p1, p2];
    let mut b = PoseGraph::builder();
    for p in &gt {
        b.add_pose(*p);
    }
    for (i, j) in [(0, 1), (1, 2)] {
        b.add_factor(Factor::Odometry { from: i, to: j, measured: gt[i].between(&gt[j]), info: InfoMatrix::identity(3) });
    }
    b.gauge_fixed(true);
    let graph = b.build().expect("well-formed chain");
    let mut start = graph.initial().clone();
    let k = rng.random_range(1..=2);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let delta = sign * rng.random_range(0.1..=0.6);
    start.poses[k] = start.poses[k].retract_tangent(&Tangent2::new(0.0, 0.0, delta));
    TrainingInstance { graph, start }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub method: PolicyMethod,
    pub iters: usize,
    pub seed: u64,
    pub dim: usize,
    /// Standard deviation of the initial parameters.
    pub init_param_std: f64,
    pub population: usize,
    pub elite: usize,
    /// CEM sampling std at the first iteration and its floor.
    pub init_std: f64,
    pub min_std: f64,
    pub instances_per_iter: usize,
    /// Episode length during training.
    pub episode_budget: usize,
    pub learning_rate: f64,
    /// Gaussian exploration std as a fraction of the action bounds.
    pub action_std: f64,
    pub baseline_decay: f64,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: PolicyMethod::Cem,
            iters: 20,
            seed: 0,
            dim: DEFAULT_DIM,
            init_param_std: 0.1,
            population: 32,
            elite: 8,
            init_std: 0.5,
            min_std: 0.05,
            instances_per_iter: 8,
            episode_budget: 8,
            learning_rate: 0.05,
            action_std: 0.3,
            baseline_decay: 0.9,
            env: EnvConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub policy: LinearPolicy,
    pub method: PolicyMethod,
    /// Mean training return per iteration.
    pub history: Vec<f64>,
}

fn episode_cfg(cfg: &EnvConfig, budget: usize) -> EnvConfig {
    EnvConfig { budget, ..*cfg }
}

/// Unguarded episode return (sum of rewards).
fn rollout(policy: &dyn Policy, inst: &TrainingInstance, env: &EnvConfig, encoder: &Encoder, seed: u64) -> f64 {
    let mut e = match RefineEnv::new(&inst.graph, inst.start.clone(), *env) {
        Ok(e) => e,
        Err(_) => return 0.0,
    };
    let mut ret = 0.0;
    while !e.is_done() {
        let obs = e.observe(encoder);
        let a = policy.act(&obs, &e, step_seed(seed, e.step_count()));
        ret += e.step(&a).map(|o| o.reward).unwrap_or(0.0);
    }
    ret
}

/// Per-instance unguarded returns; instance `k` uses seed `seed + k`.
pub fn evaluate_policy(
    policy: &dyn Policy,
    instances: &[TrainingInstance],
    env: &EnvConfig,
    encoder: &Encoder,
    seed: u64,
) -> Vec<f64> {
    instances
        .par_iter()
        .enumerate()
        .map(|(k, inst)| rollout(policy, inst, env, encoder, seed.wrapping_add(k as u64)))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn batch<F>(factory: &F, cfg: &TrainConfig, iter: usize) -> Vec<TrainingInstance>
where
    F: Fn(u64) -> TrainingInstance + Sync,
{
    (0..cfg.instances_per_iter)
        .map(|k| factory(step_seed(cfg.seed ^ INSTANCE_SALT, iter * cfg.instances_per_iter + k)))
        .collect()
}

pub fn train_policy<F>(factory: &F, cfg: &TrainConfig, encoder: &Encoder) -> TrainOutcome
where
    F: Fn(u64) -> TrainingInstance + Sync,
{
    let init = LinearPolicy::seeded(cfg.dim, cfg.seed, cfg.init_param_std);
    if cfg.iters == 0 {
        return TrainOutcome { policy: init, method: PolicyMethod::Initial, history: Vec::new() };
    }
    match cfg.method {
        PolicyMethod::Initial => TrainOutcome { policy: init, method: PolicyMethod::Initial, history: Vec::new() },
        PolicyMethod::Cem => train_cem(factory, cfg, encoder, init),
        PolicyMethod::Reinforce => train_reinforce(factory, cfg, encoder, init),
    }
}

fn train_cem<F>(factory: &F, cfg: &TrainConfig, encoder: &Encoder, init: LinearPolicy) -> TrainOutcome
where
    F: Fn(u64) -> TrainingInstance + Sync,
{
    let n = init.params().len();
    let mut mu = init.params().to_vec();
    let mut std = vec![cfg.init_std; n];
    let env = episode_cfg(&cfg.env, cfg.episode_budget);
    let elite = cfg.elite.clamp(1, cfg.population.max(1));
    let mut history = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let instances = batch(factory, cfg, it);
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed(cfg.seed ^ CEM_SALT, it));
        let samples: Vec<Vec<f64>> = (0..cfg.population.max(1))
            .map(|_| (0..n).map(|k| mu[k] + std[k] * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let scores: Vec<f64> = samples
            .par_iter()
            .map(|p| {
                let pol = LinearPolicy::from_params(cfg.dim, p.clone()).expect("sized sample");
                mean(&evaluate_policy(&pol, &instances, &env, encoder, 0))
            })
            .collect();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let top = &order[..elite];
        for k in 0..n {
            let m = top.iter().map(|&i| samples[i][k]).sum::<f64>() / elite as f64;
            let var = top.iter().map(|&i| (samples[i][k] - m).powi(2)).sum::<f64>() / elite as f64;
            mu[k] = m;
            std[k] = var.sqrt().max(cfg.min_std);
        }
        history.push(mean(&top.iter().map(|&i| scores[i]).collect::<Vec<_>>()));
    }
    TrainOutcome {
        policy: LinearPolicy::from_params(cfg.dim, mu).expect("sized mean"),
        method: PolicyMethod::Cem,
        history,
    }
}

/// Stochastic rollout returning the return and `Σ_t ∇ log π(a_t | o_t)`.
fn stochastic_rollout(
    pol: &LinearPolicy,
    inst: &TrainingInstance,
    env_cfg: &EnvConfig,
    encoder: &Encoder,
    action_std: f64,
    seed: u64,
) -> (f64, Vec<f64>) {
    let n = pol.params().len();
    let mut grad = vec![0.0; n];
    let mut env = match RefineEnv::new(&inst.graph, inst.start.clone(), *env_cfg) {
        Ok(e) => e,
        Err(_) => return (0.0, grad),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = env_cfg.bounds.as_array();
    let score_len = LinearPolicy::score_len(pol.dim());
    let head_len = LinearPolicy::head_len(pol.dim());
    let mut ret = 0.0;
    while !env.is_done() {
        let obs = env.observe(encoder);
        let scores = pol.scores(&obs);
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / z).collect();
        let u: f64 = rng.random();
        let mut e = p.len() - 1;
        let mut acc = 0.0;
        for (k, pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                e = k;
                break;
            }
        }
        for (k, pk) in p.iter().enumerate() {
            let x = LinearPolicy::score_input(&obs, k);
            let coef = if k == e { 1.0 - pk } else { -pk };
            for (g, xv) in grad[..score_len].iter_mut().zip(&x) {
                *g += coef * xv;
            }
        }
        let y = LinearPolicy::head_input(&obs, &env, e);
        let pre = pol.head(&y);
        let mut a = [0.0; 3];
        for c in 0..3 {
            let th = pre[c].tanh();
            let mu = bounds[c] * th;
            let sigma = action_std * bounds[c];
            a[c] = mu + sigma * rng.sample::<f64, _>(StandardNormal);
            let coef = (a[c] - mu) / (sigma * sigma) * bounds[c] * (1.0 - th * th);
            let off = score_len + c * head_len;
            for (g, yv) in grad[off..off + head_len].iter_mut().zip(&y) {
                *g += coef * yv;
            }
        }
        let action = RefineAction { edge_index: e, tangent: Tangent2::new(a[0], a[1], a[2]) };
        ret += env.step(&action).map(|o| o.reward).unwrap_or(0.0);
    }
    (ret, grad)
}

const GRAD_CLIP: f64 = 10.0;

fn train_reinforce<F>(factory: &F, cfg: &TrainConfig, encoder: &Encoder, init: LinearPolicy) -> TrainOutcome
where
    F: Fn(u64) -> TrainingInstance + Sync,
{
    let mut params = init.params().to_vec();
    let env = episode_cfg(&cfg.env, cfg.episode_budget);
    let mut baseline: Option<f64> = None;
    let mut history = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let instances = batch(factory, cfg, it);
        let pol = LinearPolicy::from_params(cfg.dim, params.clone()).expect("sized params");
        let results: Vec<(f64, Vec<f64>)> = instances
            .par_iter()
            .enumerate()
            .map(|(k, inst)| {
                let seed = step_seed(cfg.seed ^ REINFORCE_SALT, it * cfg.instances_per_iter + k);
                stochastic_rollout(&pol, inst, &env, encoder, cfg.action_std, seed)
            })
            .collect();
        let returns: Vec<f64> = results.iter().map(|r| r.0).collect();
        let m = mean(&returns);
        let b = baseline.unwrap_or(m);
        let mut step = vec![0.0; params.len()];
        for (g_ret, grad) in &results {
            for (s, g) in step.iter_mut().zip(grad) {
                *s += (g_ret - b) * g / results.len() as f64;
            }
        }
        let norm = dot(&step, &step).sqrt();
        let scale = if norm > GRAD_CLIP { GRAD_CLIP / norm } else { 1.0 };
        for (p, s) in params.iter_mut().zip(&step) {
            *p += cfg.learning_rate * scale * s;
        }
        baseline = Some(cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * m);
        history.push(m);
    }
    TrainOutcome {
        policy: LinearPolicy::from_params(cfg.dim, params).expect("finite params"),
        method: PolicyMethod::Reinforce,
        history,
    }
}

pub fn write_policy(policy: &LinearPolicy, method: PolicyMethod) -> Vec<u8> {
    let p = policy.params();
    let mut out = Vec::with_capacity(20 + 8 * p.len());
    out.extend_from_slice(POLICY_MAGIC);
    out.extend_from_slice(&POLICY_VERSION.to_le_bytes());
    out.extend_from_slice(&method.tag().to_le_bytes());
    out.extend_from_slice(&(p.len() as u64).to_le_bytes());
    for v in p {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_policy(bytes: &[u8]) -> Result<(LinearPolicy, PolicyMethod), RefineError> {
    let bad = |m: &str| RefineError::PolicyFormat(m.to_string());
    if bytes.len() < 20 || &bytes[..4] != POLICY_MAGIC {
        return Err(bad("missing MRVP header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(4) != POLICY_VERSION {
        return Err(bad(&format!("unsupported version {}", u32_at(4))));
    }
    let method = PolicyMethod::from_tag(u32_at(8)).ok_or_else(|| bad(&format!("unknown method tag {}", u32_at(8))))?;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let payload = &bytes[20..];
    if (payload.len() as u64) != count.saturating_mul(8) {
        return Err(bad(&format!("expected {count} parameters, found {} bytes", payload.len())));
    }
    let params: Vec<f64> =
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    // count = 5·dim + 17
    let n = params.len();
    if n < 17 || !(n - 17).is_multiple_of(5) {
        return Err(bad(&format!("parameter count {n} matches no encoder width")));
    }
    let policy = LinearPolicy::from_params((n - 17) / 5, params).ok_or_else(|| bad("non-finite parameters"))?;
    Ok((policy, method))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_iters_returns_initial() {
        let cfg = TrainConfig { iters: 0, seed: 3, ..TrainConfig::default() };
        let out = train_policy(&single_axis_instance, &cfg, &Encoder::default());
        assert_eq!(out.policy, LinearPolicy::seeded(cfg.dim, 3, cfg.init_param_std));
    }

    #[test]
    fn file_round_trip() {
        let p = LinearPolicy::seeded(16, 9, 1.0);
        let bytes = write_policy(&p, PolicyMethod::Cem);
        assert_eq!(&bytes[..4], b"MRVP");
        assert_eq!(read_policy(&bytes).unwrap(), (p, PolicyMethod::Cem));
        assert!(read_policy(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_policy(b"XXXX").is_err());
    }

    #[test]
    fn instance_is_perturbed() {
        let inst = single_axis_instance(4);
        assert!(crate::solver::orientation_cost_log(&inst.graph, &inst.start, &Default::default()).unwrap() > 0.05);
    }

    #[test]
    fn reinforce_is_deterministic() {
        let cfg = TrainConfig { method: PolicyMethod::Reinforce, iters: 3, seed: 5, ..TrainConfig::default() };
        let a = train_policy(&single_axis_instance, &cfg, &Encoder::default());
        let b = train_policy(&single_axis_instance, &cfg, &Encoder::default());
        assert_eq!(a, b);
    }
}
