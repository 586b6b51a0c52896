use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use marine_pgo::graph::PoseGraph;
use marine_pgo::io::{from_pose_graph, write_g2o, G2oPose};
use marine_pgo::lie::{Pose2, Pose3};
use marine_pgo::metrics::{ate_rmse, drift_percent, path_length, per_frame_csv, rpe, umeyama_align};
use marine_pgo::pipeline::{run_pipeline, PipelineConfig, PolicySource};
use marine_pgo::rl_refine::{read_policy, refine as run_refine, Encoder, EnvConfig, GreedyPolicy, LinearPolicy, NullPolicy, Policy, RandomPolicy, RefineOptions};
use marine_pgo::sim::{flip_segment, generate, DepthProfile, Layout, SimConfig, SimOutput, SimPose};
use marine_pgo::solver::{gauss_newton, levenberg_marquardt, RobustKernel, SolveConfig, SolveReport, WeightingParams};

use crate::files::{self, LoadedGraph};
use crate::{Ctx, Dim};

fn parse_layout(s: &str) -> Result<Layout, String> {
    let bad = || format!("expected grid:WxH, ring:N or ring:N:RADIUS, got '{s}'");
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "grid" => {
            let (w, h) = rest.split_once('x').ok_or_else(bad)?;
            Ok(Layout::Grid { width: w.parse().map_err(|_| bad())?, height: h.parse().map_err(|_| bad())? })
        }
        "ring" => {
            let mut it = rest.split(':');
            let n: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            // unit spacing between neighbours unless a radius is given
            let radius = match it.next() {
                Some(r) => r.parse().map_err(|_| bad())?,
                None => 1.0 / (2.0 * (std::f64::consts::PI / n.max(2) as f64).sin()),
            };
            if it.next().is_some() {
                return Err(bad());
            }
            Ok(Layout::Ring { radius, n })
        }
        _ => Err(bad()),
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let bad = || format!("expected two comma-separated numbers, got '{s}'");
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_depth_profile(s: &str) -> Result<DepthProfile, String> {
    let bad = || format!("expected constant:Z or sinusoid:BASE:AMPLITUDE:PERIOD, got '{s}'");
    let parts: Vec<&str> = s.split(':').collect();
    let num = |k: usize| parts[k].parse::<f64>().map_err(|_| bad());
    match (parts[0], parts.len()) {
        ("constant", 2) => Ok(DepthProfile::Constant(num(1)?)),
        ("sinusoid", 4) => Ok(DepthProfile::Sinusoid { base: num(1)?, amplitude: num(2)?, period: num(3)? }),
        _ => Err(bad()),
    }
}

fn parse_span(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("expected START:LEN, got '{s}'");
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// grid:WxH, ring:N or ring:N:RADIUS.
    #[arg(long, default_value = "grid:5x5", value_parser = parse_layout)]
    layout: Layout,
    /// Keep only the first N poses of the layout.
    #[arg(long)]
    n: Option<usize>,
    /// Grid spacing in meters.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    /// Odometry noise as SIGMA_XY,SIGMA_THETA.
    #[arg(long, default_value = "0.05,0.01", value_parser = parse_pair)]
    odo_sigma: (f64, f64),
    #[arg(long, default_value_t = 0.5)]
    loop_prob: f64,
    #[arg(long, default_value_t = 1.5)]
    loop_radius: f64,
    /// Loop-closure noise as a multiple of the odometry noise.
    #[arg(long, default_value_t = 1.0)]
    loop_noise_scale: f64,
    /// constant:Z or sinusoid:BASE:AMPLITUDE:PERIOD.
    #[arg(long, default_value = "sinusoid:5:0.5:10", value_parser = parse_depth_profile)]
    depth_profile: DepthProfile,
    #[arg(long, default_value_t = 0.05)]
    depth_sigma: f64,
    /// Omit depth priors from spatial graphs.
    #[arg(long)]
    no_depth_priors: bool,
    #[arg(long, value_enum, default_value = "3")]
    dim: Dim,
    /// Turn the initial poses START..START+LEN by π about their vertical axis.
    #[arg(long, value_parser = parse_span)]
    flip: Option<(usize, usize)>,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth trajectory (TUM).
    #[arg(long)]
    gt: Option<PathBuf>,
}

fn synth_write<P: SimPose + G2oPose>(ctx: &Ctx, a: &SynthArgs, cfg: &SimConfig, spatial: impl Fn(&[P]) -> Vec<Pose3>) -> Result<()> {
    let SimOutput { ground_truth, mut graph, metadata } = generate::<P>(cfg)?;
    if let Some((start, len)) = a.flip {
        if start + len > graph.num_poses() {
            bail!("flip span {start}:{len} exceeds {} poses", graph.num_poses());
        }
        graph = flip_segment(&graph, start..start + len)?;
    }
    files::write(&a.out, write_g2o(&from_pose_graph(&graph)))?;
    if let Some(gt) = &a.gt {
        files::write_trajectory(gt, &spatial(&ground_truth))?;
    }
    ctx.progress(format!("wrote {}", a.out.display()));
    print!(
        "poses={}\nodometry_edges={}\nloop_closures={}\ndepth_priors={}\nseed={}\n",
        graph.num_poses(),
        metadata.odometry_edges,
        metadata.loop_closures,
        metadata.depth_priors,
        metadata.seed
    );
    Ok(())
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let cfg = SimConfig {
        layout: a.layout,
        n_poses: a.n,
        step: a.step,
        odo_sigma: a.odo_sigma,
        loop_prob: a.loop_prob,
        loop_radius: a.loop_radius,
        loop_noise_scale: a.loop_noise_scale,
        depth_profile: a.depth_profile,
        depth_sigma: a.depth_sigma,
        depth_priors: !a.no_depth_priors,
        seed: ctx.seed,
    };
    match a.dim {
        Dim::Planar => synth_write::<Pose2>(ctx, &a, &cfg, files::planar_to_spatial),
        Dim::Spatial => synth_write::<Pose3>(ctx, &a, &cfg, |p| p.to_vec()),
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    Gn,
    Lm,
}

#[derive(Args, Debug)]
struct SolveFlags {
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Huber kernel width on the Mahalanobis residual norm.
    #[arg(long)]
    huber: Option<f64>,
}

impl SolveFlags {
    fn config(&self) -> SolveConfig {
        SolveConfig {
            max_iters: self.max_iters,
            robust_kernel: self.huber.map_or(RobustKernel::None, |delta| RobustKernel::Huber { delta }),
            ..SolveConfig::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "lm")]
    solver: Solver,
    #[command(flatten)]
    solve: SolveFlags,
    /// Estimate as a trajectory (TUM) or, with a .g2o extension, a graph.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn emit_report(text: &str, path: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(p) = path {
        files::write(p, text)?;
    }
    Ok(())
}

fn solve_one<P: G2oPose>(g: &PoseGraph<P>, solver: Solver, cfg: &SolveConfig) -> Result<(marine_pgo::graph::Values<P>, SolveReport)> {
    Ok(match solver {
        Solver::Gn => gauss_newton(g, cfg)?,
        Solver::Lm => levenberg_marquardt(g, cfg)?,
    })
}

pub fn optimize(ctx: &Ctx, a: OptimizeArgs) -> Result<()> {
    let cfg = a.solve.config();
    let report = match files::load_graph(&a.input)? {
        LoadedGraph::Planar(g) => {
            let (v, rep) = solve_one(&g, a.solver, &cfg)?;
            if let Some(out) = &a.out {
                files::write_estimate(out, &g, v, files::planar_to_spatial)?;
            }
            rep
        }
        LoadedGraph::Spatial(g) => {
            let (v, rep) = solve_one(&g, a.solver, &cfg)?;
            if let Some(out) = &a.out {
                files::write_estimate(out, &g, v, |p| p.to_vec())?;
            }
            rep
        }
    };
    ctx.progress(format!("solved {} in {} iterations", a.input.display(), report.iterations));
    emit_report(&report.to_key_value(), a.report.as_deref())
}

#[derive(Args, Debug)]
struct PolicyFlags {
    /// greedy, random, null, or a trained policy file.
    #[arg(long, default_value = "greedy")]
    policy: String,
    /// Refinement steps.
    #[arg(long, default_value_t = marine_pgo::rl_refine::DEFAULT_BUDGET)]
    budget: usize,
    /// Log-length weighting strength (0 gives uniform weights).
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Move every later pose rigidly with each retraction.
    #[arg(long)]
    propagate: bool,
}

enum LoadedPolicy {
    Greedy,
    Random,
    Null,
    Linear(LinearPolicy),
}

impl PolicyFlags {
    fn load(&self) -> Result<LoadedPolicy> {
        Ok(match self.policy.as_str() {
            "greedy" => LoadedPolicy::Greedy,
            "random" => LoadedPolicy::Random,
            "null" => LoadedPolicy::Null,
            path => {
                let bytes = files::read_bytes(Path::new(path))?;
                let (p, _) = read_policy(&bytes).with_context(|| format!("loading policy {path}"))?;
                LoadedPolicy::Linear(p)
            }
        })
    }

    fn weighting(&self) -> Result<WeightingParams> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            bail!("--beta must be a non-negative number");
        }
        Ok(WeightingParams::with_beta(self.beta))
    }
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    /// Planar graph (SE(2) vertices).
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    policy: PolicyFlags,
    /// Accept steps that raise the cost.
    #[arg(long)]
    no_guard: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn refine(ctx: &Ctx, a: RefineArgs) -> Result<()> {
    let LoadedGraph::Planar(g) = files::load_graph(&a.input)? else {
        bail!("refine operates on planar graphs; use `pipeline` for spatial ones");
    };
    let policy = a.policy.load()?;
    let (p, encoder): (&dyn Policy, Encoder) = match &policy {
        LoadedPolicy::Greedy => (&GreedyPolicy, Encoder::default()),
        LoadedPolicy::Random => (&RandomPolicy, Encoder::default()),
        LoadedPolicy::Null => (&NullPolicy, Encoder::default()),
        LoadedPolicy::Linear(l) => (l, Encoder::for_dim(l.dim())),
    };
    let opts = RefineOptions {
        env: EnvConfig { budget: a.policy.budget, weighting: a.policy.weighting()?, propagate: a.policy.propagate, ..EnvConfig::default() },
        guard: !a.no_guard,
        seed: ctx.seed,
        encoder,
    };
    let (v, rep) = run_refine(&g, g.initial(), p, &opts)?;
    if let Some(out) = &a.out {
        files::write_estimate(out, &g, v, files::planar_to_spatial)?;
    }
    ctx.progress(format!("refined {} with the {} policy", a.input.display(), p.name()));
    emit_report(&format!("policy={}\n{}", p.name(), rep.to_key_value()), a.report.as_deref())
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Spatial graph (SE(3) vertices).
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    policy: PolicyFlags,
    #[command(flatten)]
    solve: SolveFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn pipeline(ctx: &Ctx, a: PipelineArgs) -> Result<()> {
    let LoadedGraph::Spatial(g) = files::load_graph(&a.input)? else {
        bail!("pipeline operates on spatial graphs; use `refine` for planar ones");
    };
    let policy = match a.policy.load()? {
        LoadedPolicy::Greedy => PolicySource::Greedy,
        LoadedPolicy::Null => PolicySource::Null,
        LoadedPolicy::Linear(l) => PolicySource::Linear(l),
        LoadedPolicy::Random => bail!("the pipeline accepts greedy, null or a trained policy file"),
    };
    let solve = a.solve.config();
    let cfg = PipelineConfig {
        solve,
        weighting: a.policy.weighting()?,
        refine_budget: a.policy.budget,
        policy,
        final_solve: solve,
        propagate: a.policy.propagate,
        seed: ctx.seed,
    };
    let (v, rep) = run_pipeline(&g, &cfg)?;
    if let Some(out) = &a.out {
        files::write_estimate(out, &g, v, |p| p.to_vec())?;
    }
    ctx.progress(format!("pipeline on {} finished", a.input.display()));
    emit_report(&rep.to_key_value(), a.report.as_deref())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Align {
    None,
    Se3,
    Sim3,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum, default_value = "sim3")]
    align: Align,
    /// Frame offset for relative pose error.
    #[arg(long, default_value_t = 1)]
    delta: usize,
    /// Per-frame errors as CSV.
    #[arg(long)]
    per_frame: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let est = files::read_trajectory(&a.est)?;
    let gt = files::read_trajectory(&a.gt)?;
    let positions = |t: &[Pose3]| t.iter().map(|p| p.translation).collect::<Vec<_>>();
    let ate = match a.align {
        Align::None => ate_rmse(&est, &gt, false)?,
        Align::Se3 => umeyama_align(&positions(&est), &positions(&gt), false)?.rmse_after,
        Align::Sim3 => ate_rmse(&est, &gt, true)?,
    };
    let r = rpe(&est, &gt, a.delta)?;
    let drift = drift_percent(&est, &gt)?;
    if let Some(p) = &a.per_frame {
        files::write(p, per_frame_csv(&est, &gt)?)?;
    }
    ctx.progress(format!("evaluated {} frames", est.len()));
    let text = format!(
        "frames={}\nalign={:?}\nate_rmse={:.17e}\nrpe_trans={:.17e}\nrpe_rot_deg={:.17e}\nrpe_deg_per_m={:.17e}\nrpe_pairs={}\npath_length={:.17e}\ndrift_percent={:.17e}\n",
        est.len(),
        a.align,
        ate,
        r.trans,
        r.rot_deg,
        r.deg_per_m,
        r.pairs,
        path_length(&gt),
        drift
    )
    .to_lowercase();
    emit_report(&text, a.report.as_deref())
}
