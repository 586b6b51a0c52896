//! Five-stage back-end: spatial LM, planar projection, guarded refinement,
//! lift-back with carried roll/pitch/depth, final spatial LM.
//!
//! Binary measurements are projected with the same ZYX split as poses;
//! their information is reduced to the `(x, y, yaw)` block by Schur
//! complement over `(z, roll, pitch)`. Depth and anchor priors stay out of
//! the planar graph, which is gauge-fixed at pose 0 instead.

use nalgebra::DMatrix;

use crate::error::{PipelineError, SolveError};
use crate::graph::{Factor, InfoMatrix, PoseGraph, Values};
use crate::lie::{project_se3_to_se2, PlanarProjection, Pose2, Pose3};
use crate::rl_refine::{
    refine, Encoder, EnvConfig, GreedyPolicy, LinearPolicy, NullPolicy, Policy, RefineOptions, RefineReport,
};
use crate::solver::{levenberg_marquardt, orientation_cost_log, SolveConfig, SolveReport, WeightingParams};

/// Indices of `(x, y, yaw)` in an SE(3) tangent.
const PLANAR_DOF: [usize; 3] = [0, 1, 5];
const OUT_OF_PLANE_DOF: [usize; 3] = [2, 3, 4];

#[derive(Clone, Debug, PartialEq)]
pub enum PolicySource {
    Greedy,
    /// Never moves anything.
    Null,
    Linear(LinearPolicy),
}

impl PolicySource {
    fn policy(&self) -> &dyn Policy {
        match self {
            PolicySource::Greedy => &GreedyPolicy,
            PolicySource::Null => &NullPolicy,
            PolicySource::Linear(p) => p,
        }
    }

    fn encoder(&self) -> Encoder {
        match self {
            PolicySource::Linear(p) => Encoder::for_dim(p.dim()),
            _ => Encoder::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub solve: SolveConfig,
    pub weighting: WeightingParams,
    pub refine_budget: usize,
    pub policy: PolicySource,
    pub final_solve: SolveConfig,
    /// Move later poses rigidly with each retraction.
    pub propagate: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            solve: SolveConfig::default(),
            weighting: WeightingParams::default(),
            refine_budget: crate::rl_refine::DEFAULT_BUDGET,
            policy: PolicySource::Greedy,
            final_solve: SolveConfig::default(),
            propagate: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    SpatialSolve,
    Project,
    Refine,
    Lift,
    FinalSolve,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::SpatialSolve, Stage::Project, Stage::Refine, Stage::Lift, Stage::FinalSolve];

    pub fn key(self) -> &'static str {
        match self {
            Stage::SpatialSolve => "stage1_lm",
            Stage::Project => "stage2_project",
            Stage::Refine => "stage3_refine",
            Stage::Lift => "stage4_lift",
            Stage::FinalSolve => "stage5_lm",
        }
    }
}

/// Costs at the end of one stage. `chi2` is measured on the spatial graph
/// after lifting the stage's values; `oc_log` on their planar projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub chi2: f64,
    pub oc_log: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineReport {
    pub stages: Vec<StageRecord>,
    pub spatial_solve: SolveReport,
    pub refine: RefineReport,
    pub final_solve: SolveReport,
    /// The final solve ended above the stage-1 cost, so stage-1 values were
    /// returned.
    pub fell_back: bool,
    pub final_chi2: f64,
}

impl PipelineReport {
    pub fn stage(&self, s: Stage) -> &StageRecord {
        self.stages.iter().find(|r| r.stage == s).expect("every stage is recorded")
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for r in &self.stages {
            out.push_str(&format!("{}.chi2={:.17e}\n{}.oc_log={:.17e}\n", r.stage.key(), r.chi2, r.stage.key(), r.oc_log));
        }
        out.push_str(&format!(
            "stage1_lm.iterations={}\nstage1_lm.reason={}\nrefine.steps={}\nrefine.rolled_back={}\nstage5_lm.iterations={}\nstage5_lm.reason={}\nfell_back={}\nfinal_chi2={:.17e}\n",
            self.spatial_solve.iterations,
            self.spatial_solve.reason.as_str(),
            self.refine.steps,
            self.refine.rolled_back,
            self.final_solve.iterations,
            self.final_solve.reason.as_str(),
            self.fell_back,
            self.final_chi2,
        ));
        out
    }
}

/// Schur complement of `Λ` onto the planar block.
pub fn marginalize_planar(info: &DMatrix<f64>) -> DMatrix<f64> {
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| info[(rows[r], cols[c])]);
    let mm = pick(&PLANAR_DOF, &PLANAR_DOF);
    let mo = pick(&PLANAR_DOF, &OUT_OF_PLANE_DOF);
    let oo = pick(&OUT_OF_PLANE_DOF, &OUT_OF_PLANE_DOF);
    match oo.clone().cholesky() {
        Some(ch) => {
            let reduced = &mm - &mo * ch.solve(&mo.transpose());
            // restore exact symmetry lost to rounding
            (&reduced + reduced.transpose()) * 0.5
        }
        // nothing couples through a singular block
        None => mm,
    }
}

/// Planar graph over the same poses, gauge-fixed at pose 0.
pub fn project_graph(g3: &PoseGraph<Pose3>, values: &Values<Pose3>) -> Result<PoseGraph<Pose2>, PipelineError> {
    let mut b = PoseGraph::builder();
    for p in &values.poses {
        b.add_pose(project_se3_to_se2(p)?.planar);
    }
    for s in &values.log_scales {
        b.add_scale(s.exp());
    }
    let reduce = |m: &Pose3, info: &InfoMatrix| -> Result<(Pose2, InfoMatrix), PipelineError> {
        Ok((project_se3_to_se2(m)?.planar, InfoMatrix::new(marginalize_planar(info.matrix()))?))
    };
    for f in g3.factors() {
        match f {
            Factor::Odometry { from, to, measured, info } => {
                let (measured, info) = reduce(measured, info)?;
                b.add_factor(Factor::Odometry { from: *from, to: *to, measured, info });
            }
            Factor::LoopClosure { from, to, measured, info } => {
                let (measured, info) = reduce(measured, info)?;
                b.add_factor(Factor::LoopClosure { from: *from, to: *to, measured, info });
            }
            Factor::VisualScaled { from, to, measured, scale, info, stats } => {
                let (measured, info) = reduce(measured, info)?;
                b.add_factor(Factor::VisualScaled { from: *from, to: *to, measured, scale: *scale, info, stats: *stats });
            }
            Factor::DepthPrior { .. } | Factor::AnchorPrior { .. } => {}
        }
    }
    b.gauge_fixed(true);
    let mut g2 = b.build()?;
    if !values.log_scales.is_empty() {
        // keep log-scales bit-identical instead of round-tripping through exp
        let mut init = g2.initial().clone();
        init.log_scales = values.log_scales.clone();
        g2 = g2.with_initial(init)?;
    }
    Ok(g2)
}

fn planar_values(proj: &[PlanarProjection], log_scales: &[f64]) -> Values<Pose2> {
    Values { poses: proj.iter().map(|p| p.planar).collect(), log_scales: log_scales.to_vec() }
}

fn lift_values(planar: &Values<Pose2>, proj: &[PlanarProjection], log_scales: &[f64]) -> Values<Pose3> {
    let poses = planar
        .poses
        .iter()
        .zip(proj)
        .map(|(p, s)| PlanarProjection { planar: *p, ..*s }.lift())
        .collect();
    Values { poses, log_scales: log_scales.to_vec() }
}

pub fn run_pipeline(g3: &PoseGraph<Pose3>, cfg: &PipelineConfig) -> Result<(Values<Pose3>, PipelineReport), PipelineError> {
    let (v1, spatial_solve) = levenberg_marquardt(g3, &cfg.solve)?;
    let chi2_1 = g3.chi2(&v1).map_err(SolveError::from)?;

    let proj: Vec<PlanarProjection> = v1.poses.iter().map(project_se3_to_se2).collect::<Result<_, _>>()?;
    let g2 = project_graph(g3, &v1)?;
    let v2 = planar_values(&proj, &v1.log_scales);
    let oc = |v: &Values<Pose2>| orientation_cost_log(&g2, v, &cfg.weighting);
    let oc_1 = oc(&v2)?;
    let chi2_2 = g3.chi2(&lift_values(&v2, &proj, &v1.log_scales)).map_err(SolveError::from)?;

    let opts = RefineOptions {
        env: EnvConfig { budget: cfg.refine_budget, weighting: cfg.weighting, propagate: cfg.propagate, ..EnvConfig::default() },
        guard: true,
        seed: cfg.seed,
        encoder: cfg.policy.encoder(),
    };
    let (v3, refine_report) = refine(&g2, &v2, cfg.policy.policy(), &opts)?;
    let oc_3 = oc(&v3)?;

    let v4 = lift_values(&v3, &proj, &v1.log_scales);
    let chi2_4 = g3.chi2(&v4).map_err(SolveError::from)?;

    let (v5, final_solve) = levenberg_marquardt(&g3.with_initial(v4)?, &cfg.final_solve)?;
    let chi2_5 = g3.chi2(&v5).map_err(SolveError::from)?;
    let proj5: Vec<PlanarProjection> = v5.poses.iter().map(project_se3_to_se2).collect::<Result<_, _>>()?;
    let oc_5 = oc(&planar_values(&proj5, &v5.log_scales))?;

    let stages = vec![
        StageRecord { stage: Stage::SpatialSolve, chi2: chi2_1, oc_log: oc_1 },
        StageRecord { stage: Stage::Project, chi2: chi2_2, oc_log: oc_1 },
        StageRecord { stage: Stage::Refine, chi2: chi2_4, oc_log: oc_3 },
        StageRecord { stage: Stage::Lift, chi2: chi2_4, oc_log: oc_3 },
        StageRecord { stage: Stage::FinalSolve, chi2: chi2_5, oc_log: oc_5 },
    ];
    let fell_back = chi2_5 > chi2_1;
    let (values, final_chi2) = if fell_back { (v1, chi2_1) } else { (v5, chi2_5) };
    let report = PipelineReport { stages, spatial_solve, refine: refine_report, final_solve, fell_back, final_chi2 };
    Ok((values, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_of_block_diagonal_is_block() {
        let info = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = marginalize_planar(&info);
        assert_eq!(r, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 6.0])));
    }

    #[test]
    fn schur_matches_covariance_block() {
        // marginal information = inverse of the covariance sub-block
        let a = DMatrix::from_fn(6, 6, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.1);
        let info = &a * a.transpose() + DMatrix::identity(6, 6);
        let cov = info.clone().try_inverse().unwrap();
        let sub = DMatrix::from_fn(3, 3, |r, c| cov[(PLANAR_DOF[r], PLANAR_DOF[c])]);
        let expect = sub.try_inverse().unwrap();
        assert!((marginalize_planar(&info) - expect).amax() < 1e-12);
    }

    use crate::lie::LieGroup;
    use crate::sim::{generate, Layout, SimConfig};

    fn spatial(seed: u64, sigma: (f64, f64), depth_sigma: f64) -> PoseGraph<Pose3> {
        let cfg = SimConfig {
            layout: Layout::Ring { radius: 3.0, n: 12 },
            odo_sigma: sigma,
            depth_sigma,
            loop_radius: 2.0,
            seed,
            ..SimConfig::default()
        };
        generate::<Pose3>(&cfg).unwrap().graph
    }

    #[test]
    fn noiseless_graph_is_a_fixed_point() {
        let g = spatial(4, (0.0, 0.0), 0.0);
        let (v, rep) = run_pipeline(&g, &PipelineConfig::default()).unwrap();
        for r in &rep.stages {
            assert!(r.chi2 < 1e-9 && r.oc_log < 1e-9, "{r:?}");
        }
        for (a, b) in v.poses.iter().zip(&g.initial().poses) {
            assert!(a.between(b).log().amax() < 1e-9);
        }
    }

    #[test]
    fn zero_budget_never_worse_than_stage_one() {
        let g = spatial(5, (0.05, 0.02), 0.05);
        let cfg = PipelineConfig { refine_budget: 0, ..PipelineConfig::default() };
        let (_, rep) = run_pipeline(&g, &cfg).unwrap();
        assert_eq!(rep.refine.steps, 0);
        assert_eq!(rep.stage(Stage::Lift).chi2, rep.stage(Stage::SpatialSolve).chi2);
        assert!(rep.final_chi2 <= rep.stage(Stage::SpatialSolve).chi2);
    }

    #[test]
    fn null_policy_matches_stage_one() {
        let g = spatial(6, (0.05, 0.02), 0.05);
        let tight = SolveConfig { abs_tol: 1e-20, rel_tol: 1e-14, ..SolveConfig::default() };
        let cfg = PipelineConfig { policy: PolicySource::Null, solve: tight, final_solve: tight, ..PipelineConfig::default() };
        let (v, _) = run_pipeline(&g, &cfg).unwrap();
        let (v1, _) = levenberg_marquardt(&g, &cfg.solve).unwrap();
        for (a, b) in v.poses.iter().zip(&v1.poses) {
            let d = a.between(b).log().amax();
            assert!(d < 1e-9, "{d}");
        }
    }

    #[test]
    fn lift_carries_out_of_plane_components() {
        let g = spatial(7, (0.05, 0.02), 0.05);
        let v1 = g.initial();
        let proj: Vec<PlanarProjection> = v1.poses.iter().map(|p| project_se3_to_se2(p).unwrap()).collect();
        let mut planar = planar_values(&proj, &v1.log_scales);
        for (k, p) in planar.poses.iter_mut().enumerate() {
            *p = Pose2::new(p.x + 0.1 * k as f64, p.y - 0.2, p.theta() + 0.3);
        }
        let lifted = lift_values(&planar, &proj, &v1.log_scales);
        for (l, s) in lifted.poses.iter().zip(&proj) {
            assert_eq!(l.translation.z.to_bits(), s.z.to_bits());
            let back = project_se3_to_se2(l).unwrap();
            assert!((back.roll - s.roll).abs() < 1e-12 && (back.pitch - s.pitch).abs() < 1e-12);
        }
    }

    #[test]
    fn planar_graph_drops_priors() {
        let g = spatial(8, (0.05, 0.02), 0.05);
        let g2 = project_graph(&g, g.initial()).unwrap();
        let binary = g.factors().iter().filter(|f| f.kind().is_binary()).count();
        assert_eq!(g2.factors().len(), binary);
        assert!(g2.gauge_fixed());
    }

    #[test]
    fn report_lists_every_stage() {
        let g = spatial(9, (0.05, 0.02), 0.05);
        let (_, rep) = run_pipeline(&g, &PipelineConfig::default()).unwrap();
        let kv = rep.to_key_value();
        for s in Stage::ALL {
            assert!(kv.contains(&format!("{}.chi2=", s.key())));
            assert!(kv.contains(&format!("{}.oc_log=", s.key())));
        }
    }
}
