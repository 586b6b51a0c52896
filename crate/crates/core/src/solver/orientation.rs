//! Log-weighted orientation cost over planar graphs.
//!
//! ```text
//! OC_log = sqrt( Σ_(i,j) w_ij ‖R_i R_ij − R_j‖²_F )
//! w_ij   = max(clamp_floor, 1 + β·log(‖t_ij‖ / t̄ + ε))
//! ```
//!
//! `R_ij` and `t_ij` are the measured relative rotation and translation,
//! `t̄` the mean measured translation norm over the selected edges. With
//! `β = 0` every weight is one and the cost reduces to the uniform chordal
//! form.

use nalgebra::Matrix2;

use crate::error::SolveError;
use crate::graph::{FactorKind, PoseGraph, Values};
use crate::lie::{Pose2, Rot2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightingParams {
    pub beta: f64,
    pub epsilon: f64,
    pub clamp_floor: f64,
}

impl Default for WeightingParams {
    fn default() -> Self {
        Self { beta: 0.0, epsilon: 1e-6, clamp_floor: 0.0 }
    }
}

impl WeightingParams {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }
}

/// Which binary factors enter the sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EdgeSubset {
    #[default]
    All,
    LoopClosuresOnly,
}

impl EdgeSubset {
    fn admits(self, kind: FactorKind) -> bool {
        match self {
            EdgeSubset::All => kind.is_binary(),
            EdgeSubset::LoopClosuresOnly => kind == FactorKind::LoopClosure,
        }
    }
}

/// `‖R_i R_ij − R_j‖²_F` on 2×2 rotation matrices.
pub fn chordal_rotation_error(ri: &Rot2, rij: &Rot2, rj: &Rot2) -> f64 {
    let d: Matrix2<f64> = ri.matrix() * rij.matrix() - rj.matrix();
    d.norm_squared()
}

/// `(factor index, w_ij)` for every selected edge.
pub fn edge_weights(
    g: &PoseGraph<Pose2>,
    w: &WeightingParams,
    subset: EdgeSubset,
) -> Result<Vec<(usize, f64)>, SolveError> {
    let edges: Vec<(usize, f64)> = g
        .factors()
        .iter()
        .enumerate()
        .filter(|(_, f)| subset.admits(f.kind()))
        .map(|(k, f)| (k, f.measurement().expect("binary factor").translation().norm()))
        .collect();
    if edges.is_empty() {
        return Err(SolveError::EmptyEdgeSet);
    }
    let mean = edges.iter().map(|(_, t)| t).sum::<f64>() / edges.len() as f64;
    if !(mean > 0.0) {
        return Err(SolveError::AllZeroTranslations);
    }
    Ok(edges
        .into_iter()
        .map(|(k, t)| (k, (1.0 + w.beta * (t / mean + w.epsilon).ln()).max(w.clamp_floor)))
        .collect())
}

pub fn orientation_cost_log_subset(
    g: &PoseGraph<Pose2>,
    values: &Values<Pose2>,
    w: &WeightingParams,
    subset: EdgeSubset,
) -> Result<f64, SolveError> {
    g.check_values(values)?;
    let weights = edge_weights(g, w, subset)?;
    let total: f64 = weights
        .iter()
        .map(|&(k, wij)| {
            let f = &g.factors()[k];
            let (i, j) = f.pose_pair().expect("binary factor");
            let rij = f.measurement().expect("binary factor").rot;
            wij * chordal_rotation_error(&values.poses[i].rot, &rij, &values.poses[j].rot)
        })
        .sum();
    Ok(total.max(0.0).sqrt())
}

/// Log-weighted orientation cost over all binary edges.
pub fn orientation_cost_log(g: &PoseGraph<Pose2>, values: &Values<Pose2>, w: &WeightingParams) -> Result<f64, SolveError> {
    orientation_cost_log_subset(g, values, w, EdgeSubset::All)
}
