use nalgebra::{DMatrix, DVector, Vector3};
use std::borrow::Cow;

use super::{InfoMatrix, MatchStats, Values, VariableId, VariableKind};
use crate::error::GraphError;
use crate::lie::LieGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FactorKind {
    Odometry,
    LoopClosure,
    DepthPrior,
    VisualScaled,
    AnchorPrior,
}

impl FactorKind {
    pub fn is_binary(self) -> bool {
        matches!(self, FactorKind::Odometry | FactorKind::LoopClosure | FactorKind::VisualScaled)
    }

    pub fn name(self) -> &'static str {
        match self {
            FactorKind::Odometry => "odometry",
            FactorKind::LoopClosure => "loop_closure",
            FactorKind::DepthPrior => "depth_prior",
            FactorKind::VisualScaled => "visual_scaled",
            FactorKind::AnchorPrior => "anchor_prior",
        }
    }
}

/// A weighted constraint on one or two poses.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor<P> {
    Odometry { from: usize, to: usize, measured: P, info: InfoMatrix },
    LoopClosure { from: usize, to: usize, measured: P, info: InfoMatrix },
    /// Pins the depth-like coordinate (`z`, or `y` in planar graphs).
    DepthPrior { pose: usize, depth: f64, sigma: f64 },
    /// Relative pose whose translation is known only up to the co-estimated
    /// scale variable `scale`.
    VisualScaled {
        from: usize,
        to: usize,
        measured: P,
        scale: usize,
        info: InfoMatrix,
        stats: Option<MatchStats>,
    },
    AnchorPrior { pose: usize, prior: P, info: InfoMatrix },
}

/// Residual and per-variable Jacobian blocks of one factor.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub blocks: Vec<(VariableId, DMatrix<f64>)>,
}

fn pose_id<P: LieGroup>(index: usize) -> VariableId {
    let kind = if P::DOF == 3 { VariableKind::Pose2 } else { VariableKind::Pose3 };
    VariableId { index, kind }
}

/// Tangent vector that translates by `t` (rotation part zero).
fn translation_tangent<P: LieGroup>(t: &Vector3<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(P::DOF);
    let n = if P::DOF == 3 { 2 } else { 3 };
    for k in 0..n {
        v[k] = t[k];
    }
    v
}

impl<P: LieGroup> Factor<P> {
    pub fn kind(&self) -> FactorKind {
        match self {
            Factor::Odometry { .. } => FactorKind::Odometry,
            Factor::LoopClosure { .. } => FactorKind::LoopClosure,
            Factor::DepthPrior { .. } => FactorKind::DepthPrior,
            Factor::VisualScaled { .. } => FactorKind::VisualScaled,
            Factor::AnchorPrior { .. } => FactorKind::AnchorPrior,
        }
    }

    pub fn info(&self) -> Cow<'_, InfoMatrix> {
        match self {
            Factor::Odometry { info, .. }
            | Factor::LoopClosure { info, .. }
            | Factor::VisualScaled { info, .. }
            | Factor::AnchorPrior { info, .. } => Cow::Borrowed(info),
            Factor::DepthPrior { sigma, .. } => Cow::Owned(InfoMatrix::identity(1).scaled(1.0 / (sigma * sigma))),
        }
    }

    pub fn residual_dim(&self) -> usize {
        match self {
            Factor::DepthPrior { .. } => 1,
            _ => P::DOF,
        }
    }

    /// `(from, to)` for binary factors.
    pub fn pose_pair(&self) -> Option<(usize, usize)> {
        match *self {
            Factor::Odometry { from, to, .. }
            | Factor::LoopClosure { from, to, .. }
            | Factor::VisualScaled { from, to, .. } => Some((from, to)),
            _ => None,
        }
    }

    /// Measured relative pose for binary factors (unscaled for visual ones).
    pub fn measurement(&self) -> Option<&P> {
        match self {
            Factor::Odometry { measured, .. }
            | Factor::LoopClosure { measured, .. }
            | Factor::VisualScaled { measured, .. } => Some(measured),
            _ => None,
        }
    }

    pub fn endpoints(&self) -> Vec<VariableId> {
        match *self {
            Factor::Odometry { from, to, .. } | Factor::LoopClosure { from, to, .. } => {
                vec![pose_id::<P>(from), pose_id::<P>(to)]
            }
            Factor::VisualScaled { from, to, scale, .. } => vec![
                pose_id::<P>(from),
                pose_id::<P>(to),
                VariableId { index: scale, kind: VariableKind::Scale },
            ],
            Factor::DepthPrior { pose, .. } | Factor::AnchorPrior { pose, .. } => vec![pose_id::<P>(pose)],
        }
    }

    fn pose(values: &Values<P>, i: usize) -> Result<&P, GraphError> {
        values.poses.get(i).ok_or(GraphError::MissingVariable(pose_id::<P>(i)))
    }

    fn log_scale(values: &Values<P>, i: usize) -> Result<f64, GraphError> {
        values
            .log_scales
            .get(i)
            .copied()
            .ok_or(GraphError::MissingVariable(VariableId { index: i, kind: VariableKind::Scale }))
    }

    /// Measurement actually compared against for the current values.
    fn effective_measurement(&self, values: &Values<P>) -> Result<Option<P>, GraphError> {
        Ok(match self {
            Factor::Odometry { measured, .. } | Factor::LoopClosure { measured, .. } => Some(measured.clone()),
            Factor::VisualScaled { measured, scale, .. } => {
                Some(measured.scale_translation(Self::log_scale(values, *scale)?.exp()))
            }
            _ => None,
        })
    }

    pub fn residual(&self, values: &Values<P>) -> Result<DVector<f64>, GraphError> {
        match self {
            Factor::DepthPrior { pose, depth, .. } => {
                Ok(DVector::from_element(1, Self::pose(values, *pose)?.height() - depth))
            }
            Factor::AnchorPrior { pose, prior, .. } => Ok(prior.between(Self::pose(values, *pose)?).log()),
            _ => {
                let (from, to) = self.pose_pair().expect("binary factor");
                let z = self.effective_measurement(values)?.expect("binary factor");
                let rel = Self::pose(values, from)?.between(Self::pose(values, to)?);
                Ok(z.between(&rel).log())
            }
        }
    }

    /// Analytic Jacobians with respect to right perturbations of each pose
    /// and, for visual factors, the log-scale.
    pub fn linearize(&self, values: &Values<P>) -> Result<Linearization, GraphError> {
        match self {
            Factor::DepthPrior { pose, depth, .. } => {
                let x = Self::pose(values, *pose)?;
                let residual = DVector::from_element(1, x.height() - depth);
                let j = DMatrix::from_row_slice(1, P::DOF, x.height_jacobian().as_slice());
                Ok(Linearization { residual, blocks: vec![(pose_id::<P>(*pose), j)] })
            }
            Factor::AnchorPrior { pose, prior, .. } => {
                let x = Self::pose(values, *pose)?;
                let residual = prior.between(x).log();
                let j = P::right_jacobian_inv(&residual);
                Ok(Linearization { residual, blocks: vec![(pose_id::<P>(*pose), j)] })
            }
            _ => {
                let (from, to) = self.pose_pair().expect("binary factor");
                let z = self.effective_measurement(values)?.expect("binary factor");
                let xi = Self::pose(values, from)?;
                let xj = Self::pose(values, to)?;
                let rel = xi.between(xj);
                let err = z.between(&rel);
                let residual = err.log();
                let jr_inv = P::right_jacobian_inv(&residual);
                let j_from = -(&jr_inv * rel.inverse().adjoint());
                let mut blocks = vec![(pose_id::<P>(from), j_from), (pose_id::<P>(to), jr_inv.clone())];
                if let Factor::VisualScaled { scale, .. } = self {
                    // d/dlog(s): Z(s e^δ)⁻¹ = Exp(-u δ) Z(s)⁻¹ with u the measured
                    // translation expressed in Z's frame.
                    let u = translation_tangent::<P>(&(-z.inverse().translation3()));
                    let j_s = -(&jr_inv * err.inverse().adjoint() * u);
                    blocks.push((VariableId { index: *scale, kind: VariableKind::Scale }, DMatrix::from_column_slice(P::DOF, 1, j_s.as_slice())));
                }
                Ok(Linearization { residual, blocks })
            }
        }
    }

    /// `rᵀ Λ r` for this factor.
    pub fn chi2(&self, values: &Values<P>) -> Result<f64, GraphError> {
        let r = self.residual(values)?;
        let info = self.info();
        Ok((r.transpose() * info.matrix() * &r)[(0, 0)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{Pose2, Pose3};

    fn p3(v: [f64; 6]) -> Pose3 {
        Pose3::exp(&DVector::from_column_slice(&v))
    }

    #[test]
    fn scaled_residual_zero_for_scaled_truth() {
        let xi = p3([0.5, -0.3, 1.0, 0.1, 0.2, -0.3]);
        let t = p3([0.4, 0.2, -0.1, 0.05, -0.1, 0.2]);
        // actual relative translation is 2× the measured one
        let xj = xi.compose(&t.scale_translation(2.0));
        let values = Values { poses: vec![xi, xj], log_scales: vec![2f64.ln()] };
        let f = Factor::VisualScaled {
            from: 0,
            to: 1,
            measured: t,
            scale: 0,
            info: InfoMatrix::identity(6),
            stats: None,
        };
        assert!(f.residual(&values).unwrap().norm() < 1e-12);
        let wrong = Values { poses: values.poses.clone(), log_scales: vec![0.0] };
        assert!(f.residual(&wrong).unwrap().norm() > 0.1);
    }

    #[test]
    fn missing_variable_is_reported() {
        let f: Factor<Pose2> = Factor::DepthPrior { pose: 3, depth: 1.0, sigma: 1.0 };
        let values = Values { poses: vec![Pose2::identity()], log_scales: vec![] };
        assert!(matches!(f.residual(&values), Err(GraphError::MissingVariable(_))));
    }

    #[test]
    fn anchor_jacobian_is_identity_at_prior() {
        let prior = Pose2::new(1.0, -2.0, 0.4);
        let f = Factor::AnchorPrior { pose: 0, prior, info: InfoMatrix::identity(3) };
        let lin = f.linearize(&Values { poses: vec![prior], log_scales: vec![] }).unwrap();
        assert!((&lin.blocks[0].1 - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-15);
    }

    #[test]
    fn depth_jacobian_selects_vertical_axis() {
        let f = Factor::DepthPrior { pose: 0, depth: 5.0, sigma: 0.1 };
        let lin = f.linearize(&Values { poses: vec![Pose3::from_translation(1.0, 2.0, 5.0)], log_scales: vec![] }).unwrap();
        assert_eq!(lin.residual[0], 0.0);
        assert_eq!(lin.blocks[0].1.as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let f2 = Factor::DepthPrior { pose: 0, depth: 5.0, sigma: 0.1 };
        let lin2 = f2.linearize(&Values { poses: vec![Pose2::new(0.0, 5.0, 0.0)], log_scales: vec![] }).unwrap();
        assert_eq!(lin2.blocks[0].1.as_slice(), &[0.0, 1.0, 0.0]);
    }
}
