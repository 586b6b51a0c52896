//! Normal-equation assembly and the sparse linear solve.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rayon::prelude::*;

use super::{RobustKernel, VariableOrdering};
use crate::error::SolveError;
use crate::graph::{Linearization, PoseGraph, Values, VariableId, VariableKind};
use crate::lie::LieGroup;

/// Maps variables to their column offset in the stacked tangent vector.
#[derive(Clone, Debug)]
pub struct StateLayout {
    pose_dof: usize,
    pose_offsets: Vec<usize>,
    scale_offsets: Vec<usize>,
    fixed_pose: Option<usize>,
    dim: usize,
}

impl StateLayout {
    pub fn new<P: LieGroup>(g: &PoseGraph<P>, ordering: VariableOrdering) -> Self {
        let n = g.num_poses();
        let m = g.num_scales();
        let order: Vec<VariableId> = match ordering {
            VariableOrdering::Natural => (0..n)
                .map(|index| pose_var::<P>(index))
                .chain((0..m).map(|index| VariableId { index, kind: VariableKind::Scale }))
                .collect(),
            VariableOrdering::MinimumDegree => minimum_degree_order(g),
        };
        let mut pose_offsets = vec![0; n];
        let mut scale_offsets = vec![0; m];
        let mut next = 0;
        for id in order {
            match id.kind {
                VariableKind::Scale => {
                    scale_offsets[id.index] = next;
                    next += 1;
                }
                _ => {
                    pose_offsets[id.index] = next;
                    next += P::DOF;
                }
            }
        }
        let fixed_pose = (g.gauge_fixed() && n > 0).then_some(0);
        Self { pose_dof: P::DOF, pose_offsets, scale_offsets, fixed_pose, dim: next }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self, id: VariableId) -> (usize, usize) {
        match id.kind {
            VariableKind::Scale => (self.scale_offsets[id.index], 1),
            _ => (self.pose_offsets[id.index], self.pose_dof),
        }
    }

    fn is_fixed(&self, id: VariableId) -> bool {
        id.kind != VariableKind::Scale && self.fixed_pose == Some(id.index)
    }

    /// Applies a stacked tangent step to every variable.
    pub fn retract<P: LieGroup>(&self, values: &Values<P>, delta: &DVector<f64>) -> Values<P> {
        let poses = values
            .poses
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let off = self.pose_offsets[i];
                p.retract(&delta.rows(off, P::DOF).into_owned())
            })
            .collect();
        let log_scales =
            values.log_scales.iter().enumerate().map(|(i, s)| s + delta[self.scale_offsets[i]]).collect();
        Values { poses, log_scales }
    }
}

fn pose_var<P: LieGroup>(index: usize) -> VariableId {
    let kind = if P::DOF == 3 { VariableKind::Pose2 } else { VariableKind::Pose3 };
    VariableId { index, kind }
}

/// Greedy minimum-degree elimination order on the variable adjacency graph.
fn minimum_degree_order<P: LieGroup>(g: &PoseGraph<P>) -> Vec<VariableId> {
    let n = g.num_poses();
    let total = n + g.num_scales();
    let node = |id: VariableId| if id.kind == VariableKind::Scale { n + id.index } else { id.index };
    let mut adj: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); total];
    for f in g.factors() {
        let ends: Vec<usize> = f.endpoints().into_iter().map(node).collect();
        for &a in &ends {
            for &b in &ends {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let mut eliminated = vec![false; total];
    let mut order = Vec::with_capacity(total);
    for _ in 0..total {
        let v = (0..total)
            .filter(|&v| !eliminated[v])
            .min_by_key(|&v| (adj[v].len(), v))
            .expect("remaining node");
        eliminated[v] = true;
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for &a in &nbrs {
            adj[a].remove(&v);
            for &b in &nbrs {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        order.push(if v < n { pose_var::<P>(v) } else { VariableId { index: v - n, kind: VariableKind::Scale } });
    }
    order
}

/// `H = Σ wJᵀΛJ`, `b = Σ wJᵀΛr` and the (robust) cost at the linearization point.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    pub dim: usize,
    triplets: Vec<(usize, usize, f64)>,
    pub b: DVector<f64>,
    pub cost: f64,
}

/// Robust cost of one squared Mahalanobis residual and its IRLS weight.
pub(crate) fn robust_cost(kernel: RobustKernel, e2: f64) -> (f64, f64) {
    match kernel {
        RobustKernel::None => (e2, 1.0),
        RobustKernel::Huber { delta } => {
            let e = e2.sqrt();
            if e <= delta {
                (e2, 1.0)
            } else {
                (2.0 * delta * e - delta * delta, delta / e)
            }
        }
    }
}

impl NormalEquations {
    pub fn assemble<P: LieGroup>(
        g: &PoseGraph<P>,
        values: &Values<P>,
        layout: &StateLayout,
        kernel: RobustKernel,
    ) -> Result<Self, SolveError> {
        g.check_values(values)?;
        let lins: Vec<Linearization> =
            g.factors().par_iter().map(|f| f.linearize(values)).collect::<Result<_, _>>()?;
        let dim = layout.dim();
        let mut triplets = Vec::new();
        let mut b = DVector::zeros(dim);
        let mut cost = 0.0;
        for (f, lin) in g.factors().iter().zip(&lins) {
            let info = f.info();
            let lam = info.matrix();
            let lr = lam * &lin.residual;
            let e2 = lin.residual.dot(&lr);
            let (rho, w) = robust_cost(kernel, e2);
            cost += rho;
            let blocks: Vec<(usize, usize, &DMatrix<f64>)> = lin
                .blocks
                .iter()
                .filter(|(id, _)| !layout.is_fixed(*id))
                .map(|(id, j)| {
                    let (off, d) = layout.offset(*id);
                    (off, d, j)
                })
                .collect();
            for &(oa, da, ja) in &blocks {
                let jt_lam = ja.transpose() * lam * w;
                let gb = &jt_lam * &lin.residual;
                for r in 0..da {
                    b[oa + r] += gb[r];
                }
                for &(ob, db, jb) in &blocks {
                    let hab = &jt_lam * jb;
                    for r in 0..da {
                        for c in 0..db {
                            triplets.push((oa + r, ob + c, hab[(r, c)]));
                        }
                    }
                }
            }
        }
        if let Some(i) = layout.fixed_pose {
            let (off, d) = layout.offset(pose_var::<P>(i));
            for k in 0..d {
                triplets.push((off + k, off + k, 1.0));
            }
        }
        Ok(Self { dim, triplets, b, cost })
    }

    fn diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.dim);
        for &(r, c, v) in &self.triplets {
            if r == c {
                d[r] += v;
            }
        }
        d
    }

    fn to_csc(&self, damping: f64) -> CscMatrix<f64> {
        let mut coo = CooMatrix::new(self.dim, self.dim);
        for &(r, c, v) in &self.triplets {
            coo.push(r, c, v);
        }
        // keep every diagonal entry structurally present
        let diag = self.diagonal();
        for i in 0..self.dim {
            coo.push(i, i, damping * diag[i].max(1e-12));
        }
        CscMatrix::from(&coo)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.triplets {
            h[(r, c)] += v;
        }
        h
    }

    /// Solves `(H + λ·diag(H)) δ = −b` by sparse Cholesky.
    pub fn solve(&self, lambda: f64) -> Result<DVector<f64>, SolveError> {
        if self.dim == 0 {
            return Ok(DVector::zeros(0));
        }
        let h = self.to_csc(lambda);
        let chol = CscCholesky::factor(&h).map_err(|_| SolveError::SingularHessian)?;
        // a tiny positive pivot means H was numerically rank deficient
        let diag = self.diagonal();
        for k in 0..self.dim {
            let col = chol.l().col(k);
            let pivot = col.values().first().copied().unwrap_or(0.0);
            if pivot * pivot <= 1e-13 * diag[k].abs().max(1e-300) {
                return Err(SolveError::SingularHessian);
            }
        }
        let x = chol.solve(&(-&self.b));
        let delta = DVector::from_column_slice(x.as_slice());
        if delta.iter().all(|v| v.is_finite()) {
            Ok(delta)
        } else {
            Err(SolveError::SingularHessian)
        }
    }
}
