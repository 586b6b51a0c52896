//! Message-passing edge encoder.
//!
//! ```text
//! h⁰_e   = W f_e + b
//! hᵏ⁺¹_e = tanh(A hᵏ_e + B·mean_{e' ~ e} hᵏ_e' + c)
//! pooled = mean_e hᴷ_e
//! ```
//!
//! `e' ~ e` ranges over the other edges sharing an endpoint with `e`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EdgeFeature;

pub const DEFAULT_DIM: usize = 16;
pub const DEFAULT_ROUNDS: usize = 3;
/// Seed of the encoder shared by shipped policies and policy files.
pub const DEFAULT_ENCODER_SEED: u64 = 0x4d52_5650;

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub rounds: usize,
    pub w_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub per_edge: Vec<DVector<f64>>,
    pub pooled: DVector<f64>,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::seeded(DEFAULT_ENCODER_SEED, DEFAULT_DIM, DEFAULT_ROUNDS)
    }
}

impl Encoder {
    pub fn zeros(dim: usize, rounds: usize) -> Self {
        Self {
            rounds,
            w_in: DMatrix::zeros(dim, EdgeFeature::LEN),
            b_in: DVector::zeros(dim),
            a: DMatrix::zeros(dim, dim),
            b: DMatrix::zeros(dim, dim),
            c: DVector::zeros(dim),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization.
    /// The fixed encoder for embeddings of size `dim`.
    pub fn for_dim(dim: usize) -> Self {
        Self::seeded(DEFAULT_ENCODER_SEED, dim, DEFAULT_ROUNDS)
    }

    pub fn seeded(seed: u64, dim: usize, rounds: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |r: usize, c: usize, fan_in: usize| {
            let k = 1.0 / (fan_in as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-k..=k))
        };
        let w_in = fill(dim, EdgeFeature::LEN, EdgeFeature::LEN);
        let b_in = fill(dim, 1, EdgeFeature::LEN).column(0).into_owned();
        let a = fill(dim, dim, dim);
        let b = fill(dim, dim, dim);
        let c = fill(dim, 1, dim).column(0).into_owned();
        Self { rounds, w_in, b_in, a, b, c }
    }

    pub fn dim(&self) -> usize {
        self.b_in.len()
    }

    /// `endpoints[e]` are the pose indices of edge `e`.
    pub fn encode(&self, features: &[EdgeFeature], endpoints: &[(usize, usize)]) -> Embeddings {
        assert_eq!(features.len(), endpoints.len(), "one feature per edge");
        let n = features.len();
        let mut h: Vec<DVector<f64>> =
            features.iter().map(|f| &self.w_in * DVector::from_column_slice(&f.to_array()) + &self.b_in).collect();
        let nbrs = neighbor_lists(endpoints);
        for _ in 0..self.rounds {
            let next: Vec<DVector<f64>> = (0..n)
                .map(|e| {
                    let mut agg = DVector::zeros(self.dim());
                    for &o in &nbrs[e] {
                        agg += &h[o];
                    }
                    if !nbrs[e].is_empty() {
                        agg /= nbrs[e].len() as f64;
                    }
                    (&self.a * &h[e] + &self.b * agg + &self.c).map(f64::tanh)
                })
                .collect();
            h = next;
        }
        let mut pooled = DVector::zeros(self.dim());
        for v in &h {
            pooled += v;
        }
        if n > 0 {
            pooled /= n as f64;
        }
        Embeddings { per_edge: h, pooled }
    }
}

/// Other edges sharing at least one endpoint, each listed once.
fn neighbor_lists(endpoints: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let poses = endpoints.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
    let mut incident = vec![Vec::new(); poses];
    for (e, &(i, j)) in endpoints.iter().enumerate() {
        incident[i].push(e);
        if j != i {
            incident[j].push(e);
        }
    }
    endpoints
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let mut v: Vec<usize> = incident[i].iter().chain(&incident[j]).copied().filter(|&o| o != e).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(r: f64, t: f64, l: bool) -> EdgeFeature {
        EdgeFeature { rot_residual: r, trans_residual: t, weight: 1.0, is_loop_closure: l }
    }

    #[test]
    fn zero_params_zero_output() {
        let e = Encoder::zeros(8, 3);
        let out = e.encode(&[feat(0.0, 0.0, false), feat(0.0, 0.0, true)], &[(0, 1), (1, 2)]);
        assert!(out.pooled.iter().all(|v| *v == 0.0));
        assert!(out.per_edge.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_rounds_is_linear() {
        let mut e = Encoder::seeded(1, 4, 0);
        let f = feat(0.3, 0.2, true);
        let out = e.encode(&[f, feat(0.1, 0.0, false)], &[(0, 1), (1, 2)]);
        let expect = &e.w_in * DVector::from_column_slice(&f.to_array()) + &e.b_in;
        assert_eq!(out.per_edge[0], expect);
        e.rounds = 1;
        assert_ne!(e.encode(&[f, feat(0.1, 0.0, false)], &[(0, 1), (1, 2)]).per_edge[0], expect);
    }

    #[test]
    fn neighbors_exclude_self() {
        let n = neighbor_lists(&[(0, 1), (1, 2), (0, 2), (3, 4)]);
        assert_eq!(n, vec![vec![1, 2], vec![0, 2], vec![0, 1], vec![]]);
    }
}
