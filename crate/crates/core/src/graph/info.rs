use nalgebra::DMatrix;

use crate::error::GraphError;

/// Reference inlier count at which the adaptive rule leaves the base
/// information unchanged.
pub const REFERENCE_INLIERS: f64 = 100.0;
/// Reference image coverage for the adaptive rule.
pub const REFERENCE_COVERAGE: f64 = 0.25;
/// Upper clamp on the inlier-count gain.
pub const MAX_INLIER_GAIN: f64 = 4.0;

/// Symmetric positive semi-definite information (inverse covariance) matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoMatrix(DMatrix<f64>);

impl InfoMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, GraphError> {
        if !m.is_square() {
            return Err(GraphError::InvalidInfo(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::InvalidInfo("non-finite entry".into()));
        }
        let asym = (&m - m.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(GraphError::InvalidInfo(format!("asymmetric by {asym:e}")));
        }
        let n = m.nrows();
        let shifted = &m + DMatrix::identity(n, n) * 1e-12;
        if shifted.cholesky().is_none() {
            return Err(GraphError::InvalidInfo("not positive semi-definite".into()));
        }
        Ok(Self(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    /// Diagonal information from per-axis standard deviations.
    pub fn from_sigmas(sigmas: &[f64]) -> Result<Self, GraphError> {
        if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(GraphError::InvalidInfo("sigmas must be positive and finite".into()));
        }
        let diag: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
        Ok(Self(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(&self.0 * k)
    }
}

/// Match statistics attached to a visual factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchStats {
    inlier_count: u32,
    coverage: f64,
}

impl MatchStats {
    pub fn new(inlier_count: u32, coverage: f64) -> Result<Self, GraphError> {
        if inlier_count == 0 {
            return Err(GraphError::InvalidStats("inlier count must be at least 1".into()));
        }
        if !(coverage > 0.0 && coverage <= 1.0) {
            return Err(GraphError::InvalidStats(format!("coverage {coverage} outside (0, 1]")));
        }
        Ok(Self { inlier_count, coverage })
    }

    pub fn inlier_count(&self) -> u32 {
        self.inlier_count
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }
}

/// Scales the base information by match quality: linear in the inlier count
/// (clamped at [`MAX_INLIER_GAIN`]) and in the coverage (clamped at 1).
pub fn adaptive_info(base: &InfoMatrix, stats: &MatchStats) -> InfoMatrix {
    base.scaled(adaptive_gain(stats))
}

pub fn adaptive_gain(stats: &MatchStats) -> f64 {
    let inliers = (stats.inlier_count as f64 / REFERENCE_INLIERS).min(MAX_INLIER_GAIN);
    let coverage = (stats.coverage / REFERENCE_COVERAGE).min(1.0);
    inliers * coverage
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_matrices() {
        assert!(InfoMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(InfoMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        assert!(InfoMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(InfoMatrix::new(DMatrix::zeros(3, 3)).is_ok());
    }

    #[test]
    fn stats_validation() {
        assert!(MatchStats::new(0, 0.5).is_err());
        assert!(MatchStats::new(5, 0.0).is_err());
        assert!(MatchStats::new(5, 1.5).is_err());
        assert!(MatchStats::new(1, 1.0).is_ok());
    }

    #[test]
    fn adaptive_examples() {
        let base = InfoMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let unit = adaptive_info(&base, &MatchStats::new(100, 0.25).unwrap());
        assert_eq!(unit, base);
        let double = adaptive_info(&base, &MatchStats::new(200, 0.25).unwrap());
        assert_eq!(double.matrix(), &(base.matrix() * 2.0));
        let clamped = adaptive_info(&base, &MatchStats::new(1_000_000, 1.0).unwrap());
        assert_eq!(clamped.matrix(), &(base.matrix() * 4.0));
    }

    proptest! {
        #[test]
        fn adaptive_gain_is_monotone(n in 1u32..2000, dn in 0u32..500, c in 0.001f64..1.0, dc in 0.0f64..1.0) {
            let c2 = (c + dc).min(1.0);
            let g = adaptive_gain(&MatchStats::new(n, c).unwrap());
            prop_assert!(adaptive_gain(&MatchStats::new(n + dn, c).unwrap()) >= g);
            prop_assert!(adaptive_gain(&MatchStats::new(n, c2).unwrap()) >= g);
            let base = InfoMatrix::identity(3);
            prop_assert!(InfoMatrix::new(adaptive_info(&base, &MatchStats::new(n, c).unwrap()).into_inner()).is_ok());
        }
    }
}
