//! Pose-graph optimization toolkit for underwater navigation.
//!
//! The crate bundles a factor-graph back-end with underwater-specific
//! factors, sparse Gauss-Newton / Levenberg-Marquardt solvers, an episodic
//! SE(2) refinement environment driven by a log-weighted orientation cost,
//! a physical underwater radiance model, a trajectory simulator, file I/O
//! and trajectory metrics.

// negated float comparisons reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod io;
pub mod lie;
pub mod metrics;
pub mod pipeline;
pub mod radiance;
pub mod rl_refine;
pub mod sim;
pub mod solver;
