//! Interchange formats: g2o pose graphs, TUM trajectories, PFM/PPM images.
//!
//! Text formats are written with `\n` line endings and accept `\r\n`.

pub mod g2o;
pub mod pfm;
pub mod tum;

pub use g2o::{
    document_dof, from_pose_graph, parse_g2o, parse_g2o_bytes, to_pose_graph, write_g2o, G2oDocument, G2oPose,
    ImportedGraph, Record, Vertex,
};
pub use pfm::{read_pfm, read_ppm_preview, write_pfm, write_ppm_preview, PfmImage};
pub use tum::{parse_tum, write_tum, TumRow, TumTrajectory};
