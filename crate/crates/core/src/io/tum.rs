//! TUM trajectories: `timestamp x y z qx qy qz qw` per line.

use nalgebra::Vector3;

use super::g2o::fmt_f64;
use crate::error::IoError;
use crate::lie::{Pose3, Rot3};

/// Quaternions must have unit norm within this tolerance.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TumRow {
    pub t: f64,
    pub xyz: [f64; 3],
    /// `(qx, qy, qz, qw)`.
    pub q: [f64; 4],
}

impl TumRow {
    pub fn from_pose(t: f64, p: &Pose3) -> Self {
        let [w, x, y, z] = p.rot.wxyz();
        Self { t, xyz: p.translation.into(), q: [x, y, z, w] }
    }

    pub fn pose(&self) -> Pose3 {
        let q = self.q;
        Pose3::new(Vector3::from(self.xyz), Rot3::from_wxyz(q[3], q[0], q[1], q[2]))
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TumTrajectory {
    pub rows: Vec<TumRow>,
}

impl TumTrajectory {
    /// Rows at timestamps `0, 1, 2, …`.
    pub fn from_poses(poses: &[Pose3]) -> Self {
        Self { rows: poses.iter().enumerate().map(|(k, p)| TumRow::from_pose(k as f64, p)).collect() }
    }

    pub fn poses(&self) -> Vec<Pose3> {
        self.rows.iter().map(TumRow::pose).collect()
    }
}

pub fn parse_tum(text: &str) -> Result<TumTrajectory, IoError> {
    let mut rows: Vec<TumRow> = Vec::new();
    for (k, raw) in text.split('\n').enumerate() {
        let line = k + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let err = |reason: String| IoError::MalformedRecord { line, reason };
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() != 8 {
            return Err(err(format!("expected 8 columns, found {}", toks.len())));
        }
        let mut v = [0.0f64; 8];
        for (dst, tok) in v.iter_mut().zip(&toks) {
            *dst = tok.parse().map_err(|_| err(format!("non-numeric token '{tok}'")))?;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        let row = TumRow { t: v[0], xyz: [v[1], v[2], v[3]], q: [v[4], v[5], v[6], v[7]] };
        let norm = row.q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(err(format!("quaternion norm {norm} is not unit")));
        }
        if let Some(prev) = rows.last() {
            if !(row.t > prev.t) {
                return Err(err(format!("timestamp {} does not increase", row.t)));
            }
        }
        rows.push(row);
    }
    Ok(TumTrajectory { rows })
}

pub fn write_tum(traj: &TumTrajectory) -> String {
    let mut out = String::new();
    for r in &traj.rows {
        let vals = [r.t, r.xyz[0], r.xyz[1], r.xyz[2], r.q[0], r.q[1], r.q[2], r.q[3]];
        out.push_str(&vals.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "));
        out.push('\n');
    }
    out
}
