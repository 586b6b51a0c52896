//! g2o text format with comment-prefixed extension records.
//!
//! ```text
//! VERTEX_SE2 id x y θ
//! EDGE_SE2 i j dx dy dθ  I11 I12 I13 I22 I23 I33
//! VERTEX_SE3:QUAT id x y z qx qy qz qw
//! EDGE_SE3:QUAT i j x y z qx qy qz qw  <21 upper-triangular info entries>
//! FIX id
//! # MARVO DEPTH_PRIOR id z sigma
//! # MARVO SCALE_EDGE i j s0 [inliers coverage]
//! # MARVO ANCHOR_PRIOR id <vertex payload> <upper-triangular info>
//! ```
//!
//! `SCALE_EDGE` applies to the edge record directly after it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Vector3};

use crate::error::IoError;
use crate::graph::{Factor, InfoMatrix, MatchStats, PoseGraph};
use crate::lie::{LieGroup, Pose2, Pose3, Rot3};

pub const EXT_PREFIX: &str = "# MARVO";

#[derive(Clone, Debug, PartialEq)]
pub enum Vertex {
    Se2 { x: f64, y: f64, theta: f64 },
    /// Translation and quaternion `(qx, qy, qz, qw)`.
    Se3 { t: [f64; 3], q: [f64; 4] },
}

impl Vertex {
    fn dof(&self) -> usize {
        match self {
            Vertex::Se2 { .. } => 3,
            Vertex::Se3 { .. } => 6,
        }
    }
}

/// Everything after the vertex block, in file order.
#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    EdgeSe2 { i: usize, j: usize, meas: [f64; 3], info: Vec<f64> },
    EdgeSe3 { i: usize, j: usize, t: [f64; 3], q: [f64; 4], info: Vec<f64> },
    Fix(usize),
    DepthPrior { id: usize, z: f64, sigma: f64 },
    ScaleEdge { i: usize, j: usize, s0: f64, stats: Option<(u32, f64)> },
    AnchorPrior { id: usize, prior: Vertex, info: Vec<f64> },
    Comment(String),
    /// Unrecognized tag, kept verbatim.
    Unknown(String),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct G2oDocument {
    pub vertices: BTreeMap<usize, Vertex>,
    pub records: Vec<Record>,
    pub warnings: Vec<String>,
}

impl G2oDocument {
    pub fn edge_count(&self) -> usize {
        self.records.iter().filter(|r| matches!(r, Record::EdgeSe2 { .. } | Record::EdgeSe3 { .. })).count()
    }
}

fn upper_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Symmetric matrix from its row-major upper triangle.
pub fn info_from_upper(dim: usize, upper: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for r in 0..dim {
        for c in r..dim {
            m[(r, c)] = upper[k];
            m[(c, r)] = upper[k];
            k += 1;
        }
    }
    m
}

pub fn info_to_upper(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(upper_len(n));
    for r in 0..n {
        for c in r..n {
            v.push(m[(r, c)]);
        }
    }
    v
}

struct Tokens<'a> {
    line: usize,
    items: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn err(&self, reason: impl Into<String>) -> IoError {
        IoError::MalformedRecord { line: self.line, reason: reason.into() }
    }

    fn expect_len(&self, tag: &str, n: usize) -> Result<(), IoError> {
        let have = self.items.len() - self.pos;
        if have != n {
            return Err(self.err(format!("{tag} expects {n} fields, found {have}")));
        }
        Ok(())
    }

    fn next_str(&mut self) -> Result<&'a str, IoError> {
        let s = self.items.get(self.pos).copied().ok_or_else(|| self.err("missing field"))?;
        self.pos += 1;
        Ok(s)
    }

    fn id(&mut self) -> Result<usize, IoError> {
        let s = self.next_str()?;
        s.parse().map_err(|_| self.err(format!("invalid id '{s}'")))
    }

    fn num(&mut self) -> Result<f64, IoError> {
        let s = self.next_str()?;
        s.parse().map_err(|_| self.err(format!("non-numeric token '{s}'")))
    }

    fn nums<const N: usize>(&mut self) -> Result<[f64; N], IoError> {
        let mut out = [0.0; N];
        for v in out.iter_mut() {
            *v = self.num()?;
        }
        Ok(out)
    }

    fn vec(&mut self, n: usize) -> Result<Vec<f64>, IoError> {
        (0..n).map(|_| self.num()).collect()
    }

    fn remaining(&self) -> usize {
        self.items.len() - self.pos
    }
}

fn parse_extension(t: &mut Tokens<'_>) -> Result<Record, IoError> {
    let tag = t.next_str()?;
    match tag {
        "DEPTH_PRIOR" => {
            t.expect_len(tag, 3)?;
            Ok(Record::DepthPrior { id: t.id()?, z: t.num()?, sigma: t.num()? })
        }
        "SCALE_EDGE" => {
            let n = t.remaining();
            if n != 3 && n != 5 {
                return Err(t.err(format!("SCALE_EDGE expects 3 or 5 fields, found {n}")));
            }
            let (i, j, s0) = (t.id()?, t.id()?, t.num()?);
            let stats = if n == 5 {
                let s = t.next_str()?;
                let inliers = s.parse().map_err(|_| t.err(format!("invalid inlier count '{s}'")))?;
                Some((inliers, t.num()?))
            } else {
                None
            };
            Ok(Record::ScaleEdge { i, j, s0, stats })
        }
        "ANCHOR_PRIOR" => {
            let n = t.remaining();
            let id = t.id()?;
            if n == 1 + 3 + upper_len(3) {
                let [x, y, theta] = t.nums()?;
                Ok(Record::AnchorPrior { id, prior: Vertex::Se2 { x, y, theta }, info: t.vec(upper_len(3))? })
            } else if n == 1 + 7 + upper_len(6) {
                let (tr, q) = (t.nums()?, t.nums()?);
                Ok(Record::AnchorPrior { id, prior: Vertex::Se3 { t: tr, q }, info: t.vec(upper_len(6))? })
            } else {
                Err(t.err(format!("ANCHOR_PRIOR has {n} fields, expected 10 or 29")))
            }
        }
        _ => Err(t.err(format!("unknown extension '{tag}'"))),
    }
}

/// Whitespace-tokenized line parser.
pub fn parse_g2o(text: &str) -> Result<G2oDocument, IoError> {
    let mut doc = G2oDocument::default();
    let mut refs: Vec<(usize, usize)> = Vec::new();
    let mut pending_scale: Option<(usize, usize, usize)> = None;
    for (k, raw) in text.split('\n').enumerate() {
        let line_no = k + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut t = Tokens { line: line_no, items: trimmed.split_whitespace().collect(), pos: 0 };
        let record = if trimmed.starts_with('#') {
            if t.items.first() == Some(&"#") && t.items.get(1) == Some(&"MARVO") {
                t.pos = 2;
                parse_extension(&mut t)?
            } else {
                Record::Comment(trimmed.to_string())
            }
        } else {
            let tag = t.next_str()?;
            match tag {
                "VERTEX_SE2" | "VERTEX_SE3:QUAT" => {
                    t.expect_len(tag, if tag == "VERTEX_SE2" { 4 } else { 8 })?;
                    let id = t.id()?;
                    let v = if tag == "VERTEX_SE2" {
                        let [x, y, theta] = t.nums()?;
                        Vertex::Se2 { x, y, theta }
                    } else {
                        Vertex::Se3 { t: t.nums()?, q: t.nums()? }
                    };
                    if doc.vertices.insert(id, v).is_some() {
                        return Err(t.err(format!("duplicate vertex id {id}")));
                    }
                    continue;
                }
                "EDGE_SE2" => {
                    t.expect_len(tag, 2 + 3 + upper_len(3))?;
                    Record::EdgeSe2 { i: t.id()?, j: t.id()?, meas: t.nums()?, info: t.vec(upper_len(3))? }
                }
                "EDGE_SE3:QUAT" => {
                    t.expect_len(tag, 2 + 7 + upper_len(6))?;
                    Record::EdgeSe3 { i: t.id()?, j: t.id()?, t: t.nums()?, q: t.nums()?, info: t.vec(upper_len(6))? }
                }
                "FIX" => {
                    t.expect_len(tag, 1)?;
                    Record::Fix(t.id()?)
                }
                _ => {
                    doc.warnings.push(format!("line {line_no}: unknown record '{tag}' ignored"));
                    Record::Unknown(trimmed.to_string())
                }
            }
        };
        if let Some((i, j, at)) = pending_scale.take() {
            match &record {
                Record::EdgeSe2 { i: a, j: b, .. } | Record::EdgeSe3 { i: a, j: b, .. } if (*a, *b) == (i, j) => {}
                _ => {
                    return Err(IoError::MalformedRecord {
                        line: at,
                        reason: format!("SCALE_EDGE {i} {j} is not followed by edge {i} {j}"),
                    })
                }
            }
        }
        match &record {
            Record::EdgeSe2 { i, j, .. } | Record::EdgeSe3 { i, j, .. } => {
                refs.push((line_no, *i));
                refs.push((line_no, *j));
            }
            Record::ScaleEdge { i, j, .. } => pending_scale = Some((*i, *j, line_no)),
            Record::DepthPrior { id, .. } | Record::AnchorPrior { id, .. } | Record::Fix(id) => refs.push((line_no, *id)),
            _ => {}
        }
        doc.records.push(record);
    }
    if let Some((i, j, at)) = pending_scale {
        return Err(IoError::MalformedRecord { line: at, reason: format!("SCALE_EDGE {i} {j} has no following edge") });
    }
    for (line, id) in refs {
        if !doc.vertices.contains_key(&id) {
            return Err(IoError::MalformedRecord { line, reason: format!("reference to undeclared vertex {id}") });
        }
    }
    Ok(doc)
}

/// Parses raw bytes; invalid UTF-8 is reported as a malformed record.
pub fn parse_g2o_bytes(bytes: &[u8]) -> Result<G2oDocument, IoError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse_g2o(s),
        Err(e) => {
            let line = bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
            Err(IoError::MalformedRecord { line, reason: "invalid UTF-8".into() })
        }
    }
}

/// Decimal with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
}

fn vertex_payload(v: &Vertex) -> String {
    match v {
        Vertex::Se2 { x, y, theta } => join(&[*x, *y, *theta]),
        Vertex::Se3 { t, q } => format!("{} {}", join(t), join(q)),
    }
}

/// Canonical text: vertices in ascending id, then the remaining records in
/// order.
pub fn write_g2o(doc: &G2oDocument) -> String {
    let mut out = String::new();
    for (id, v) in &doc.vertices {
        let tag = if v.dof() == 3 { "VERTEX_SE2" } else { "VERTEX_SE3:QUAT" };
        out.push_str(&format!("{tag} {id} {}\n", vertex_payload(v)));
    }
    for r in &doc.records {
        let line = match r {
            Record::EdgeSe2 { i, j, meas, info } => format!("EDGE_SE2 {i} {j} {} {}", join(meas), join(info)),
            Record::EdgeSe3 { i, j, t, q, info } => {
                format!("EDGE_SE3:QUAT {i} {j} {} {} {}", join(t), join(q), join(info))
            }
            Record::Fix(id) => format!("FIX {id}"),
            Record::DepthPrior { id, z, sigma } => format!("{EXT_PREFIX} DEPTH_PRIOR {id} {}", join(&[*z, *sigma])),
            Record::ScaleEdge { i, j, s0, stats } => match stats {
                None => format!("{EXT_PREFIX} SCALE_EDGE {i} {j} {}", fmt_f64(*s0)),
                Some((n, c)) => format!("{EXT_PREFIX} SCALE_EDGE {i} {j} {} {n} {}", fmt_f64(*s0), fmt_f64(*c)),
            },
            Record::AnchorPrior { id, prior, info } => {
                format!("{EXT_PREFIX} ANCHOR_PRIOR {id} {} {}", vertex_payload(prior), join(info))
            }
            Record::Comment(s) | Record::Unknown(s) => s.clone(),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Pose types with a g2o vertex representation.
pub trait G2oPose: LieGroup {
    fn to_vertex(&self) -> Vertex;
    fn from_vertex(v: &Vertex) -> Option<Self>;
    fn edge_record(i: usize, j: usize, measured: &Self, info: Vec<f64>) -> Record;
}

impl G2oPose for Pose2 {
    fn to_vertex(&self) -> Vertex {
        Vertex::Se2 { x: self.x, y: self.y, theta: self.theta() }
    }

    fn from_vertex(v: &Vertex) -> Option<Self> {
        match *v {
            Vertex::Se2 { x, y, theta } => Some(Pose2::new(x, y, theta)),
            _ => None,
        }
    }

    fn edge_record(i: usize, j: usize, m: &Self, info: Vec<f64>) -> Record {
        Record::EdgeSe2 { i, j, meas: [m.x, m.y, m.theta()], info }
    }
}

fn quat_xyzw(r: &Rot3) -> [f64; 4] {
    let [w, x, y, z] = r.wxyz();
    [x, y, z, w]
}

impl G2oPose for Pose3 {
    fn to_vertex(&self) -> Vertex {
        Vertex::Se3 { t: self.translation.into(), q: quat_xyzw(&self.rot) }
    }

    fn from_vertex(v: &Vertex) -> Option<Self> {
        match *v {
            Vertex::Se3 { t, q } => Some(pose3_from(t, q)),
            _ => None,
        }
    }

    fn edge_record(i: usize, j: usize, m: &Self, info: Vec<f64>) -> Record {
        Record::EdgeSe3 { i, j, t: m.translation.into(), q: quat_xyzw(&m.rot), info }
    }
}

fn pose3_from(t: [f64; 3], q: [f64; 4]) -> Pose3 {
    Pose3::new(Vector3::from(t), Rot3::from_wxyz(q[3], q[0], q[1], q[2]))
}

/// Graph plus the g2o vertex id of each pose index.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportedGraph<P> {
    pub graph: PoseGraph<P>,
    pub ids: Vec<usize>,
}

/// Builds a graph from a homogeneous document. Vertex ids map to pose
/// indices in ascending order; an edge between consecutive indices is
/// odometry, any other is a loop closure. Without an anchor prior the first
/// pose is held fixed.
pub fn to_pose_graph<P: G2oPose>(doc: &G2oDocument) -> Result<ImportedGraph<P>, IoError> {
    let ids: Vec<usize> = doc.vertices.keys().copied().collect();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    let mut b = PoseGraph::<P>::builder();
    for v in doc.vertices.values() {
        b.add_pose(P::from_vertex(v).ok_or(IoError::MixedDimension)?);
    }
    let idx = |id: &usize| index[id];
    let mut pending: Option<(usize, Option<MatchStats>)> = None;
    let mut anchored = false;
    let mut fixed = false;
    for r in &doc.records {
        let edge = match r {
            Record::EdgeSe2 { i, j, meas, info } => {
                if P::DOF != 3 {
                    return Err(IoError::MixedDimension);
                }
                let m = P::from_vertex(&Vertex::Se2 { x: meas[0], y: meas[1], theta: meas[2] }).expect("SE2");
                Some((*i, *j, m, info_from_upper(3, info)))
            }
            Record::EdgeSe3 { i, j, t, q, info } => {
                if P::DOF != 6 {
                    return Err(IoError::MixedDimension);
                }
                Some((*i, *j, P::from_vertex(&Vertex::Se3 { t: *t, q: *q }).expect("SE3"), info_from_upper(6, info)))
            }
            Record::Fix(id) => {
                if idx(id) != 0 {
                    return Err(IoError::MalformedRecord {
                        line: 0,
                        reason: format!("FIX {id}: only the lowest vertex id can be fixed"),
                    });
                }
                fixed = true;
                None
            }
            Record::DepthPrior { id, z, sigma } => {
                b.add_factor(Factor::DepthPrior { pose: idx(id), depth: *z, sigma: *sigma });
                None
            }
            Record::ScaleEdge { s0, stats, .. } => {
                let scale = b.add_scale(*s0);
                let stats = match stats {
                    Some((n, c)) => Some(MatchStats::new(*n, *c)?),
                    None => None,
                };
                pending = Some((scale, stats));
                None
            }
            Record::AnchorPrior { id, prior, info } => {
                let prior = P::from_vertex(prior).ok_or(IoError::MixedDimension)?;
                let info = InfoMatrix::new(info_from_upper(P::DOF, info))?;
                b.add_factor(Factor::AnchorPrior { pose: idx(id), prior, info });
                anchored = true;
                None
            }
            Record::Comment(_) | Record::Unknown(_) => None,
        };
        if let Some((i, j, measured, info)) = edge {
            let (from, to) = (idx(&i), idx(&j));
            let info = InfoMatrix::new(info)?;
            let f = match pending.take() {
                Some((scale, stats)) => Factor::VisualScaled { from, to, measured, scale, info, stats },
                None if from.abs_diff(to) == 1 => Factor::Odometry { from, to, measured, info },
                None => Factor::LoopClosure { from, to, measured, info },
            };
            b.add_factor(f);
        }
    }
    b.gauge_fixed(fixed || !anchored);
    Ok(ImportedGraph { graph: b.build()?, ids })
}

/// Serializes a graph; pose `k` becomes vertex id `k`.
pub fn from_pose_graph<P: G2oPose>(g: &PoseGraph<P>) -> G2oDocument {
    let mut doc = G2oDocument::default();
    let values = g.initial();
    for (k, p) in values.poses.iter().enumerate() {
        doc.vertices.insert(k, p.to_vertex());
    }
    if g.gauge_fixed() && g.num_poses() > 0 {
        doc.records.push(Record::Fix(0));
    }
    for f in g.factors() {
        match f {
            Factor::Odometry { from, to, measured, info } | Factor::LoopClosure { from, to, measured, info } => {
                doc.records.push(P::edge_record(*from, *to, measured, info_to_upper(info.matrix())));
            }
            Factor::VisualScaled { from, to, measured, scale, info, stats } => {
                doc.records.push(Record::ScaleEdge {
                    i: *from,
                    j: *to,
                    s0: values.scale(*scale),
                    stats: stats.map(|s| (s.inlier_count(), s.coverage())),
                });
                doc.records.push(P::edge_record(*from, *to, measured, info_to_upper(info.matrix())));
            }
            Factor::DepthPrior { pose, depth, sigma } => {
                doc.records.push(Record::DepthPrior { id: *pose, z: *depth, sigma: *sigma });
            }
            Factor::AnchorPrior { pose, prior, info } => {
                doc.records.push(Record::AnchorPrior { id: *pose, prior: prior.to_vertex(), info: info_to_upper(info.matrix()) });
            }
        }
    }
    doc
}

/// Dimension of a document's vertices, or `None` when empty.
pub fn document_dof(doc: &G2oDocument) -> Result<Option<usize>, IoError> {
    let mut dims = doc.vertices.values().map(Vertex::dof);
    let first = dims.next();
    if dims.any(|d| Some(d) != first) {
        return Err(IoError::MixedDimension);
    }
    Ok(first)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_se2() {
        let doc = parse_g2o("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1").unwrap();
        assert_eq!(doc.vertices.len(), 2);
        assert_eq!(doc.edge_count(), 1);
        match &doc.records[0] {
            Record::EdgeSe2 { info, .. } => {
                assert_eq!(info_from_upper(3, info), DMatrix::identity(3, 3));
            }
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn empty_input() {
        let doc = parse_g2o("").unwrap();
        assert_eq!(doc, G2oDocument::default());
        assert_eq!(write_g2o(&doc), "");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("VERTEX_SE2 0 0 0\n", 1),
            ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 0 1 0 0\n", 2),
            ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 x 0 0\n", 2),
            ("VERTEX_SE2 0 0 0 0\n\nEDGE_SE2 0 7 1 0 0 1 0 0 1 0 1\n", 3),
            ("VERTEX_SE2 0 0 0 0\n# MARVO SCALE_EDGE 0 1 1.0\n", 2),
        ];
        for (text, line) in cases {
            match parse_g2o(text) {
                Err(IoError::MalformedRecord { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_tags_warn() {
        let doc = parse_g2o("VERTEX_XY 0 1 2\r\n").unwrap();
        assert_eq!(doc.warnings.len(), 1);
        assert_eq!(parse_g2o(&write_g2o(&doc)).unwrap(), doc);
    }

    #[test]
    fn tenth_round_trips() {
        let doc = parse_g2o("VERTEX_SE2 0 0.1 0 0").unwrap();
        let back = parse_g2o(&write_g2o(&doc)).unwrap();
        match back.vertices[&0] {
            Vertex::Se2 { x, .. } => assert_eq!(x.to_bits(), 0.1f64.to_bits()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn mixed_dimension() {
        let doc = parse_g2o("VERTEX_SE2 0 0 0 0\nVERTEX_SE3:QUAT 1 0 0 0 0 0 0 1\n").unwrap();
        assert!(matches!(document_dof(&doc), Err(IoError::MixedDimension)));
        assert!(matches!(to_pose_graph::<Pose2>(&doc), Err(IoError::MixedDimension)));
    }
}
