use std::path::Path;

use anyhow::{bail, Context, Result};
use marine_pgo::graph::{PoseGraph, Values};
use marine_pgo::io::*;
use marine_pgo::lie::{lift_se2_to_se3, Pose2, Pose3};
use marine_pgo::radiance::{ImagePlanes, Plane, RangeMap};

use crate::Ctx;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

pub enum LoadedGraph {
    Planar(PoseGraph<Pose2>),
    Spatial(PoseGraph<Pose3>),
}

pub fn load_graph(path: &Path) -> Result<LoadedGraph> {
    let doc = parse_g2o_bytes(&read_bytes(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let ctx = || format!("building graph from {}", path.display());
    Ok(match document_dof(&doc)? {
        Some(3) => LoadedGraph::Planar(to_pose_graph::<Pose2>(&doc).with_context(ctx)?.graph),
        Some(_) => LoadedGraph::Spatial(to_pose_graph::<Pose3>(&doc).with_context(ctx)?.graph),
        None => bail!("{} declares no vertices", path.display()),
    })
}

/// Planar poses are placed at zero height with no roll or pitch.
pub fn planar_to_spatial(poses: &[Pose2]) -> Vec<Pose3> {
    poses.iter().map(|p| lift_se2_to_se3(p, 0.0, 0.0, 0.0)).collect()
}

pub fn write_trajectory(path: &Path, poses: &[Pose3]) -> Result<()> {
    write(path, write_tum(&TumTrajectory::from_poses(poses)))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Pose3>> {
    let t = parse_tum(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    Ok(t.poses())
}

/// Writes values as a graph (`.g2o`) or a trajectory (anything else).
pub fn write_estimate<P: G2oPose>(path: &Path, g: &PoseGraph<P>, values: Values<P>, spatial: impl Fn(&[P]) -> Vec<Pose3>) -> Result<()> {
    if extension(path) == "g2o" {
        let out = g.with_initial(values)?;
        write(path, write_g2o(&from_pose_graph(&out)))
    } else {
        write_trajectory(path, &spatial(&values.poses))
    }
}

pub fn read_color(path: &Path) -> Result<ImagePlanes> {
    match read_pfm(&read_bytes(path)?).with_context(|| format!("parsing {}", path.display()))? {
        PfmImage::Color(c) => Ok(c),
        PfmImage::Gray(_) => bail!("{} is single-channel; a color PFM is required", path.display()),
    }
}

pub fn read_range(path: Option<&Path>, constant: f64, dims: (usize, usize)) -> Result<RangeMap> {
    match path {
        None => Ok(RangeMap::constant(dims.0, dims.1, constant)?),
        Some(p) => match read_pfm(&read_bytes(p)?).with_context(|| format!("parsing {}", p.display()))? {
            PfmImage::Gray(g) => Ok(RangeMap::new(g).with_context(|| format!("range map {}", p.display()))?),
            PfmImage::Color(_) => bail!("{} is a color PFM; a single-channel range map is required", p.display()),
        },
    }
}

fn gray_to_color(g: &Plane) -> ImagePlanes {
    let (w, h) = g.dims();
    let v: Vec<f64> = g.data.iter().map(|x| x.max(0.0)).collect();
    ImagePlanes::new(w, h, [v.clone(), v.clone(), v]).expect("clamped to non-negative")
}

pub fn convert(ctx: &Ctx, input: &Path, out: &Path) -> Result<()> {
    match (extension(input).as_str(), extension(out).as_str()) {
        ("g2o", "g2o") => {
            let doc = parse_g2o_bytes(&read_bytes(input)?).with_context(|| format!("parsing {}", input.display()))?;
            write(out, write_g2o(&doc))?;
        }
        ("g2o", "tum") => {
            let poses = match load_graph(input)? {
                LoadedGraph::Planar(g) => planar_to_spatial(&g.initial().poses),
                LoadedGraph::Spatial(g) => g.initial().poses.clone(),
            };
            write_trajectory(out, &poses)?;
        }
        ("tum", "tum") => {
            let t = parse_tum(&read_text(input)?).with_context(|| format!("parsing {}", input.display()))?;
            write(out, write_tum(&t))?;
        }
        ("pfm", "pfm") => {
            let img = read_pfm(&read_bytes(input)?).with_context(|| format!("parsing {}", input.display()))?;
            write(out, write_pfm(&img))?;
        }
        ("pfm", "ppm") => {
            let img = match read_pfm(&read_bytes(input)?).with_context(|| format!("parsing {}", input.display()))? {
                PfmImage::Color(c) => c,
                PfmImage::Gray(g) => gray_to_color(&g),
            };
            write(out, write_ppm_preview(&img))?;
        }
        (a, b) => bail!("no conversion from .{a} to .{b}"),
    }
    ctx.progress(format!("wrote {}", out.display()));
    Ok(())
}
