use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use marine_pgo::io::{write_pfm, write_ppm_preview, PfmImage};
use marine_pgo::radiance::{correction_mask, invert as run_invert, sample_params, synthesize, ChannelField, FormationModel, Turbidity, WaterParams};

use crate::files;
use crate::Ctx;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Water {
    Clear,
    Coastal,
    Turbid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    /// Attenuation plus backscatter saturating toward its asymptote.
    Saturating,
    /// Attenuation scaled by a diffuse term plus additive backscatter.
    Diffuse,
}

fn model_name(m: FormationModel) -> &'static str {
    match m {
        FormationModel::Saturating => "saturating",
        FormationModel::Diffuse => "diffuse",
    }
}

fn constant(field: &ChannelField) -> Result<[f64; 3]> {
    match field {
        ChannelField::Constant(v) => Ok(*v),
        ChannelField::PerPixel(_) => bail!("only constant water parameters can be written to a parameter file"),
    }
}

fn triple(v: [f64; 3]) -> String {
    format!("{:.17e},{:.17e},{:.17e}", v[0], v[1], v[2])
}

/// `key=value` rendering that reads back bit-exactly.
fn params_to_text(p: &WaterParams) -> Result<String> {
    Ok(format!(
        "model={}\nbeta={}\nb_inf={}\nw_diffuse={}\nadditive={}\n",
        model_name(p.model),
        triple(constant(&p.beta)?),
        triple(constant(&p.b_inf)?),
        triple(p.w_diffuse),
        triple(constant(&p.additive)?)
    ))
}

fn params_from_text(text: &str) -> Result<WaterParams> {
    let mut p = WaterParams::clear(FormationModel::Saturating);
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = || anyhow!("line {}: expected key=value, got '{line}'", k + 1);
        let (key, value) = line.split_once('=').ok_or_else(err)?;
        let parse3 = || -> Result<[f64; 3]> {
            let v: Vec<f64> = value.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| err())?;
            v.try_into().map_err(|_| err())
        };
        match key.trim() {
            "model" => {
                p.model = match value.trim() {
                    "saturating" => FormationModel::Saturating,
                    "diffuse" => FormationModel::Diffuse,
                    _ => return Err(err()),
                }
            }
            "beta" => p.beta = ChannelField::Constant(parse3()?),
            "b_inf" => p.b_inf = ChannelField::Constant(parse3()?),
            "w_diffuse" => p.w_diffuse = parse3()?,
            "additive" => p.additive = ChannelField::Constant(parse3()?),
            other => bail!("line {}: unknown key '{other}'", k + 1),
        }
    }
    Ok(p)
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Clean radiance (color PFM).
    #[arg(long)]
    rgb: PathBuf,
    /// Per-pixel range in meters (gray PFM).
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Constant range used when --depth is absent.
    #[arg(long, default_value_t = 3.0)]
    range: f64,
    #[arg(long, value_enum, default_value = "coastal")]
    water: Water,
    #[arg(long, value_enum, default_value = "saturating")]
    mode: Mode,
    /// Use these parameters instead of sampling.
    #[arg(long)]
    params_in: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to record the parameters used.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Gamma-mapped 8-bit preview (PPM).
    #[arg(long)]
    preview: Option<PathBuf>,
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let j = files::read_color(&a.rgb)?;
    let z = files::read_range(a.depth.as_deref(), a.range, j.dims())?;
    let p = match &a.params_in {
        Some(path) => params_from_text(&files::read_text(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => {
            let t = match a.water {
                Water::Clear => Turbidity::Clear,
                Water::Coastal => Turbidity::Coastal,
                Water::Turbid => Turbidity::Turbid,
            };
            let m = match a.mode {
                Mode::Saturating => FormationModel::Saturating,
                Mode::Diffuse => FormationModel::Diffuse,
            };
            sample_params(ctx.seed, t, m)
        }
    };
    let i = synthesize(&j, &z, &p)?;
    let text = params_to_text(&p)?;
    if let Some(path) = &a.params {
        files::write(path, &text)?;
    }
    if let Some(path) = &a.preview {
        files::write(path, write_ppm_preview(&i))?;
    }
    let means = [0, 1, 2].map(|c| i.channel(c).iter().sum::<f64>() / i.channel(c).len().max(1) as f64);
    files::write(&a.out, write_pfm(&PfmImage::Color(i)))?;
    ctx.progress(format!("wrote {}", a.out.display()));
    println!("{text}mean_rgb={}", triple(means));
    Ok(())
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    /// Underwater image (color PFM).
    #[arg(long)]
    uw: PathBuf,
    #[arg(long)]
    depth: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    range: f64,
    /// Parameter file written by uw-synth.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Correction mask (gray PFM).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
}

pub fn invert(ctx: &Ctx, a: InvertArgs) -> Result<()> {
    let i = files::read_color(&a.uw)?;
    let z = files::read_range(a.depth.as_deref(), a.range, i.dims())?;
    let p = params_from_text(&files::read_text(&a.params)?).with_context(|| format!("parsing {}", a.params.display()))?;
    let inv = run_invert(&i, &z, &p)?;
    let mut text = format!("clamped={}\nunrecoverable={}\n", inv.clamped, inv.unrecoverable);
    if let Some(path) = &a.mask {
        let g = correction_mask(&i, &inv.radiance, a.eps)?;
        let (lo, hi) = g.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        text.push_str(&format!("mask_min={lo:.17e}\nmask_max={hi:.17e}\n"));
        files::write(path, write_pfm(&PfmImage::Gray(g)))?;
    }
    files::write(&a.out, write_pfm(&PfmImage::Color(inv.radiance)))?;
    ctx.progress(format!("wrote {}", a.out.display()));
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_text_round_trips() {
        for m in [FormationModel::Saturating, FormationModel::Diffuse] {
            let p = sample_params(3, Turbidity::Turbid, m);
            assert_eq!(params_from_text(&params_to_text(&p).unwrap()).unwrap(), p);
        }
    }

    #[test]
    fn params_text_rejects_garbage() {
        assert!(params_from_text("beta=1,2").is_err());
        assert!(params_from_text("colour=1,2,3").is_err());
        assert!(params_from_text("model=murky").is_err());
    }
}
