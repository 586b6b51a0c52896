//! Underwater image formation: forward synthesis, closed-form inversion,
//! the channel-aggregated correction mask and per-pixel normalization.
//!
//! Two formation models are supported:
//!
//! ```text
//! Saturating:  I_c = J_c·e^(−β_c z) + B∞_c·(1 − e^(−β_c z))
//! Diffuse:     I_c = J_c·W_c·e^(−β_c z) + B_c
//! ```
//!
//! All images are row-major with row 0 at the top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::RadianceError;

/// Pixels with `β·z` above this cannot be inverted and are zeroed.
pub const MAX_OPTICAL_DEPTH: f64 = 80.0;
pub const DEFAULT_MASK_EPS: f64 = 1e-6;
/// Added to the channel standard deviation in [`apply_mask`].
pub const NORM_EPS: f64 = 1e-5;

/// One single-channel float plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RadianceError> {
        if data.len() != width * height {
            return Err(RadianceError::DimensionMismatch { expected: (width, height), actual: (data.len(), 1) });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self { width, height, data: vec![v; width * height] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Three equal-sized non-negative radiance planes (R, G, B).
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlanes {
    width: usize,
    height: usize,
    channels: [Vec<f64>; 3],
}

impl ImagePlanes {
    pub fn new(width: usize, height: usize, channels: [Vec<f64>; 3]) -> Result<Self, RadianceError> {
        for c in &channels {
            if c.len() != width * height {
                return Err(RadianceError::DimensionMismatch { expected: (width, height), actual: (c.len(), 1) });
            }
            if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(RadianceError::InvalidImage("radiance must be finite and non-negative".into()));
            }
        }
        Ok(Self { width, height, channels })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let n = width * height;
        Self { width, height, channels: rgb.map(|v| vec![v; n]) }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>; 3] {
        &self.channels
    }

    pub fn into_channels(self) -> [Vec<f64>; 3] {
        self.channels
    }

    pub fn pixel(&self, k: usize) -> [f64; 3] {
        [self.channels[0][k], self.channels[1][k], self.channels[2][k]]
    }

    fn check(&self, dims: (usize, usize)) -> Result<(), RadianceError> {
        if self.dims() != dims {
            return Err(RadianceError::DimensionMismatch { expected: dims, actual: self.dims() });
        }
        Ok(())
    }
}

/// Strictly positive per-pixel range [m].
#[derive(Clone, Debug, PartialEq)]
pub struct RangeMap(Plane);

impl RangeMap {
    pub fn new(plane: Plane) -> Result<Self, RadianceError> {
        if plane.data.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(RadianceError::InvalidImage("range must be finite and positive".into()));
        }
        Ok(Self(plane))
    }

    pub fn constant(width: usize, height: usize, z: f64) -> Result<Self, RadianceError> {
        Self::new(Plane::filled(width, height, z))
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    fn check(&self, dims: (usize, usize)) -> Result<(), RadianceError> {
        if self.0.dims() != dims {
            return Err(RadianceError::DimensionMismatch { expected: dims, actual: self.0.dims() });
        }
        Ok(())
    }
}

/// Per-channel value, constant or per pixel.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelField {
    Constant([f64; 3]),
    PerPixel(ImagePlanes),
}

impl ChannelField {
    fn at(&self, c: usize, k: usize) -> f64 {
        match self {
            ChannelField::Constant(v) => v[c],
            ChannelField::PerPixel(p) => p.channels[c][k],
        }
    }

    fn validate(&self, name: &str, dims: (usize, usize)) -> Result<(), RadianceError> {
        match self {
            ChannelField::Constant(v) => {
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(RadianceError::InvalidParams(format!("{name} must be finite and non-negative")));
                }
                Ok(())
            }
            // ImagePlanes already guarantees non-negative finite values
            ChannelField::PerPixel(p) => p.check(dims),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FormationModel {
    /// Attenuated radiance plus saturating backscatter toward `B∞`.
    #[default]
    Saturating,
    /// Attenuated radiance scaled by the diffuse term `W`, plus additive `B`.
    Diffuse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaterParams {
    /// Attenuation `β_c` [1/m].
    pub beta: ChannelField,
    /// Asymptotic backscatter `B∞_c`.
    pub b_inf: ChannelField,
    /// Diffuse downwelling `W_c` (diffuse model only).
    pub w_diffuse: [f64; 3],
    /// Additive backscatter `B_c` (diffuse model only).
    pub additive: ChannelField,
    pub model: FormationModel,
}

impl WaterParams {
    /// Clear water: no attenuation, no backscatter, unit diffuse term.
    pub fn clear(model: FormationModel) -> Self {
        Self {
            beta: ChannelField::Constant([0.0; 3]),
            b_inf: ChannelField::Constant([0.0; 3]),
            w_diffuse: [1.0; 3],
            additive: ChannelField::Constant([0.0; 3]),
            model,
        }
    }

    pub fn validate(&self, dims: (usize, usize)) -> Result<(), RadianceError> {
        self.beta.validate("beta", dims)?;
        self.b_inf.validate("b_inf", dims)?;
        self.additive.validate("additive backscatter", dims)?;
        if self.w_diffuse.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(RadianceError::InvalidParams("w_diffuse must be positive".into()));
        }
        Ok(())
    }
}

fn map_channels<F>(dims: (usize, usize), f: F) -> [Vec<f64>; 3]
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let n = dims.0 * dims.1;
    [0, 1, 2].map(|c| (0..n).into_par_iter().map(|k| f(c, k)).collect())
}

/// Forward image formation.
pub fn synthesize(j: &ImagePlanes, z: &RangeMap, p: &WaterParams) -> Result<ImagePlanes, RadianceError> {
    let dims = j.dims();
    z.check(dims)?;
    p.validate(dims)?;
    let channels = map_channels(dims, |c, k| {
        let t = (-p.beta.at(c, k) * z.0.data[k]).exp();
        match p.model {
            FormationModel::Saturating => j.channels[c][k] * t + p.b_inf.at(c, k) * (1.0 - t),
            FormationModel::Diffuse => j.channels[c][k] * p.w_diffuse[c] * t + p.additive.at(c, k),
        }
    });
    ImagePlanes::new(dims.0, dims.1, channels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub radiance: ImagePlanes,
    /// Channel samples that came out negative and were set to zero.
    pub clamped: usize,
    /// Channel samples with `β·z` above [`MAX_OPTICAL_DEPTH`], set to zero.
    pub unrecoverable: usize,
}

/// Closed-form inverse of [`synthesize`].
pub fn invert(i: &ImagePlanes, z: &RangeMap, p: &WaterParams) -> Result<Inversion, RadianceError> {
    let dims = i.dims();
    z.check(dims)?;
    p.validate(dims)?;
    // raw value, or None when unrecoverable
    let raw = [0, 1, 2].map(|c| {
        (0..dims.0 * dims.1)
            .into_par_iter()
            .map(|k| {
                let bz = p.beta.at(c, k) * z.0.data[k];
                if bz > MAX_OPTICAL_DEPTH {
                    return None;
                }
                let v = match p.model {
                    FormationModel::Saturating => {
                        (i.channels[c][k] - p.b_inf.at(c, k) * (1.0 - (-bz).exp())) * bz.exp()
                    }
                    FormationModel::Diffuse => (i.channels[c][k] - p.additive.at(c, k)) * bz.exp() / p.w_diffuse[c],
                };
                Some(v)
            })
            .collect::<Vec<Option<f64>>>()
    });
    let mut clamped = 0;
    let mut unrecoverable = 0;
    let channels = raw.map(|ch| {
        ch.into_iter()
            .map(|v| match v {
                None => {
                    unrecoverable += 1;
                    0.0
                }
                Some(v) if v < 0.0 => {
                    clamped += 1;
                    0.0
                }
                Some(v) => v,
            })
            .collect()
    });
    Ok(Inversion { radiance: ImagePlanes::new(dims.0, dims.1, channels)?, clamped, unrecoverable })
}

/// `Γ(x) = (1/3) Σ_c Ĵ_c(x) / (I_c(x) + ε)`.
pub fn correction_mask(i: &ImagePlanes, j_hat: &ImagePlanes, eps: f64) -> Result<Plane, RadianceError> {
    j_hat.check(i.dims())?;
    if !(eps > 0.0) {
        return Err(RadianceError::InvalidParams("eps must be positive".into()));
    }
    let (w, h) = i.dims();
    let data = (0..w * h)
        .into_par_iter()
        .map(|k| (0..3).map(|c| j_hat.channels[c][k] / (i.channels[c][k] + eps)).sum::<f64>() / 3.0)
        .collect();
    Plane::new(w, h, data)
}

/// Masked, per-pixel channel-normalized planes (may be negative).
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedPlanes {
    pub width: usize,
    pub height: usize,
    pub channels: [Vec<f64>; 3],
}

/// `F̃ = norm(Γ ⊙ F)`: multiply every channel by Γ, then per pixel subtract
/// the channel mean and divide by the channel standard deviation plus
/// [`NORM_EPS`].
pub fn apply_mask(f: &ImagePlanes, mask: &Plane) -> Result<NormalizedPlanes, RadianceError> {
    let dims = f.dims();
    if mask.dims() != dims {
        return Err(RadianceError::DimensionMismatch { expected: dims, actual: mask.dims() });
    }
    let px: Vec<[f64; 3]> = (0..dims.0 * dims.1)
        .into_par_iter()
        .map(|k| {
            let v = f.pixel(k).map(|x| x * mask.data[k]);
            let mean = (v[0] + v[1] + v[2]) / 3.0;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
            let d = var.sqrt() + NORM_EPS;
            v.map(|x| (x - mean) / d)
        })
        .collect();
    let channels = [0, 1, 2].map(|c| px.iter().map(|p| p[c]).collect());
    Ok(NormalizedPlanes { width: dims.0, height: dims.1, channels })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Turbidity {
    Clear,
    Coastal,
    Turbid,
}

impl Turbidity {
    /// Uniform `[lo, hi]` ranges of `β` for R, G, B [1/m].
    pub fn beta_ranges(self) -> [(f64, f64); 3] {
        match self {
            Turbidity::Clear => [(0.30, 0.50), (0.04, 0.10), (0.02, 0.08)],
            Turbidity::Coastal => [(0.50, 0.90), (0.15, 0.35), (0.10, 0.30)],
            Turbidity::Turbid => [(0.90, 1.60), (0.40, 0.90), (0.35, 0.80)],
        }
    }
}

impl std::str::FromStr for Turbidity {
    type Err = RadianceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clear" => Ok(Turbidity::Clear),
            "coastal" => Ok(Turbidity::Coastal),
            "turbid" => Ok(Turbidity::Turbid),
            _ => Err(RadianceError::InvalidParams(format!("unknown turbidity '{s}'"))),
        }
    }
}

pub const B_INF_RANGE: (f64, f64) = (0.05, 0.40);
pub const W_PERTURBATION: f64 = 0.15;

/// Draws constant water parameters; `B∞_R ≤ B∞_B` holds by resampling.
pub fn sample_params(seed: u64, turbidity: Turbidity, model: FormationModel) -> WaterParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = turbidity.beta_ranges().map(|(lo, hi)| rng.random_range(lo..=hi));
    let mut b_inf = [0.0; 3];
    loop {
        for v in b_inf.iter_mut() {
            *v = rng.random_range(B_INF_RANGE.0..=B_INF_RANGE.1);
        }
        if b_inf[0] <= b_inf[2] {
            break;
        }
    }
    let w = [0; 3].map(|_| 1.0 + rng.random_range(-W_PERTURBATION..=W_PERTURBATION));
    WaterParams {
        beta: ChannelField::Constant(beta),
        b_inf: ChannelField::Constant(b_inf),
        w_diffuse: w,
        additive: ChannelField::Constant(b_inf),
        model,
    }
}
