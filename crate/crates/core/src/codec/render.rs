use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::data::{Image, LandmarkSet, N_LANDMARKS};
use crate::error::{Error, Result};

/// Disc radius at 256x256; other resolutions scale linearly.
pub const BASE_RADIUS: f64 = 4.0;
pub const BASE_RESOLUTION: usize = 256;
/// Width of the Gaussian edge falloff in pixels.
pub const DEFAULT_SOFTNESS: f64 = 1.0;

const SQRT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    /// Disc interiors take the source color at the landmark.
    #[default]
    Sampled,
    /// Disc interiors are black.
    FixedBlack,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub radius: f64,
    pub softness: f64,
    pub color_mode: ColorMode,
}

impl RenderConfig {
    pub fn new(radius: f64, softness: f64, color_mode: ColorMode) -> Result<Self> {
        if !(radius > 0.0) || !(softness >= 0.0) {
            return Err(Error::invalid(format!(
                "render config needs radius > 0 and softness >= 0 (got {radius}, {softness})"
            )));
        }
        Ok(Self {
            radius,
            softness,
            color_mode,
        })
    }

    pub fn for_resolution(resolution: usize) -> Self {
        Self {
            radius: BASE_RADIUS * resolution as f64 / BASE_RESOLUTION as f64,
            softness: DEFAULT_SOFTNESS,
            color_mode: ColorMode::Sampled,
        }
    }

    pub fn with_softness(mut self, softness: f64) -> Self {
        self.softness = softness;
        self
    }

    pub fn with_color_mode(mut self, color_mode: ColorMode) -> Self {
        self.color_mode = color_mode;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Rendered,
    Generated,
}

/// Three-channel landmark encoding: colored discs on white.
#[derive(Clone, Debug)]
pub struct LandmarkImage {
    pub image: Image,
    pub radius: f64,
    pub provenance: Provenance,
    /// Set when out-of-bounds landmarks were clamped before rendering.
    pub clamped: bool,
}

impl LandmarkImage {
    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        self.image.save_png(path)
    }
}

/// Differentiable landmark rendering.
///
/// `coords` is `(B, 68, 2)` holding `(p, q)` pixel coordinates, `source` is
/// `(B, 3, H, W)` in `[-1, 1]`. Every pixel belongs to its nearest landmark;
/// the owner's disc weight is 1 within `radius` and decays as
/// `exp(-(d - radius)^2 / (2 softness^2))` outside it (a hard cut when
/// `softness == 0`). Disc color is the bilinear sample of `source` at the
/// landmark, or black. The result is `(B, 3, H, W)`, white where no disc
/// reaches, and differentiable in both `coords` and `source`.
pub fn render_tensor(coords: &Tensor, source: &Tensor, cfg: &RenderConfig) -> Result<Tensor> {
    let (b, n, two) = coords.dims3()?;
    let (sb, ch, h, w) = source.dims4()?;
    if two != 2 || sb != b || ch != 3 {
        return Err(Error::Shape(format!(
            "render expects coords (B, N, 2) and source (B, 3, H, W); got {:?} and {:?}",
            coords.dims(),
            source.dims()
        )));
    }
    let dtype = coords.dtype();
    let device = coords.device();
    let p = coords.narrow(2, 0, 1)?; // (B, N, 1)
    let q = coords.narrow(2, 1, 1)?;
    let gx = pixel_centers(w, dtype, device)?; // (1, 1, W)
    let gy = pixel_centers(h, dtype, device)?;
    let dx = gx.broadcast_sub(&p)?; // (B, N, W)
    let dy = gy.broadcast_sub(&q)?; // (B, N, H)
    let d2 = dy.sqr()?.unsqueeze(3)?.broadcast_add(&dx.sqr()?.unsqueeze(2)?)?; // (B, N, H, W)

    let owner = d2.detach().argmin_keepdim(1)?; // (B, 1, H, W)
    let ids = Tensor::arange(0u32, n as u32, device)?.reshape((1, n, 1, 1))?;
    let owned = owner.broadcast_eq(&ids)?.to_dtype(dtype)?;

    let r = cfg.radius;
    let disc = if cfg.softness == 0.0 {
        d2.detach().le(r * r)?.to_dtype(dtype)?
    } else {
        let d = (d2 + SQRT_EPS)?.sqrt()?;
        let excess = (d - r)?.relu()?;
        (excess.sqr()? * (-0.5 / (cfg.softness * cfg.softness)))?.exp()?
    };
    let weight = (owned * disc)?.reshape((b, n, h * w))?;

    let colors = match cfg.color_mode {
        ColorMode::Sampled => sample_bilinear(coords, source)?, // (B, 3, N)
        ColorMode::FixedBlack => Tensor::full(-1.0f32, (b, 3, n), device)?.to_dtype(dtype)?,
    };
    let painted = colors.matmul(&weight)?; // (B, 3, HW)
    let alpha = weight.sum_keepdim(1)?; // (B, 1, HW)
    let background = alpha.affine(-1.0, 1.0)?;
    let out = painted.broadcast_add(&background)?;
    Ok(out.reshape((b, 3, h, w))?)
}

/// Bilinear colors of `source` at each landmark: `(B, 3, N)`.
pub fn sample_bilinear(coords: &Tensor, source: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = source.dims4()?;
    let dtype = coords.dtype();
    let device = coords.device();
    let p = coords.narrow(2, 0, 1)?;
    let q = coords.narrow(2, 1, 1)?;
    let tent = |c: &Tensor, len: usize| -> Result<Tensor> {
        let pos = (c - 0.5)?.clamp(0.0, (len - 1) as f64)?;
        let grid = Tensor::arange(0u32, len as u32, device)?
            .to_dtype(dtype)?
            .reshape((1, 1, len))?;
        Ok(grid.broadcast_sub(&pos)?.abs()?.affine(-1.0, 1.0)?.relu()?)
    };
    let tx = tent(&p, w)?; // (B, N, W)
    let ty = tent(&q, h)?; // (B, N, H)
    let rows = ty.unsqueeze(1)?.broadcast_matmul(&source.contiguous()?)?; // (B, 3, N, W)
    Ok(rows.broadcast_mul(&tx.unsqueeze(1)?)?.sum(D::Minus1)?)
}

fn pixel_centers(len: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    Ok(Tensor::arange(0u32, len as u32, device)?
        .to_dtype(dtype)?
        .affine(1.0, 0.5)?
        .reshape((1, 1, len))?)
}

/// `(B, 68, 2)` tensor from landmark sets.
pub fn landmarks_tensor(sets: &[&LandmarkSet], device: &Device, dtype: DType) -> Result<Tensor> {
    let flat: Vec<f64> = sets.iter().flat_map(|s| s.to_flat()).collect();
    Ok(Tensor::from_vec(flat, (sets.len(), N_LANDMARKS, 2), device)?.to_dtype(dtype)?)
}

/// Landmark set `index` from a `(B, 68, 2)` or `(B, 136)` tensor.
pub fn landmarks_from_tensor(t: &Tensor, index: usize) -> Result<LandmarkSet> {
    let flat = t
        .get(index)?
        .flatten_all()?
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?;
    LandmarkSet::from_flat(&flat)
}

/// Encode one landmark set against its source image.
pub fn render_landmark_image(
    landmarks: &LandmarkSet,
    source: &Image,
    cfg: &RenderConfig,
) -> Result<LandmarkImage> {
    let (h, w) = (source.height(), source.width());
    let (lm, clamped) = landmarks.clamped(h, w);
    if clamped {
        log::warn!("landmarks outside the {h}x{w} canvas were clamped before rendering");
    }
    let device = Device::Cpu;
    let coords = landmarks_tensor(&[&lm], &device, DType::F64)?;
    let src = source.to_tensor(&device, DType::F64)?;
    let out = render_tensor(&coords, &src, cfg)?;
    Ok(LandmarkImage {
        image: Image::from_tensor(&out, 0)?,
        radius: cfg.radius,
        provenance: Provenance::Rendered,
        clamped,
    })
}
