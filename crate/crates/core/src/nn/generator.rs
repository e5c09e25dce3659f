//! U-Net generators with label injection at the bottleneck.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::codec::{render_tensor, RenderConfig};
use crate::data::{canonical_layout, N_LANDMARKS};
use crate::error::{Error, Result};
use crate::nn::layers::{
    dropout, leaky_relu, sigmoid, Conv2d, ConvTranspose2d, ForwardCtx, InstanceNorm, Linear,
};
use crate::nn::params::ParamStore;

/// Slope of the leaky rectifiers in every encoder.
pub const ENCODER_LEAKY_SLOPE: f64 = 0.2;
/// Dropout rate of the first decoder blocks.
pub const DECODER_DROPOUT: f64 = 0.5;
/// Number of leading decoder blocks with dropout.
pub const DROPOUT_BLOCKS: usize = 3;
const HEAD_INIT_STD: f64 = 1e-3;
/// A projection of a one-hot vector is an embedding table; unit scale keeps
/// the label channels comparable to the bottleneck features they join.
const LABEL_INIT_STD: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub resolution: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_filters: usize,
    pub depth: usize,
    /// Lengths of the label vectors injected at the bottleneck.
    pub label_dims: Vec<usize>,
    pub coordinate_head: bool,
}

impl GeneratorSpec {
    fn base(resolution: usize, base_filters: usize, label_dims: Vec<usize>) -> Result<Self> {
        if resolution < 32 || !resolution.is_power_of_two() {
            return Err(Error::invalid(format!(
                "generator resolution must be a power of two >= 32, got {resolution}"
            )));
        }
        if base_filters == 0 {
            return Err(Error::invalid("base_filters must be positive"));
        }
        Ok(Self {
            resolution,
            in_channels: 3,
            out_channels: 3,
            base_filters,
            depth: resolution.trailing_zeros() as usize,
            label_dims,
            coordinate_head: false,
        })
    }

    /// Stage-I spec: face image in, coordinates plus landmark image out.
    pub fn landmark(resolution: usize, base_filters: usize, label_dims: Vec<usize>) -> Result<Self> {
        Ok(Self {
            coordinate_head: true,
            ..Self::base(resolution, base_filters, label_dims)?
        })
    }

    /// Stage-II spec: face and landmark image (6 channels) in, face out.
    pub fn expression(resolution: usize, base_filters: usize, label_dims: Vec<usize>) -> Result<Self> {
        Ok(Self {
            in_channels: 6,
            ..Self::base(resolution, base_filters, label_dims)?
        })
    }

    /// Channel width of encoder stage `i`: doubling, capped at 8x base.
    pub fn width(&self, i: usize) -> usize {
        (self.base_filters << i.min(3)).min(8 * self.base_filters)
    }

    fn validate(&self) -> Result<()> {
        if self.depth != self.resolution.trailing_zeros() as usize
            || !self.resolution.is_power_of_two()
            || self.resolution < 32
        {
            return Err(Error::invalid(
                "depth must equal log2(resolution) for resolution >= 32",
            ));
        }
        Ok(())
    }
}

struct EncoderStage {
    conv: Conv2d,
    norm: Option<InstanceNorm>,
    activate: bool,
}

struct Encoder {
    stages: Vec<EncoderStage>,
}

impl Encoder {
    fn new(ps: &mut ParamStore, spec: &GeneratorSpec) -> Result<Self> {
        let d = spec.depth;
        let mut stages = Vec::with_capacity(d);
        let mut c_in = spec.in_channels;
        for i in 0..d {
            let c_out = spec.width(i);
            let normed = i > 0 && i + 1 < d;
            stages.push(EncoderStage {
                conv: Conv2d::new(ps, &format!("enc.{i}"), c_in, c_out, 4, 2, 1, !normed)?,
                norm: normed
                    .then(|| InstanceNorm::new(ps, &format!("enc.{i}.norm"), c_out))
                    .transpose()?,
                activate: i > 0,
            });
            c_in = c_out;
        }
        Ok(Self { stages })
    }

    /// Output of every stage, shallowest first.
    fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let input = outs.last().unwrap_or(x);
            let h = if stage.activate {
                leaky_relu(input, ENCODER_LEAKY_SLOPE)?
            } else {
                input.clone()
            };
            let mut h = stage.conv.forward(&h)?;
            if let Some(norm) = &stage.norm {
                h = norm.forward(&h)?;
            }
            outs.push(h);
        }
        Ok(outs)
    }
}

/// One fully connected projection per label vector, concatenated onto the
/// bottleneck embedding as extra channels.
struct LabelInjection {
    projections: Vec<Linear>,
    dims: Vec<usize>,
    width: usize,
}

impl LabelInjection {
    fn new(ps: &mut ParamStore, dims: &[usize], width: usize) -> Result<Self> {
        let projections = dims
            .iter()
            .enumerate()
            .map(|(k, &n)| Linear::new(ps, &format!("label.{k}"), n, width, LABEL_INIT_STD))
            .collect::<Result<_>>()?;
        Ok(Self {
            projections,
            dims: dims.to_vec(),
            width,
        })
    }

    fn channels(&self) -> usize {
        self.width * (1 + self.projections.len())
    }

    fn forward(&self, bottleneck: &Tensor, labels: &[&Tensor]) -> Result<Tensor> {
        if labels.len() != self.dims.len() {
            return Err(Error::Shape(format!(
                "generator expects {} label vectors, got {}",
                self.dims.len(),
                labels.len()
            )));
        }
        let b = bottleneck.dim(0)?;
        let mut parts = vec![bottleneck.clone()];
        for ((proj, &n), label) in self.projections.iter().zip(&self.dims).zip(labels) {
            if label.dims() != [b, n] {
                return Err(Error::Shape(format!(
                    "label vector has shape {:?}, expected [{b}, {n}]",
                    label.dims()
                )));
            }
            parts.push(proj.forward(label)?.reshape((b, self.width, 1, 1))?);
        }
        Ok(Tensor::cat(&parts, 1)?)
    }
}

struct DecoderBlock {
    deconv: ConvTranspose2d,
    norm: Option<InstanceNorm>,
    dropout: f64,
}

impl DecoderBlock {
    fn forward(&self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let mut h = self.deconv.forward(&x.relu()?)?;
        match &self.norm {
            Some(norm) => h = norm.forward(&h)?,
            None => return Ok(h.tanh()?),
        }
        dropout(&h, self.dropout, ctx)
    }
}

/// Encoder, label injection and the first `n_blocks` decoder blocks.
struct UNet {
    encoder: Encoder,
    labels: LabelInjection,
    decoder: Vec<DecoderBlock>,
    depth: usize,
}

impl UNet {
    fn new(ps: &mut ParamStore, spec: &GeneratorSpec, n_blocks: usize) -> Result<Self> {
        spec.validate()?;
        let d = spec.depth;
        let encoder = Encoder::new(ps, spec)?;
        let labels = LabelInjection::new(ps, &spec.label_dims, spec.width(d - 1))?;
        let mut decoder = Vec::with_capacity(n_blocks);
        let mut c_in = labels.channels();
        for j in 0..n_blocks {
            let last = j + 1 == d;
            let c_out = if last {
                spec.out_channels
            } else {
                spec.width(d - 2 - j)
            };
            decoder.push(DecoderBlock {
                deconv: ConvTranspose2d::new(ps, &format!("dec.{j}"), c_in, c_out, 4, 2, 1, last)?,
                norm: (!last)
                    .then(|| InstanceNorm::new(ps, &format!("dec.{j}.norm"), c_out))
                    .transpose()?,
                dropout: if j < DROPOUT_BLOCKS { DECODER_DROPOUT } else { 0.0 },
            });
            c_in = 2 * c_out;
        }
        Ok(Self {
            encoder,
            labels,
            decoder,
            depth: d,
        })
    }

    fn forward(&self, x: &Tensor, labels: &[&Tensor], ctx: &mut ForwardCtx) -> Result<Tensor> {
        let skips = self.encoder.forward(x)?;
        let mut h = self.labels.forward(&skips[self.depth - 1], labels)?;
        for (j, block) in self.decoder.iter().enumerate() {
            h = block.forward(&h, ctx)?;
            if j + 1 < self.depth {
                let stage = self.depth - 2 - j;
                let skip = if ctx.zero_skip == Some(stage) {
                    skips[stage].zeros_like()?
                } else {
                    skips[stage].clone()
                };
                h = Tensor::cat(&[&h, &skip], 1)?;
            }
        }
        Ok(h)
    }
}

fn check_input(x: &Tensor, spec: &GeneratorSpec) -> Result<()> {
    let (_, c, h, w) = x.dims4()?;
    if c != spec.in_channels {
        return Err(Error::Shape(format!(
            "generator expects {} input channels, got {c}",
            spec.in_channels
        )));
    }
    if h != spec.resolution || w != spec.resolution {
        return Err(Error::Shape(format!(
            "generator expects {0}x{0} input, got {h}x{w}",
            spec.resolution
        )));
    }
    Ok(())
}

/// Stage-I output.
pub struct LandmarkOutput {
    /// `(B, 68, 2)` pixel coordinates in `(0, resolution)`.
    pub coords: Tensor,
    /// `(B, 3, H, W)` landmark image rendered from `coords` against the input.
    pub image: Tensor,
}

/// Stage-I generator: U-Net encoder with label injection, three dropout
/// decoder blocks, and a fully connected coordinate head. The landmark image
/// is rendered differentiably from the predicted coordinates.
pub struct LandmarkGenerator {
    spec: GeneratorSpec,
    unet: UNet,
    head: Linear,
    /// `1/sqrt(fan_in)` applied to the head input, so that Adam's
    /// per-weight steps do not add up to large coordinate jumps.
    head_gain: f64,
    params: ParamStore,
}

/// Decoder blocks ahead of the coordinate head.
const LANDMARK_DECODER_BLOCKS: usize = DROPOUT_BLOCKS;

impl LandmarkGenerator {
    pub fn new(spec: GeneratorSpec, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        if !spec.coordinate_head || spec.in_channels != 3 {
            return Err(Error::invalid(
                "landmark generator needs a coordinate head and 3 input channels",
            ));
        }
        let mut ps = ParamStore::new(seed, dtype, device);
        let unet = UNet::new(&mut ps, &spec, LANDMARK_DECODER_BLOCKS)?;
        let side = 1usize << LANDMARK_DECODER_BLOCKS;
        let features = 2 * spec.width(spec.depth - 1 - LANDMARK_DECODER_BLOCKS) * side * side;
        // start from the canonical layout
        let res = spec.resolution as f64;
        let prior: Vec<f64> = canonical_layout(spec.resolution)
            .to_flat()
            .into_iter()
            .map(|v| {
                let u = (v / res).clamp(1e-3, 1.0 - 1e-3);
                (u / (1.0 - u)).ln()
            })
            .collect();
        let head = Linear::with_bias(&mut ps, "head", features, prior, HEAD_INIT_STD)?;
        Ok(Self {
            spec,
            unet,
            head,
            head_gain: 1.0 / (features as f64).sqrt(),
            params: ps,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Predict coordinates only.
    pub fn coordinates(&self, x: &Tensor, labels: &[&Tensor], ctx: &mut ForwardCtx) -> Result<Tensor> {
        check_input(x, &self.spec)?;
        let b = x.dim(0)?;
        let h = self.unet.forward(x, labels, ctx)?.relu()?.flatten_from(1)?;
        let res = self.spec.resolution as f64;
        // squash into the open interval (0, res)
        let unit = sigmoid(&self.head.forward(&(h * self.head_gain)?)?)?;
        let coords = unit.affine(res - 2e-3, 1e-3)?;
        Ok(coords.reshape((b, N_LANDMARKS, 2))?)
    }

    pub fn forward(
        &self,
        x: &Tensor,
        labels: &[&Tensor],
        render: &RenderConfig,
        ctx: &mut ForwardCtx,
    ) -> Result<LandmarkOutput> {
        let coords = self.coordinates(x, labels, ctx)?;
        let image = render_tensor(&coords, x, render)?;
        Ok(LandmarkOutput { coords, image })
    }
}

/// Stage-II generator: full U-Net with a Tanh output.
pub struct ExpressionGenerator {
    spec: GeneratorSpec,
    unet: UNet,
    params: ParamStore,
}

impl ExpressionGenerator {
    pub fn new(spec: GeneratorSpec, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        if spec.coordinate_head {
            return Err(Error::invalid("expression generator has no coordinate head"));
        }
        let mut ps = ParamStore::new(seed, dtype, device);
        let unet = UNet::new(&mut ps, &spec, spec.depth)?;
        Ok(Self {
            spec,
            unet,
            params: ps,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// `(B, 6, H, W) -> (B, 3, H, W)` in `(-1, 1)`.
    pub fn forward(&self, x: &Tensor, labels: &[&Tensor], ctx: &mut ForwardCtx) -> Result<Tensor> {
        check_input(x, &self.spec)?;
        self.unet.forward(x, labels, ctx)
    }
}
