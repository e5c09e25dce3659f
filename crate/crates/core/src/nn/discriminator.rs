//! PatchGAN discriminators.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::generator::ENCODER_LEAKY_SLOPE;
use crate::nn::layers::{leaky_relu, sigmoid, Conv2d, InstanceNorm};
use crate::nn::params::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub in_channels: usize,
    /// Strided layers; 3 gives a 70x70 receptive field.
    pub n_layers: usize,
    pub base_filters: usize,
    /// Add a second, shallower discriminator (`n_layers - 1`) and average.
    pub dual: bool,
}

impl DiscriminatorSpec {
    pub fn new(in_channels: usize, base_filters: usize, dual: bool) -> Self {
        Self {
            in_channels,
            n_layers: 3,
            base_filters,
            dual,
        }
    }
}

/// Receptive field of a PatchGAN with `n_layers` strided 4x4 convolutions
/// followed by two stride-1 4x4 convolutions.
pub fn receptive_field(n_layers: usize) -> usize {
    let mut rf = 1;
    // walk backwards from the output: two stride-1 layers, then n_layers stride-2
    for _ in 0..2 {
        rf += 3;
    }
    for _ in 0..n_layers {
        rf = rf * 2 + 2;
    }
    rf
}

struct Layer {
    conv: Conv2d,
    norm: Option<InstanceNorm>,
}

/// Single-scale PatchGAN: `(B, C, H, W) -> (B, 1, h, w)` in `(0, 1)`.
pub struct PatchDiscriminator {
    layers: Vec<Layer>,
    out: Conv2d,
}

impl PatchDiscriminator {
    fn new(
        ps: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        n_layers: usize,
        base: usize,
    ) -> Result<Self> {
        let width = |i: usize| (base << i.min(3)).min(8 * base);
        let mut layers = Vec::with_capacity(n_layers + 1);
        let mut c_in = in_channels;
        for i in 0..=n_layers {
            let c_out = width(i);
            let stride = if i < n_layers { 2 } else { 1 };
            let normed = i > 0;
            layers.push(Layer {
                conv: Conv2d::new(
                    ps,
                    &format!("{prefix}.conv.{i}"),
                    c_in,
                    c_out,
                    4,
                    stride,
                    1,
                    !normed,
                )?,
                norm: normed
                    .then(|| InstanceNorm::new(ps, &format!("{prefix}.conv.{i}.norm"), c_out))
                    .transpose()?,
            });
            c_in = c_out;
        }
        let out = Conv2d::new(ps, &format!("{prefix}.out"), c_in, 1, 4, 1, 1, true)?;
        Ok(Self { layers, out })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.conv.forward(&h)?;
            if let Some(norm) = &layer.norm {
                h = norm.forward(&h)?;
            }
            h = leaky_relu(&h, ENCODER_LEAKY_SLOPE)?;
        }
        sigmoid(&self.out.forward(&h)?)
    }
}

/// One or two PatchGANs judging the same input.
pub struct Discriminator {
    spec: DiscriminatorSpec,
    nets: Vec<PatchDiscriminator>,
    params: ParamStore,
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        if spec.n_layers == 0 {
            return Err(Error::invalid("discriminator needs at least one layer"));
        }
        if spec.dual && spec.n_layers < 2 {
            return Err(Error::invalid("dual discriminator needs n_layers >= 2"));
        }
        let mut ps = ParamStore::new(seed, dtype, device);
        let mut nets = vec![PatchDiscriminator::new(
            &mut ps,
            "d0",
            spec.in_channels,
            spec.n_layers,
            spec.base_filters,
        )?];
        if spec.dual {
            nets.push(PatchDiscriminator::new(
                &mut ps,
                "d1",
                spec.in_channels,
                spec.n_layers - 1,
                spec.base_filters,
            )?);
        }
        Ok(Self {
            spec,
            nets,
            params: ps,
        })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// One patch map per member discriminator.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let c = x.dim(1)?;
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "discriminator expects {} channels, got {c}",
                self.spec.in_channels
            )));
        }
        self.nets.iter().map(|n| n.forward(x)).collect()
    }
}
