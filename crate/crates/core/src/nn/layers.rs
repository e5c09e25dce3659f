use candle_core::{Tensor, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::params::ParamStore;

/// Weight initialization std for convolutions and linear layers.
pub const INIT_STD: f64 = 0.02;
const NORM_EPS: f64 = 1e-5;

/// Per-forward state: whether dropout is active and the stream its masks come from.
pub struct ForwardCtx<'a> {
    pub dropout: bool,
    pub rng: &'a mut ChaCha8Rng,
    /// Zero the skip connection of this encoder stage (probe hook).
    pub zero_skip: Option<usize>,
}

impl<'a> ForwardCtx<'a> {
    pub fn new(dropout: bool, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            dropout,
            rng,
            zero_skip: None,
        }
    }
}

pub struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = ps.normal(
            &format!("{name}.weight"),
            &[c_out, c_in, kernel, kernel],
            0.0,
            INIT_STD,
        )?;
        let bias = bias
            .then(|| ps.constant(&format!("{name}.bias"), &[c_out], 0.0))
            .transpose()?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// Copy sharing storage but cut from the autodiff graph.
    pub(crate) fn detached(&self) -> Self {
        Self {
            weight: self.weight.detach(),
            bias: self.bias.as_ref().map(Tensor::detach),
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        let y = if c == h && c == w && c > 1 {
            // candle's CPU conv2d mistakes a contiguous NCHW input for NHWC
            // when C == H == W; a transposed view takes its general path.
            x.transpose(2, 3)?
                .conv2d(&self.weight.transpose(2, 3)?, self.padding, self.stride, 1, 1)?
                .transpose(2, 3)?
        } else {
            x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?
        };
        add_channel_bias(y, self.bias.as_ref())
    }
}

pub struct ConvTranspose2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = ps.normal(
            &format!("{name}.weight"),
            &[c_in, c_out, kernel, kernel],
            0.0,
            INIT_STD,
        )?;
        let bias = bias
            .then(|| ps.constant(&format!("{name}.bias"), &[c_out], 0.0))
            .transpose()?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?;
        add_channel_bias(y, self.bias.as_ref())
    }
}

fn add_channel_bias(y: Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    Ok(match bias {
        Some(b) => y.broadcast_add(&b.reshape((1, (), 1, 1))?)?,
        None => y,
    })
}

pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize, std: f64) -> Result<Self> {
        Ok(Self {
            weight: ps.normal(&format!("{name}.weight"), &[d_out, d_in], 0.0, std)?,
            bias: ps.constant(&format!("{name}.bias"), &[d_out], 0.0)?,
        })
    }

    pub fn with_bias(ps: &mut ParamStore, name: &str, d_in: usize, bias: Vec<f64>, std: f64) -> Result<Self> {
        let d_out = bias.len();
        Ok(Self {
            weight: ps.normal(&format!("{name}.weight"), &[d_out, d_in], 0.0, std)?,
            bias: ps.from_values(&format!("{name}.bias"), &[d_out], bias)?,
        })
    }

    pub(crate) fn detached(&self) -> Self {
        Self {
            weight: self.weight.detach(),
            bias: self.bias.detach(),
        }
    }

    /// `(B, d_in) -> (B, d_out)`
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Per-sample, per-channel normalization with a learned affine map. With the
/// batch size of one used for training this matches batch normalization.
pub struct InstanceNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl InstanceNorm {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.normal(&format!("{name}.gamma"), &[channels], 1.0, INIT_STD)?,
            beta: ps.constant(&format!("{name}.beta"), &[channels], 0.0)?,
        })
    }

    pub(crate) fn detached(&self) -> Self {
        Self {
            gamma: self.gamma.detach(),
            beta: self.beta.detach(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
        let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(&self.gamma.reshape((1, (), 1, 1))?)?
            .broadcast_add(&self.beta.reshape((1, (), 1, 1))?)?)
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

/// Numerically stable logistic function.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(((x * 0.5)?.tanh()? + 1.0)?.affine(0.5, 0.0)?)
}

/// Inverted dropout with a mask drawn from `ctx.rng`.
pub fn dropout(x: &Tensor, p: f64, ctx: &mut ForwardCtx) -> Result<Tensor> {
    if !ctx.dropout || p == 0.0 {
        return Ok(x.clone());
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| {
            if ctx.rng.random::<f64>() < p {
                0.0
            } else {
                scale as f32
            }
        })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}
