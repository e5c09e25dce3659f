//! Small convolutional feature extractor shared by the identity embedder and
//! the expression classifier.

use candle_core::{DType, Tensor, D};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Image;
use crate::error::{Error, Result};
use crate::nn::layers::{leaky_relu, Conv2d, InstanceNorm, Linear, INIT_STD};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::params::ParamStore;

const STAGES: usize = 4;
const SLOPE: f64 = 0.2;

pub(crate) struct Backbone {
    convs: Vec<(Conv2d, Option<InstanceNorm>)>,
    proj: Linear,
}

impl Backbone {
    pub(crate) fn new(ps: &mut ParamStore, base: usize, out_dim: usize) -> Result<Self> {
        let mut convs = Vec::with_capacity(STAGES);
        let mut c_in = 3;
        for i in 0..STAGES {
            let c_out = base << i.min(2);
            // the last stage stays unnormalized: instance norm followed by
            // global pooling would erase most of what the stage encodes
            let normed = i > 0 && i + 1 < STAGES;
            convs.push((
                Conv2d::new(ps, &format!("conv.{i}"), c_in, c_out, 4, 2, 1, !normed)?,
                normed
                    .then(|| InstanceNorm::new(ps, &format!("conv.{i}.norm"), c_out))
                    .transpose()?,
            ));
            c_in = c_out;
        }
        let proj = Linear::new(ps, "proj", c_in, out_dim, INIT_STD * 5.0)?;
        Ok(Self { convs, proj })
    }

    pub(crate) fn detached(&self) -> Self {
        Self {
            convs: self
                .convs
                .iter()
                .map(|(c, n)| (c.detached(), n.as_ref().map(InstanceNorm::detached)))
                .collect(),
            proj: self.proj.detached(),
        }
    }

    /// Activations after every stage.
    pub(crate) fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.convs.len());
        for (conv, norm) in &self.convs {
            let mut h = conv.forward(outs.last().unwrap_or(x))?;
            if let Some(n) = norm {
                h = n.forward(&h)?;
            }
            outs.push(leaky_relu(&h, SLOPE)?);
        }
        Ok(outs)
    }

    /// Globally pooled, projected feature `(B, out_dim)`.
    pub(crate) fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let feats = self.features(x)?;
        let last = feats.last().expect("at least one stage");
        let pooled = last.mean(D::Minus1)?.mean(D::Minus1)?;
        self.proj.forward(&pooled)
    }
}

pub(crate) fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(D::Minus1)? + 1e-12)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

pub(crate) fn log_softmax(logits: &Tensor) -> Result<Tensor> {
    let max = logits.detach().max_keepdim(D::Minus1)?;
    let shifted = logits.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Cross-entropy training of `logits_fn` on labeled images; returns final
/// training accuracy.
pub(crate) fn fit(
    params: &ParamStore,
    logits_fn: &dyn Fn(&Tensor) -> Result<Tensor>,
    images: &[&Image],
    labels: &[usize],
    n_classes: usize,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    if images.len() != labels.len() || images.is_empty() {
        return Err(Error::invalid("classifier needs a non-empty labeled image set"));
    }
    let device = params.device().clone();
    let dtype = params.dtype();
    let mut opt = Adam::new(AdamConfig::new(1e-3, 0.9, 0.999));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<&Image> = chunk.iter().map(|&i| images[i]).collect();
            let x = Image::batch_tensor(&batch, &device, dtype)?;
            let target = one_hot_rows(chunk.iter().map(|&i| labels[i]), n_classes, &device, dtype)?;
            let logp = log_softmax(&logits_fn(&x)?)?;
            let loss = (logp * target)?
                .sum_all()?
                .affine(-1.0 / chunk.len() as f64, 0.0)?;
            let grads = loss.backward()?;
            opt.step(params, &grads)?;
        }
    }
    let mut correct = 0;
    for (chunk_imgs, chunk_labels) in images.chunks(16).zip(labels.chunks(16)) {
        let x = Image::batch_tensor(chunk_imgs, &device, dtype)?;
        let pred = logits_fn(&x)?.argmax(D::Minus1)?.to_vec1::<u32>()?;
        correct += pred
            .iter()
            .zip(chunk_labels)
            .filter(|(p, l)| **p as usize == **l)
            .count();
    }
    Ok(correct as f64 / images.len() as f64)
}

pub(crate) fn one_hot_rows(
    idx: impl Iterator<Item = usize>,
    n: usize,
    device: &candle_core::Device,
    dtype: DType,
) -> Result<Tensor> {
    let mut rows = Vec::new();
    let mut count = 0;
    for i in idx {
        let mut r = vec![0f32; n];
        r[i] = 1.0;
        rows.extend(r);
        count += 1;
    }
    Ok(Tensor::from_vec(rows, (count, n), device)?.to_dtype(dtype)?)
}
