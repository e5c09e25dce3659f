//! Distribution- and feature-level scores: Inception Score and a learned
//! perceptual distance.

use candle_core::{Tensor, D};

use crate::data::Image;
use crate::error::{Error, Result};
use crate::identity::IdentityEmbedder;

/// `exp(mean_x KL(p(y|x) ‖ p(y)))` from per-image class probabilities.
pub fn inception_score(probabilities: &[Vec<f64>]) -> Result<f64> {
    let n = probabilities.len();
    if n == 0 {
        return Err(Error::invalid("inception score of an empty image set"));
    }
    let k = probabilities[0].len();
    for p in probabilities {
        let total: f64 = p.iter().sum();
        if p.len() != k || p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("classifier output is not a probability vector"));
        }
    }
    let marginal: Vec<f64> = (0..k)
        .map(|j| probabilities.iter().map(|p| p[j]).sum::<f64>() / n as f64)
        .collect();
    let mean_kl = probabilities
        .iter()
        .map(|p| {
            p.iter()
                .zip(&marginal)
                .filter(|(pj, _)| **pj > 0.0)
                .map(|(pj, mj)| pj * (pj / mj).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / n as f64;
    Ok(mean_kl.exp())
}

/// Sum over encoder stages of the mean squared difference between
/// channel-normalized feature maps of the frozen embedder.
pub fn lpips_like(net: &IdentityEmbedder, a: &Image, b: &Image) -> Result<f64> {
    if !net.is_frozen() {
        return Err(Error::NotFrozen);
    }
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape("lpips_like inputs differ in size".into()));
    }
    let (dev, dt) = (net.device().clone(), net.dtype());
    let x = Image::batch_tensor(&[a, b], &dev, dt)?;
    let mut total = 0.0;
    for f in net.features(&x)? {
        let norm = (f.sqr()?.sum_keepdim(1)? + 1e-10)?.sqrt()?;
        let unit = f.broadcast_div(&norm)?;
        let d = (unit.get(0)? - unit.get(1)?)?;
        // mean over space, summed over channels, as in the learned metric
        let per_pixel = d.sqr()?.sum(0)?;
        total += per_pixel
            .mean_all()?
            .to_dtype(candle_core::DType::F64)?
            .to_scalar::<f64>()?;
    }
    Ok(total)
}

/// Row-wise probabilities from a `(B, K)` logits tensor.
pub(crate) fn probabilities(logits: &Tensor) -> Result<Vec<Vec<f64>>> {
    let max = logits.max_keepdim(D::Minus1)?;
    let e = logits.broadcast_sub(&max)?.exp()?;
    let p = e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?;
    Ok(p.to_dtype(candle_core::DType::F64)?.to_vec2::<f64>()?)
}
