//! Loss terms of both stages and their weighted objectives.
//!
//! Every function takes tensors and returns a scalar (rank-0) tensor so it can
//! be differentiated; all reductions are means.

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::IdentityEmbedder;

/// Probability clamp for binary cross entropy.
pub const PROB_EPS: f64 = 1e-7;
/// Stabilizer added under the square root of the landmark distance.
pub const RADICAL_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Landmark coordinate loss weight.
    pub lambda1: f64,
    /// Robust pixel loss weight.
    pub lambda2: f64,
    /// Identity loss weight.
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 100.0,
            lambda3: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Scalar value of a rank-0 (or single-element) tensor.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.flatten_all()?
        .to_dtype(candle_core::DType::F64)?
        .to_vec1::<f64>()?[0])
}

/// Mean binary cross entropy with probabilities clamped to `[ε, 1-ε]`.
pub fn bce(prediction: &Tensor, target: &Tensor) -> Result<Tensor> {
    same_shape(prediction, target, "bce")?;
    let p = prediction.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let pos = (target * p.log()?)?;
    let neg = (target.affine(-1.0, 1.0)? * p.affine(-1.0, 1.0)?.log()?)?;
    Ok((pos + neg)?.mean_all()?.neg()?)
}

/// `bce` against a constant target.
pub fn bce_const(prediction: &Tensor, target: f64) -> Result<Tensor> {
    bce(prediction, &prediction.ones_like()?.affine(target, 0.0)?)
}

fn average(terms: Vec<Tensor>) -> Result<Tensor> {
    let n = terms.len();
    if n == 0 {
        return Err(Error::invalid("no discriminator outputs"));
    }
    let mut sum = terms[0].clone();
    for t in &terms[1..] {
        sum = (sum + t)?;
    }
    Ok(sum.affine(1.0 / n as f64, 0.0)?)
}

/// `½·[bce(real, 1) + bce(fake, 0)]`, averaged over discriminators.
pub fn discriminator_loss(real_out: &[Tensor], fake_out: &[Tensor]) -> Result<Tensor> {
    if real_out.len() != fake_out.len() {
        return Err(Error::Shape("real and fake discriminator counts differ".into()));
    }
    let terms = real_out
        .iter()
        .zip(fake_out)
        .map(|(r, f)| Ok((bce_const(r, 1.0)? + bce_const(f, 0.0)?)?.affine(0.5, 0.0)?))
        .collect::<Result<Vec<_>>>()?;
    average(terms)
}

/// Non-saturating generator loss `bce(fake, 1)`, averaged over discriminators.
pub fn generator_adversarial_loss(fake_out: &[Tensor]) -> Result<Tensor> {
    average(
        fake_out
            .iter()
            .map(|f| bce_const(f, 1.0))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Mean Euclidean distance between corresponding landmarks. Accepts
/// `(B, 68, 2)` or `(B, 136)` tensors.
pub fn landmark_recon_loss(predicted: &Tensor, target: &Tensor) -> Result<Tensor> {
    if predicted.elem_count() != target.elem_count() || !predicted.elem_count().is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "landmark_recon: {:?} vs {:?}",
            predicted.dims(),
            target.dims()
        )));
    }
    let n = predicted.elem_count() / 2;
    let d = (predicted.reshape((n, 2))? - target.reshape((n, 2))?)?;
    Ok((d.sqr()?.sum(D::Minus1)? + RADICAL_EPS)?.sqrt()?.mean_all()?)
}

/// Per-element robust loss: `0.5 d²` for `|d| < 1`, `|d| - 0.5` otherwise.
pub fn smooth_l12(prediction: &Tensor, target: &Tensor) -> Result<Tensor> {
    same_shape(prediction, target, "smooth_l12")?;
    let d = (prediction - target)?;
    let abs = d.abs()?;
    let quadratic = d.sqr()?.affine(0.5, 0.0)?;
    let linear = abs.affine(1.0, -0.5)?;
    let inner = abs.lt(1.0)?;
    Ok(inner.where_cond(&quadratic, &linear)?.mean_all()?)
}

/// Mean absolute (L1) or mean squared (L2) difference.
pub fn reconstruction_norm(prediction: &Tensor, target: &Tensor, mode: Norm) -> Result<Tensor> {
    same_shape(prediction, target, "reconstruction_norm")?;
    let d = (prediction - target)?;
    Ok(match mode {
        Norm::L1 => d.abs()?.mean_all()?,
        Norm::L2 => d.sqr()?.mean_all()?,
    })
}

/// Mean absolute difference between frozen identity embeddings of `y` and
/// `y_hat`. Refuses an embedder that is still trainable.
pub fn identity_loss(embedder: &IdentityEmbedder, y: &Tensor, y_hat: &Tensor) -> Result<Tensor> {
    if !embedder.is_frozen() {
        return Err(Error::NotFrozen);
    }
    same_shape(y, y_hat, "identity_loss")?;
    let a = embedder.embed_tensor(&y.detach())?;
    let b = embedder.embed_tensor(y_hat)?;
    Ok((a - b)?.abs()?.mean_all()?)
}

/// Stage-I objective `adv + λ1·recon`; generic over `f64` and tensors.
pub fn stage1_objective<T: Weighted>(adv_gl: &T, landmark_recon: &T, w: &LossWeights) -> Result<T> {
    adv_gl.plus_scaled(landmark_recon, w.lambda1)
}

/// Stage-II objective `adv + λ2·l12 + λ3·identity`.
pub fn stage2_objective<T: Weighted>(adv_ge: &T, l12: &T, identity: &T, w: &LossWeights) -> Result<T> {
    adv_ge
        .plus_scaled(l12, w.lambda2)?
        .plus_scaled(identity, w.lambda3)
}

pub fn full_objective<T: Weighted>(stage1: &T, stage2: &T) -> Result<T> {
    stage1.plus_scaled(stage2, 1.0)
}

/// Values that the objectives can combine: plain scalars or scalar tensors.
pub trait Weighted: Sized {
    fn plus_scaled(&self, other: &Self, weight: f64) -> Result<Self>;
}

impl Weighted for f64 {
    fn plus_scaled(&self, other: &Self, weight: f64) -> Result<Self> {
        Ok(self + weight * other)
    }
}

impl Weighted for Tensor {
    fn plus_scaled(&self, other: &Self, weight: f64) -> Result<Self> {
        Ok((self + other.affine(weight, 0.0)?)?)
    }
}

/// Every loss term of one training step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub adv_gl: f64,
    pub landmark_recon: f64,
    pub adv_ge: f64,
    pub l12: f64,
    pub identity: f64,
    pub d_l: f64,
    pub d_e: f64,
    pub stage1_total: f64,
    pub stage2_total: f64,
    pub full: f64,
    pub d_l_real_mean: f64,
    pub d_l_fake_mean: f64,
    pub d_e_real_mean: f64,
    pub d_e_fake_mean: f64,
}

impl LossReport {
    /// Fill the three totals from the individual terms.
    pub fn compute_totals(&mut self, w: &LossWeights) {
        self.stage1_total = self.adv_gl + w.lambda1 * self.landmark_recon;
        self.stage2_total = self.adv_ge + w.lambda2 * self.l12 + w.lambda3 * self.identity;
        self.full = self.stage1_total + self.stage2_total;
    }

    /// Named scalar terms, in a fixed order.
    pub fn terms(&self) -> [(&'static str, f64); 14] {
        [
            ("adv_gl", self.adv_gl),
            ("landmark_recon", self.landmark_recon),
            ("adv_ge", self.adv_ge),
            ("l12", self.l12),
            ("identity", self.identity),
            ("d_l", self.d_l),
            ("d_e", self.d_e),
            ("stage1_total", self.stage1_total),
            ("stage2_total", self.stage2_total),
            ("full", self.full),
            ("d_l_real_mean", self.d_l_real_mean),
            ("d_l_fake_mean", self.d_l_fake_mean),
            ("d_e_real_mean", self.d_e_real_mean),
            ("d_e_fake_mean", self.d_e_fake_mean),
        ]
    }

    /// Name of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.terms()
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(k, _)| k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use proptest::prelude::*;

    fn full(v: f64, shape: &[usize]) -> Tensor {
        Tensor::full(v, shape, &Device::Cpu).unwrap()
    }

    fn val(t: Result<Tensor>) -> f64 {
        scalar(&t.unwrap()).unwrap()
    }

    #[test]
    fn bce_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!(val(bce_const(&full(1.0 - PROB_EPS, &[4, 4]), 1.0)) < 1e-6);
        assert!((val(bce_const(&full(0.5, &[4, 4]), 1.0)) - ln2).abs() < 1e-12);
        assert!((val(bce_const(&full(0.5, &[4, 4]), 0.0)) - ln2).abs() < 1e-12);
        assert!((val(bce_const(&full(PROB_EPS, &[3]), 1.0)) + PROB_EPS.ln()).abs() < 1e-9);
        assert!(bce(&full(0.5, &[2]), &full(1.0, &[3])).is_err());
    }

    #[test]
    fn discriminator_loss_examples() {
        let ln2 = std::f64::consts::LN_2;
        let half = [full(0.5, &[1, 1, 6, 6])];
        assert!((val(discriminator_loss(&half, &half)) - ln2).abs() < 1e-12);
        let ideal = val(discriminator_loss(&[full(1.0, &[4])], &[full(0.0, &[4])]));
        assert!(ideal < 1e-6);
        let right = val(discriminator_loss(&[full(0.9, &[4])], &[full(0.1, &[4])]));
        let swapped = val(discriminator_loss(&[full(0.1, &[4])], &[full(0.9, &[4])]));
        assert!(swapped > right);
    }

    #[test]
    fn discriminator_loss_is_half_the_bce_sum() {
        let real = Tensor::rand(0.05f64, 0.95, (1, 1, 6, 6), &Device::Cpu).unwrap();
        let fake = Tensor::rand(0.05f64, 0.95, (1, 1, 6, 6), &Device::Cpu).unwrap();
        let d = val(discriminator_loss(&[real.clone()], &[fake.clone()]));
        let sum = val(bce_const(&real, 1.0)) + val(bce_const(&fake, 0.0));
        assert!((d - 0.5 * sum).abs() < 1e-12);
    }

    #[test]
    fn dual_discriminators_are_averaged() {
        let a = [full(0.3, &[4]), full(0.8, &[2])];
        let f = [full(0.6, &[4]), full(0.1, &[2])];
        let both = val(discriminator_loss(&a, &f));
        let one = val(discriminator_loss(&a[..1], &f[..1]));
        let two = val(discriminator_loss(&a[1..], &f[1..]));
        assert!((both - 0.5 * (one + two)).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_examples_and_gradient_sign() {
        assert!(val(generator_adversarial_loss(&[full(1.0, &[4])])) < 1e-6);
        assert!((val(generator_adversarial_loss(&[full(0.5, &[4])])) - std::f64::consts::LN_2).abs() < 1e-12);
        let p =
            candle_core::Var::from_tensor(&Tensor::rand(0.01f64, 0.99, (1, 1, 5, 5), &Device::Cpu).unwrap())
                .unwrap();
        let loss = generator_adversarial_loss(&[p.as_tensor().clone()]).unwrap();
        let g = loss.backward().unwrap();
        let g = g
            .get(p.as_tensor())
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        assert!(g.iter().all(|v| *v < 0.0));
    }

    #[test]
    fn landmark_recon_examples() {
        let a = Tensor::rand(0.0f64, 64.0, (1, 68, 2), &Device::Cpu).unwrap();
        assert!(val(landmark_recon_loss(&a, &a)) <= 1e-4 + 1e-12);
        let offset = Tensor::from_vec(vec![3.0f64, 4.0], (1, 1, 2), &Device::Cpu).unwrap();
        let b = a.broadcast_add(&offset).unwrap();
        assert!((val(landmark_recon_loss(&a, &b)) - 5.0).abs() < 1e-6);
    }

    #[test]
    fn smooth_l12_examples() {
        let z = full(0.0, &[3, 4]);
        assert_eq!(val(smooth_l12(&z, &z)), 0.0);
        assert!((val(smooth_l12(&full(0.5, &[3, 4]), &z)) - 0.125).abs() < 1e-12);
        assert!((val(smooth_l12(&full(2.0, &[3, 4]), &z)) - 1.5).abs() < 1e-12);
        assert!((val(smooth_l12(&full(1.0, &[3, 4]), &z)) - 0.5).abs() < 1e-12);
        assert!((val(smooth_l12(&full(-2.0, &[3, 4]), &z)) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn smooth_l12_slope_is_continuous_at_one() {
        let slope = |x: f64| {
            let v = candle_core::Var::new(&[x], &Device::Cpu).unwrap();
            let l = smooth_l12(v.as_tensor(), &Tensor::new(&[0.0f64], &Device::Cpu).unwrap()).unwrap();
            let g = l.backward().unwrap();
            g.get(v.as_tensor()).unwrap().to_vec1::<f64>().unwrap()[0]
        };
        assert!((slope(1.0 - 1e-9) - 1.0).abs() < 1e-6);
        assert!((slope(1.0 + 1e-9) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reconstruction_norm_examples() {
        let z = full(0.0, &[2, 5]);
        let h = full(0.5, &[2, 5]);
        assert_eq!(val(reconstruction_norm(&z, &z, Norm::L1)), 0.0);
        assert_eq!(val(reconstruction_norm(&z, &z, Norm::L2)), 0.0);
        assert!((val(reconstruction_norm(&h, &z, Norm::L1)) - 0.5).abs() < 1e-12);
        assert!((val(reconstruction_norm(&h, &z, Norm::L2)) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn objective_examples() {
        let w = LossWeights::default();
        assert!((stage1_objective(&0.7, &5.0, &w).unwrap() - 10.7).abs() < 1e-12);
        assert!((stage2_objective(&0.7, &0.01, &0.2, &w).unwrap() - 1.72).abs() < 1e-12);
        assert_eq!(full_objective(&0.0, &0.0).unwrap(), 0.0);
        let t = stage1_objective(&full(0.7, &[]), &full(5.0, &[]), &w).unwrap();
        assert!((scalar(&t).unwrap() - 10.7).abs() < 1e-12);
    }

    #[test]
    fn report_totals_and_non_finite_detection() {
        let mut r = LossReport {
            adv_gl: 0.7,
            landmark_recon: 5.0,
            adv_ge: 0.7,
            l12: 0.01,
            identity: 0.2,
            ..Default::default()
        };
        r.compute_totals(&LossWeights::default());
        assert!((r.full - r.stage1_total - r.stage2_total).abs() < 1e-12);
        assert_eq!(r.first_non_finite(), None);
        r.l12 = f64::NAN;
        assert_eq!(r.first_non_finite(), Some("l12"));
    }

    #[test]
    fn negative_weights_rejected() {
        let w = LossWeights {
            lambda1: -1.0,
            ..Default::default()
        };
        assert!(w.validate().is_err());
    }

    fn tensor(v: &[f64], rows: usize) -> Tensor {
        Tensor::from_vec(v.to_vec(), (rows, v.len() / rows), &Device::Cpu).unwrap()
    }

    fn reversed_rows(t: &Tensor) -> Tensor {
        let n = t.dim(0).unwrap();
        let idx = Tensor::from_vec((0..n as u32).rev().collect::<Vec<_>>(), n, &Device::Cpu).unwrap();
        t.index_select(&idx, 0).unwrap()
    }

    proptest! {
        #[test]
        fn smooth_l12_bounded_by_l1(v in prop::collection::vec(-3.0f64..3.0, 12), w in prop::collection::vec(-3.0f64..3.0, 12)) {
            let a = tensor(&v, 3);
            let b = tensor(&w, 3);
            let s = val(smooth_l12(&a, &b));
            let l1 = val(reconstruction_norm(&a, &b, Norm::L1));
            prop_assert!(s <= l1 + 1e-12);
            if v != w {
                prop_assert!(s < l1);
            }
        }

        #[test]
        fn losses_invariant_to_batch_permutation(v in prop::collection::vec(0.01f64..0.99, 16), w in prop::collection::vec(0.01f64..0.99, 16)) {
            let a = tensor(&v, 4);
            let b = tensor(&w, 4);
            let (ra, rb) = (reversed_rows(&a), reversed_rows(&b));
            let pairs = [
                (val(bce(&a, &b.ge(0.5).unwrap().to_dtype(DType::F64).unwrap())),
                 val(bce(&ra, &rb.ge(0.5).unwrap().to_dtype(DType::F64).unwrap()))),
                (val(smooth_l12(&a, &b)), val(smooth_l12(&ra, &rb))),
                (val(reconstruction_norm(&a, &b, Norm::L2)), val(reconstruction_norm(&ra, &rb, Norm::L2))),
                (val(landmark_recon_loss(&a, &b)), val(landmark_recon_loss(&ra, &rb))),
                (val(discriminator_loss(&[a.clone()], &[b.clone()])), val(discriminator_loss(&[ra.clone()], &[rb.clone()]))),
            ];
            for (x, y) in pairs {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
