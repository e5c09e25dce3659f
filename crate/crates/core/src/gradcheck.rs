//! Central finite-difference checks of autodiff gradients.
//!
//! Functions are evaluated in double precision; the analytic gradient comes
//! from `backward` on a `Var`, the numeric one from
//! `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every element `i`.

use candle_core::{DType, Tensor, Var};

use crate::error::{Error, Result};
use crate::losses::scalar;

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`; 0 when both
    /// gradients vanish.
    pub fn relative_error(&self) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = self
            .analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| a - n)
            .collect();
        let scale = norm(&self.analytic).max(norm(&self.numeric));
        if scale == 0.0 {
            0.0
        } else {
            norm(&diff) / scale
        }
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_error(&self) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max)
    }
}

/// Compare the gradient of the scalar function `f` at `x` with central
/// differences of step `h`. `x` must be an `f64` tensor.
pub fn check(f: impl Fn(&Tensor) -> Result<Tensor>, x: &Tensor, h: f64) -> Result<GradCheck> {
    if x.dtype() != DType::F64 {
        return Err(Error::invalid("gradient checks run in f64"));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let var = Var::from_tensor(&x.detach())?;
    let y = f(var.as_tensor())?;
    if y.elem_count() != 1 {
        return Err(Error::Shape(format!(
            "gradient check needs a scalar, got {:?}",
            y.dims()
        )));
    }
    let grads = y.backward()?;
    let analytic = match grads.get(var.as_tensor()) {
        Some(g) => g.flatten_all()?.to_vec1::<f64>()?,
        None => vec![0.0; x.elem_count()],
    };

    let shape = x.shape().clone();
    let base = x.flatten_all()?.to_vec1::<f64>()?;
    let mut numeric = Vec::with_capacity(base.len());
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + h;
        let plus = scalar(&f(&Tensor::from_slice(&probe, &shape, x.device())?)?)?;
        probe[i] = base[i] - h;
        let minus = scalar(&f(&Tensor::from_slice(&probe, &shape, x.device())?)?)?;
        probe[i] = base[i];
        numeric.push((plus - minus) / (2.0 * h));
    }
    Ok(GradCheck { analytic, numeric })
}
