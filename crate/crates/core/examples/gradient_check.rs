//! Compare analytic gradients of the training objectives and the landmark
//! renderer with central finite differences.
//!
//! cargo run --release --example gradient_check

use candle_core::{DType, Device, Tensor};
use landmark_expr::codec::{render_tensor, RenderConfig};
use landmark_expr::gradcheck::{check, DEFAULT_STEP};
use landmark_expr::losses::{landmark_recon_loss, smooth_l12};

fn main() -> landmark_expr::Result<()> {
    let dev = Device::Cpu;
    let target = Tensor::randn(0.0, 1.0, (2, 3, 4, 4), &dev)?.to_dtype(DType::F64)?;
    let x = Tensor::randn(0.0, 1.0, (2, 3, 4, 4), &dev)?.to_dtype(DType::F64)?;
    let g = check(|x| smooth_l12(x, &target), &x, DEFAULT_STEP)?;
    println!(
        "smooth L1,2 reconstruction: relative error {:.2e}",
        g.relative_error()
    );

    let lm_target = Tensor::rand(0.0f64, 16.0, (1, 68, 2), &dev)?;
    let lm = Tensor::rand(0.0f64, 16.0, (1, 68, 2), &dev)?;
    let g = check(|p| landmark_recon_loss(p, &lm_target), &lm, DEFAULT_STEP)?;
    println!(
        "landmark reconstruction:    relative error {:.2e}",
        g.relative_error()
    );

    // a few well-separated points on a small canvas
    let coords = Tensor::new(&[[[3.3f64, 4.1], [10.7, 5.2], [6.4, 11.6]]], &dev)?;
    let source = Tensor::rand(-1.0, 1.0, (1, 3, 16, 16), &dev)?.to_dtype(DType::F64)?;
    let weights = Tensor::rand(0.0, 1.0, (1, 3, 16, 16), &dev)?.to_dtype(DType::F64)?;
    let cfg = RenderConfig::for_resolution(16);
    let g = check(
        |c| Ok(render_tensor(c, &source, &cfg)?.mul(&weights)?.sum_all()?),
        &coords,
        DEFAULT_STEP,
    )?;
    println!(
        "landmark renderer:          relative error {:.2e} (max abs {:.2e})",
        g.relative_error(),
        g.max_abs_error()
    );
    Ok(())
}
