use candle_core::Tensor;

use crate::codec::render_tensor;
use crate::error::{Error, Result};
use crate::identity::IdentityEmbedder;
use crate::losses::{
    discriminator_loss, generator_adversarial_loss, identity_loss, landmark_recon_loss, scalar, smooth_l12,
    stage1_objective, stage2_objective, LossReport,
};
use crate::nn::ForwardCtx;
use crate::train::model::{Batch, Model};

fn mean_output(outs: &[Tensor]) -> Result<f64> {
    let mut total = 0.0;
    for o in outs {
        total += scalar(&o.mean_all()?)?;
    }
    Ok(total / outs.len() as f64)
}

fn finite(term: &'static str, value: f64, step: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { term, step })
    }
}

/// One optimization step in the fixed order D_l, G_l, D_e, G_e.
///
/// 1. D_l: real landmark image (target landmarks rendered against `x`) vs
///    the detached G_l output.
/// 2. G_l: adversarial + weighted coordinate loss.
/// 3. D_e: `(y, x)` vs `(G_e(x̂), x)` with the generator output detached.
/// 4. G_e: adversarial + weighted robust pixel + identity loss. The gradient
///    also flows through the rendered landmark image into G_l, whose
///    optimizer takes a second step, unless `detach_stage1_in_stage2` is set.
///
/// A non-finite loss aborts the step before any parameter changes for that
/// phase, naming the offending term.
pub fn train_step(
    model: &mut Model,
    batch: &Batch,
    embedder: Option<&IdentityEmbedder>,
) -> Result<LossReport> {
    let cfg = model.cfg.clone();
    let step = model.step + 1;
    let w = cfg.weights;
    let render = cfg.render_config();
    if cfg.use_identity_loss && embedder.is_none() {
        return Err(Error::invalid("identity loss enabled but no embedder given"));
    }
    let labels = batch.labels();
    let routing = cfg.label_routing;
    let none: &[&Tensor] = &[];
    let gl_labels = if routing.to_landmark_generator() {
        &labels[..]
    } else {
        none
    };
    let ge_labels = if routing.to_expression_generator() {
        &labels[..]
    } else {
        none
    };
    let mut report = LossReport {
        step,
        ..Default::default()
    };

    // Stage I.
    let stage1 = {
        let mut ctx = ForwardCtx::new(true, &mut model.noise_rng);
        model.g_l.forward(&batch.x, gl_labels, &render, &mut ctx)?
    };
    let real_l = render_tensor(&batch.landmarks, &batch.x, &render)?;
    {
        let real_out = model.d_l.forward(&real_l)?;
        let fake_out = model.d_l.forward(&stage1.image.detach())?;
        let d_l = discriminator_loss(&real_out, &fake_out)?;
        report.d_l = finite("d_l", scalar(&d_l)?, step)?;
        report.d_l_real_mean = mean_output(&real_out)?;
        report.d_l_fake_mean = mean_output(&fake_out)?;
        let grads = d_l.backward()?;
        model.opt_dl.step(model.d_l.params(), &grads)?;
    }
    {
        let adv = generator_adversarial_loss(&model.d_l.forward(&stage1.image)?)?;
        report.adv_gl = finite("adv_gl", scalar(&adv)?, step)?;
        let objective = if cfg.use_landmark_recon {
            let recon = landmark_recon_loss(&stage1.coords, &batch.landmarks)?;
            report.landmark_recon = finite("landmark_recon", scalar(&recon)?, step)?;
            stage1_objective(&adv, &recon, &w)?
        } else {
            adv
        };
        let grads = objective.backward()?;
        model.opt_gl.step(model.g_l.params(), &grads)?;
    }

    // Stage II, with a fresh stage-I forward under the updated G_l.
    let fake_e = {
        let mut ctx = ForwardCtx::new(true, &mut model.noise_rng);
        let mut out = model.g_l.forward(&batch.x, gl_labels, &render, &mut ctx)?;
        if cfg.detach_stage1_in_stage2 {
            out.image = out.image.detach();
        }
        let x_hat = Tensor::cat(&[&batch.x, &out.image], 1)?;
        model.g_e.forward(&x_hat, ge_labels, &mut ctx)?
    };
    {
        let real_out = model.d_e.forward(&Tensor::cat(&[&batch.y, &batch.x], 1)?)?;
        let fake_out = model
            .d_e
            .forward(&Tensor::cat(&[&fake_e.detach(), &batch.x], 1)?)?;
        let d_e = discriminator_loss(&real_out, &fake_out)?;
        report.d_e = finite("d_e", scalar(&d_e)?, step)?;
        report.d_e_real_mean = mean_output(&real_out)?;
        report.d_e_fake_mean = mean_output(&fake_out)?;
        let grads = d_e.backward()?;
        model.opt_de.step(model.d_e.params(), &grads)?;
    }
    {
        let fake_out = model.d_e.forward(&Tensor::cat(&[&fake_e, &batch.x], 1)?)?;
        let adv = generator_adversarial_loss(&fake_out)?;
        report.adv_ge = finite("adv_ge", scalar(&adv)?, step)?;
        let l12 = smooth_l12(&fake_e, &batch.y)?;
        report.l12 = finite("l12", scalar(&l12)?, step)?;
        let id = match (cfg.use_identity_loss, embedder) {
            (true, Some(e)) => {
                let id = identity_loss(e, &batch.y, &fake_e)?;
                report.identity = finite("identity", scalar(&id)?, step)?;
                id
            }
            _ => adv.zeros_like()?,
        };
        let objective = stage2_objective(&adv, &l12, &id, &w)?;
        let grads = objective.backward()?;
        model.opt_ge.step(model.g_e.params(), &grads)?;
        if !cfg.detach_stage1_in_stage2 {
            model.opt_gl.step(model.g_l.params(), &grads)?;
        }
    }

    report.compute_totals(&w);
    if let Some(term) = report.first_non_finite() {
        return Err(Error::NonFinite { term, step });
    }
    model.step = step;
    Ok(report)
}
