//! End-to-end recovery for one clip: encode the corrupted frames, sample the
//! diffusion model under metadata conditioning, predict the corruption mask
//! from the final-step attention prior, hard-compose, and refine.

use crate::data::ClipTensors;
use crate::error::{Result, TrainError};
use mgdm_codec::ClipBundle;
use mgdm_model::{
    ddim_sample, fold_frames, hard_compose, model_to_frames, soft_compose, Models, PseudoMask,
};
use mgdm_tensor::rng::{seeded_rng, streams};
use mgdm_tensor::{Ctx, Graph, ParamStore, Scalar, TrainMask, Var};
use ndarray::{Array3, Array4, ArrayD, IxDyn};
use std::cell::RefCell;

pub struct RecoveryOutput {
    /// Decoded diffusion output.
    pub y_tilde: Array4<u8>,
    /// Hard-composed frames (intact pixels bit-exact from the input).
    pub x_tilde: Array4<u8>,
    /// Refined output.
    pub y_hat: Array4<u8>,
    pub mask: PseudoMask,
}

pub fn gaussian_like(dims: &[usize], seed: u64, stream: u64) -> ArrayD<f32> {
    let mut rng = seeded_rng(seed, stream);
    let mut a = ArrayD::<f32>::zeros(IxDyn(dims));
    for e in a.iter_mut() {
        *e = f32::sample_standard_normal(&mut rng);
    }
    a
}

/// Encode frames to scaled latents without touching the tape.
pub fn encode_latent(
    models: &Models,
    params: &ParamStore<f32>,
    frames: &ArrayD<f32>,
    latent_scale: f64,
) -> Result<ArrayD<f32>> {
    let g = Graph::<f32>::new();
    let ctx = Ctx::new(&g, params, TrainMask::None);
    let latent = models.ae.encode(&ctx, ctx.constant(frames.clone()))?;
    Ok(latent.value().mapv(|v| v / latent_scale as f32))
}

/// Metadata representations as plain arrays (r_m, p_m).
pub fn metadata_arrays(
    models: &Models,
    params: &ParamStore<f32>,
    tensors: &ClipTensors,
) -> Result<(ArrayD<f32>, ArrayD<f32>)> {
    let g = Graph::<f32>::new();
    let ctx = Ctx::new(&g, params, TrainMask::None);
    let md = models.dme.forward(
        &ctx,
        ctx.constant(tensors.motion.clone()),
        ctx.constant(tensors.type_one_hot.clone()),
    )?;
    Ok((md.r_m.value(), md.p_m.value()))
}

/// Run the deterministic sampler conditioned on the corrupted latent and
/// metadata tokens. Returns the final latent and the attention prior tapped
/// from the last denoising call.
pub fn sample_latent(
    models: &Models,
    params: &ParamStore<f32>,
    cond_latent: &ArrayD<f32>,
    r_m: &ArrayD<f32>,
    sample_steps: usize,
    noise_seed: u64,
) -> Result<(ArrayD<f32>, ArrayD<f32>)> {
    let init = gaussian_like(&cond_latent.shape().to_vec(), noise_seed, streams::SAMPLER);
    let last_att: RefCell<Option<ArrayD<f32>>> = RefCell::new(None);
    let fallible: RefCell<Option<TrainError>> = RefCell::new(None);
    let out = ddim_sample(&models.schedule, sample_steps, init, |x_t, t| {
        let g = Graph::<f32>::new();
        let ctx = Ctx::new(&g, params, TrainMask::None);
        let res = models.unet.forward(
            &ctx,
            ctx.constant(x_t.clone()),
            ctx.constant(cond_latent.clone()),
            &[t],
            ctx.constant(r_m.clone()),
        );
        match res {
            Ok(o) => {
                *last_att.borrow_mut() = Some(o.att_prior.value());
                o.eps.value()
            }
            Err(e) => {
                *fallible.borrow_mut() = Some(e.into());
                ArrayD::zeros(x_t.raw_dim())
            }
        }
    })?;
    if let Some(e) = fallible.into_inner() {
        return Err(e);
    }
    let att = last_att
        .into_inner()
        .ok_or_else(|| TrainError::Internal("sampler made no model calls".into()))?;
    Ok((out, att))
}

/// Mask prediction from cached arrays.
pub fn predict_mask_from(
    models: &Models,
    params: &ParamStore<f32>,
    x_l: &ArrayD<f32>,
    p_m: &ArrayD<f32>,
    att: &ArrayD<f32>,
) -> Result<PseudoMask> {
    let g = Graph::<f32>::new();
    let ctx = Ctx::new(&g, params, TrainMask::None);
    let probs = models
        .pmp
        .forward(
            &ctx,
            ctx.constant(x_l.clone()),
            ctx.constant(p_m.clone()),
            ctx.constant(att.clone()),
        )?
        .value();
    let mut masks = PseudoMask::from_model_output(&probs, models.cfg.mask_threshold);
    Ok(masks.remove(0))
}

/// Refinement forward on composed frames, returning u8 output.
pub fn refine_frames(
    models: &Models,
    params: &ParamStore<f32>,
    x_tilde: &Array4<u8>,
    mask: &Array3<u8>,
) -> Result<Array4<u8>> {
    let n = x_tilde.shape()[0];
    let x_norm = mgdm_model::frames_to_model(x_tilde);
    let m_norm = mgdm_model::mask_to_model(mask);
    let g = Graph::<f32>::new();
    let ctx = Ctx::new(&g, params, TrainMask::None);
    let x_v: Var<'_, f32> = ctx.constant(x_norm);
    let m_v = ctx.constant(m_norm);
    let y = models
        .prm
        .forward(&ctx, fold_frames(x_v), fold_frames(m_v))?;
    // back to [1, 3, N, H, W]
    let d = y.shape();
    let (h, w) = (d[2], d[3]);
    let y = y.reshape(&[1, n, 3, h, w]).permute(&[0, 2, 1, 3, 4]);
    Ok(model_to_frames(&y.value()))
}

pub struct RecoverySettings {
    pub sample_steps: usize,
    pub noise_seed: u64,
    pub soft_compose: bool,
}

/// Full pipeline for one clip bundle.
pub fn recover_clip(
    models: &Models,
    params: &ParamStore<f32>,
    latent_scale: f64,
    bundle: &ClipBundle,
    settings: &RecoverySettings,
) -> Result<RecoveryOutput> {
    let tensors = ClipTensors::from_bundle(bundle)?;
    let x_l = encode_latent(models, params, &tensors.corrupted, latent_scale)?;
    let (r_m, p_m) = metadata_arrays(models, params, &tensors)?;
    let (y_lat, att) = sample_latent(
        models,
        params,
        &x_l,
        &r_m,
        settings.sample_steps,
        settings.noise_seed,
    )?;

    // decode the sampled latent
    let y_tilde = {
        let g = Graph::<f32>::new();
        let ctx = Ctx::new(&g, params, TrainMask::None);
        let scaled = ctx.constant(y_lat.mapv(|v| v * latent_scale as f32));
        let dec = models.ae.decode(&ctx, scaled);
        model_to_frames(&dec.value())
    };

    let mask = predict_mask_from(models, params, &x_l, &p_m, &att)?;
    let x_tilde = if settings.soft_compose {
        soft_compose(&bundle.corrupted, &y_tilde, &mask.probs)?
    } else {
        hard_compose(&bundle.corrupted, &y_tilde, &mask.binary)?
    };
    let y_hat = refine_frames(models, params, &x_tilde, &mask.binary)?;
    Ok(RecoveryOutput {
        y_tilde,
        x_tilde,
        y_hat,
        mask,
    })
}
