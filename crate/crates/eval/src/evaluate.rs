//! End-to-end recovery evaluation over a dataset directory.

use crate::error::Result;
use crate::metrics::{mask_metrics, psnr_frames, ssim_frames};
use crate::report::{sha256_hex, ClipRecord, MetricsReport};
use mgdm_codec::{list_clip_dirs, read_bundle};
use mgdm_train::{clip_seed, models_from_checkpoint, recover_clip, Checkpoint, RecoverySettings};
use std::path::Path;
use std::time::Instant;

pub struct EvaluateOptions {
    pub seed: u64,
    /// Record wall time in the report (off by default so identical runs
    /// produce byte-identical reports).
    pub timing: bool,
    pub soft_compose: bool,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            seed: 0,
            timing: false,
            soft_compose: false,
        }
    }
}

/// Run recovery plus mask prediction on every clip and assemble the report.
/// Unsupervised clips (no clean frames) are listed but not scored.
pub fn evaluate(
    ckpt_path: &Path,
    dataset_dir: &Path,
    opts: &EvaluateOptions,
) -> Result<MetricsReport> {
    let started = Instant::now();
    let ckpt_bytes = std::fs::read(ckpt_path)
        .map_err(|e| crate::error::EvalError::io(ckpt_path.display().to_string(), e))?;
    let ckpt = Checkpoint::from_bytes(&ckpt_bytes, &ckpt_path.display().to_string())?;
    let (models, params) = models_from_checkpoint(&ckpt)?;
    let clip_dirs = list_clip_dirs(dataset_dir)?;

    let mut clips = Vec::with_capacity(clip_dirs.len());
    for (i, dir) in clip_dirs.iter().enumerate() {
        let bundle = read_bundle(dir)?;
        let settings = RecoverySettings {
            sample_steps: models.cfg.sample_steps,
            noise_seed: clip_seed(opts.seed, i, 7),
            soft_compose: opts.soft_compose,
        };
        let out = recover_clip(&models, &params, ckpt.latent_scale, &bundle, &settings)?;
        let record = match (&bundle.clean, &bundle.gt_mask) {
            (Some(clean), gt) => {
                let (iou, f1) = match gt {
                    Some(gt) => {
                        let (i2, f2) = mask_metrics(&out.mask.binary, gt)?;
                        (Some(i2), Some(f2))
                    }
                    None => (None, None),
                };
                ClipRecord {
                    record: "clip".into(),
                    clip_id: bundle.clip_id.clone(),
                    supervised: true,
                    psnr_corrupted: Some(psnr_frames(&bundle.corrupted, clean)?),
                    psnr_composed: Some(psnr_frames(&out.x_tilde, clean)?),
                    psnr_recovered: Some(psnr_frames(&out.y_hat, clean)?),
                    ssim_recovered: Some(ssim_frames(&out.y_hat, clean)?),
                    mask_iou: iou,
                    mask_f1: f1,
                }
            }
            (None, _) => {
                log::warn!("clip {}: unsupervised, metrics skipped", bundle.clip_id);
                ClipRecord {
                    record: "clip".into(),
                    clip_id: bundle.clip_id.clone(),
                    supervised: false,
                    psnr_corrupted: None,
                    psnr_composed: None,
                    psnr_recovered: None,
                    ssim_recovered: None,
                    mask_iou: None,
                    mask_f1: None,
                }
            }
        };
        log::info!(
            "evaluated {} ({}/{})",
            bundle.clip_id,
            i + 1,
            clip_dirs.len()
        );
        clips.push(record);
    }

    let wall = opts.timing.then(|| started.elapsed().as_secs_f64());
    Ok(MetricsReport::from_clips(
        clips,
        sha256_hex(&ckpt.config_echo),
        sha256_hex(&ckpt_bytes),
        opts.seed,
        wall,
    ))
}
