//! Dataset loading, synthetic generation and cached model-layout tensors.

use crate::config::GenerateSpec;
use crate::error::{Result, TrainError};
use mgdm_codec::{
    generate_bundle, list_clip_dirs, read_bundle, synth_clip, write_bundle, ClipBundle,
    CorruptionParams, SceneParams,
};
use mgdm_model::{frame_type_one_hot, frames_to_model, mask_to_model, motion_to_model};
use ndarray::ArrayD;
use std::path::Path;

pub struct Dataset {
    pub clips: Vec<ClipBundle>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let dirs = list_clip_dirs(dir)?;
        let mut clips = Vec::with_capacity(dirs.len());
        for d in dirs {
            clips.push(read_bundle(&d)?);
        }
        Ok(Dataset { clips })
    }

    /// Training requires clean frames and masks for every clip.
    pub fn require_supervised(&self) -> Result<()> {
        for c in &self.clips {
            if c.clean.is_none() || c.gt_mask.is_none() {
                return Err(TrainError::Input(format!(
                    "clip {} is unsupervised (no clean frames); cannot train on it",
                    c.clip_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Derive a per-clip stream seed from the dataset seed.
pub fn clip_seed(seed: u64, index: usize, lane: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64) << 8)
        .wrapping_add(lane)
}

/// Generate `clips` synthetic clip bundles under `out`.
pub fn generate_dataset(spec: &GenerateSpec, out: &Path, seed: u64, clips: usize) -> Result<()> {
    if clips == 0 {
        return Err(TrainError::Input("clips must be positive".into()));
    }
    for i in 0..clips {
        let clip_id = format!("clip_{i:05}");
        let scene = SceneParams {
            frames: spec.frames,
            height: spec.height,
            width: spec.width,
            sprites: spec.sprites,
            max_speed: spec.max_speed,
            background_velocity: None,
        };
        let clip = synth_clip(clip_seed(seed, i, 0), &scene, &clip_id);
        let corr = CorruptionParams {
            drop_probability: spec.drop_probability,
            seed: clip_seed(seed, i, 1),
            scope: spec.scope,
        };
        let bundle = generate_bundle(
            &clip,
            &spec.codec,
            &corr,
            spec.mask_threshold,
            spec.mask_dilation,
        )?;
        write_bundle(&bundle, &out.join(&clip_id))?;
        log::info!("generated {clip_id}");
    }
    Ok(())
}

/// Per-clip tensors in model layout, precomputed once per stage.
pub struct ClipTensors {
    /// `[1, 3, N, H, W]`, normalized; present for supervised clips.
    pub clean: Option<ArrayD<f32>>,
    pub corrupted: ArrayD<f32>,
    pub motion: ArrayD<f32>,
    /// `[1, N, 3]`.
    pub type_one_hot: ArrayD<f32>,
    /// `[1, 1, N, H, W]` of 0/1.
    pub gt_mask: Option<ArrayD<f32>>,
}

impl ClipTensors {
    pub fn from_bundle(bundle: &ClipBundle) -> Result<Self> {
        let indices: Vec<u8> = bundle
            .frame_types
            .iter()
            .map(|t| match t {
                mgdm_codec::FrameKind::I => 0u8,
                mgdm_codec::FrameKind::P => 1,
                mgdm_codec::FrameKind::B => 2,
            })
            .collect();
        let one_hot = frame_type_one_hot(&indices)?;
        let n = indices.len();
        let type_one_hot = one_hot
            .into_dyn()
            .into_shape_with_order(ndarray::IxDyn(&[1, n, 3]))
            .expect("one-hot reshape");
        Ok(ClipTensors {
            clean: bundle.clean.as_ref().map(frames_to_model),
            corrupted: frames_to_model(&bundle.corrupted),
            motion: motion_to_model(&bundle.motion),
            type_one_hot,
            gt_mask: bundle.gt_mask.as_ref().map(mask_to_model),
        })
    }
}
