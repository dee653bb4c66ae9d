//! Conversions between the on-disk clip layout `[N, H, W, C]` and the model
//! layout `[B, C, N, H, W]`, plus depth/space rearrangements.

use crate::error::{ModelError, Result};
use mgdm_tensor::{Scalar, Var};
use ndarray::{Array2, Array3, Array4, ArrayD, IxDyn};

/// u8 frames `[N, H, W, 3]` -> normalized `[1, 3, N, H, W]` in [-1, 1].
pub fn frames_to_model(frames: &Array4<u8>) -> ArrayD<f32> {
    let (n, h, w) = (frames.shape()[0], frames.shape()[1], frames.shape()[2]);
    let mut out = ArrayD::<f32>::zeros(IxDyn(&[1, 3, n, h, w]));
    for fi in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    out[[0, ch, fi, y, x]] = frames[[fi, y, x, ch]] as f32 / 127.5 - 1.0;
                }
            }
        }
    }
    out
}

/// Normalized `[1, 3, N, H, W]` -> u8 frames `[N, H, W, 3]`, clamped.
pub fn model_to_frames(x: &ArrayD<f32>) -> Array4<u8> {
    let (n, h, w) = (x.shape()[2], x.shape()[3], x.shape()[4]);
    let mut out = Array4::<u8>::zeros((n, h, w, 3));
    for fi in 0..n {
        for y in 0..h {
            for x2 in 0..w {
                for ch in 0..3 {
                    let v = (x[[0, ch, fi, y, x2]] + 1.0) * 127.5;
                    out[[fi, y, x2, ch]] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    out
}

/// Motion field `[N, H, W, 4]` -> `[1, 4, N, H, W]`.
pub fn motion_to_model(motion: &Array4<f32>) -> ArrayD<f32> {
    let (n, h, w) = (motion.shape()[0], motion.shape()[1], motion.shape()[2]);
    let mut out = ArrayD::<f32>::zeros(IxDyn(&[1, 4, n, h, w]));
    for fi in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..4 {
                    out[[0, ch, fi, y, x]] = motion[[fi, y, x, ch]];
                }
            }
        }
    }
    out
}

/// Mask `[N, H, W]` (0/1) -> `[1, 1, N, H, W]` float.
pub fn mask_to_model(mask: &Array3<u8>) -> ArrayD<f32> {
    let (n, h, w) = (mask.shape()[0], mask.shape()[1], mask.shape()[2]);
    let mut out = ArrayD::<f32>::zeros(IxDyn(&[1, 1, n, h, w]));
    for fi in 0..n {
        for y in 0..h {
            for x in 0..w {
                out[[0, 0, fi, y, x]] = mask[[fi, y, x]] as f32;
            }
        }
    }
    out
}

/// One-hot frame-type tokens. The tokenizer maps I -> 0, P -> 1, B -> 2.
pub fn frame_type_one_hot(indices: &[u8]) -> Result<Array2<f32>> {
    let mut out = Array2::<f32>::zeros((indices.len(), 3));
    for (i, &idx) in indices.iter().enumerate() {
        if idx > 2 {
            return Err(ModelError::Input(format!(
                "frame type token {idx} outside the I/P/B vocabulary"
            )));
        }
        out[[i, idx as usize]] = 1.0;
    }
    Ok(out)
}

/// Stack per-clip arrays along a new batch axis.
pub fn stack_batch<F: Scalar>(items: &[ArrayD<F>]) -> ArrayD<F> {
    assert!(!items.is_empty());
    let views: Vec<_> = items.iter().map(|a| a.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("stack_batch: shape mismatch")
}

/// Depth-to-space on video tensors: `[B, C*f^2, N, h, w]` -> `[B, C, N, h*f, w*f]`.
/// Channel `c*f^2 + dy*f + dx` lands on pixel offset `(dy, dx)`.
pub fn depth_to_space<'g, F: Scalar>(x: Var<'g, F>, f: usize) -> Var<'g, F> {
    let d = x.shape();
    let (b, cf2, n, h, w) = (d[0], d[1], d[2], d[3], d[4]);
    assert!(cf2 % (f * f) == 0, "channels not divisible by f^2");
    let ch = cf2 / (f * f);
    x.reshape(&[b, ch, f, f, n, h, w])
        .permute(&[0, 1, 4, 5, 2, 6, 3])
        .reshape(&[b, ch, n, h * f, w * f])
}

/// Inverse of [`depth_to_space`].
pub fn space_to_depth<'g, F: Scalar>(x: Var<'g, F>, f: usize) -> Var<'g, F> {
    let d = x.shape();
    let (b, ch, n, hf, wf) = (d[0], d[1], d[2], d[3], d[4]);
    assert!(hf % f == 0 && wf % f == 0, "spatial dims not divisible by f");
    let (h, w) = (hf / f, wf / f);
    x.reshape(&[b, ch, n, h, f, w, f])
        .permute(&[0, 1, 4, 6, 2, 3, 5])
        .reshape(&[b, ch * f * f, n, h, w])
}

/// Fold the frame axis into the batch: `[B, C, N, H, W]` -> `[B*N, C, H, W]`.
pub fn fold_frames<'g, F: Scalar>(x: Var<'g, F>) -> Var<'g, F> {
    let d = x.shape();
    let (b, c, n, h, w) = (d[0], d[1], d[2], d[3], d[4]);
    x.permute(&[0, 2, 1, 3, 4]).reshape(&[b * n, c, h, w])
}

/// Inverse of [`fold_frames`].
pub fn unfold_frames<'g, F: Scalar>(x: Var<'g, F>, n: usize) -> Var<'g, F> {
    let d = x.shape();
    let (bn, c, h, w) = (d[0], d[1], d[2], d[3]);
    let b = bn / n;
    x.reshape(&[b, n, c, h, w]).permute(&[0, 2, 1, 3, 4])
}
