use crate::error::{CodecError, Result};
use ndarray::{Array3, Array4, ArrayView4};

/// Default binarization threshold: mean absolute channel residual above
/// 8/255 marks a pixel corrupted.
pub const DEFAULT_MASK_THRESHOLD: f32 = 8.0 / 255.0;
pub const DEFAULT_MASK_DILATION: usize = 1;

/// Binarized, dilated residual between corrupted and clean frames.
/// `threshold` is in normalized units ([0, 1] intensity scale).
pub fn ground_truth_mask(
    corrupted: &ArrayView4<'_, u8>,
    clean: &ArrayView4<'_, u8>,
    threshold: f32,
    dilation_radius: usize,
) -> Result<Array3<u8>> {
    if corrupted.shape() != clean.shape() {
        return Err(CodecError::Input(format!(
            "shape mismatch: corrupted {:?} vs clean {:?}",
            corrupted.shape(),
            clean.shape()
        )));
    }
    let (n, h, w) = (corrupted.shape()[0], corrupted.shape()[1], corrupted.shape()[2]);
    let mut mask = Array3::<u8>::zeros((n, h, w));
    let thr = threshold * 255.0 * 3.0; // compare against the channel sum
    for fi in 0..n {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for ch in 0..3 {
                    acc += (corrupted[[fi, y, x, ch]] as f32 - clean[[fi, y, x, ch]] as f32).abs();
                }
                if acc > thr {
                    mask[[fi, y, x]] = 1;
                }
            }
        }
    }
    if dilation_radius > 0 {
        mask = dilate(&mask, dilation_radius);
    }
    Ok(mask)
}

/// Per-frame binary dilation with a square structuring element.
pub fn dilate(mask: &Array3<u8>, radius: usize) -> Array3<u8> {
    let (n, h, w) = (mask.shape()[0], mask.shape()[1], mask.shape()[2]);
    let r = radius as isize;
    let mut out = Array3::<u8>::zeros((n, h, w));
    for fi in 0..n {
        for y in 0..h as isize {
            for x in 0..w as isize {
                'probe: for dy in -r..=r {
                    for dx in -r..=r {
                        let (sy, sx) = (y + dy, x + dx);
                        if sy >= 0
                            && sy < h as isize
                            && sx >= 0
                            && sx < w as isize
                            && mask[[fi, sy as usize, sx as usize]] != 0
                        {
                            out[[fi, y as usize, x as usize]] = 1;
                            break 'probe;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Convenience wrapper for owned arrays.
pub fn ground_truth_mask_owned(
    corrupted: &Array4<u8>,
    clean: &Array4<u8>,
    threshold: f32,
    dilation_radius: usize,
) -> Result<Array3<u8>> {
    ground_truth_mask(&corrupted.view(), &clean.view(), threshold, dilation_radius)
}
