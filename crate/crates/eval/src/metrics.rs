//! Frame-quality and mask metrics. All arithmetic is double precision.

use crate::error::{EvalError, Result};
use ndarray::{Array3, Array4, ArrayView2, ArrayView4};

/// PSNR cap reported when the mean squared error is exactly zero.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Peak signal-to-noise ratio in dB for a declared peak value
/// (255 for 8-bit frames, 1.0 for normalized data).
pub fn psnr(a: &ArrayView4<'_, u8>, b: &ArrayView4<'_, u8>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(EvalError::Input(format!(
            "psnr: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut se = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x as f64 - y as f64;
        se += d * d;
    }
    Ok(psnr_from_mse(se / a.len() as f64, 255.0))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Channel-mean grayscale plane of one frame.
pub fn grayscale(frame: &ArrayView2<'_, [u8; 3]>) -> ndarray::Array2<f64> {
    frame.mapv(|px| (px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0)
}

fn to_gray_frames(a: &ArrayView4<'_, u8>) -> Vec<ndarray::Array2<f64>> {
    let (n, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    (0..n)
        .map(|fi| {
            let mut g = ndarray::Array2::<f64>::zeros((h, w));
            for y in 0..h {
                for x in 0..w {
                    g[[y, x]] = (a[[fi, y, x, 0]] as f64
                        + a[[fi, y, x, 1]] as f64
                        + a[[fi, y, x, 2]] as f64)
                        / 3.0;
                }
            }
            g
        })
        .collect()
}

/// Mean structural similarity over all valid (fully interior) 11x11 windows
/// of every frame, computed on channel-mean grayscale with a Gaussian window
/// (sigma 1.5) and the standard stabilizers for 8-bit dynamic range.
pub fn ssim(a: &ArrayView4<'_, u8>, b: &ArrayView4<'_, u8>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(EvalError::Input(format!(
            "ssim: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(EvalError::Input(format!(
            "ssim: frames {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let ga = to_gray_frames(a);
    let gb = to_gray_frames(b);
    let mut acc = 0.0;
    let mut count = 0usize;
    for fi in 0..n {
        let (s, c) = ssim_plane(&ga[fi], &gb[fi]);
        acc += s;
        count += c;
    }
    Ok(acc / count as f64)
}

/// Separable Gaussian filtering over valid positions.
fn filter_valid(x: &ndarray::Array2<f64>) -> ndarray::Array2<f64> {
    let k = gaussian_kernel();
    let (h, w) = x.dim();
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut tmp = ndarray::Array2::<f64>::zeros((h, ow));
    for y in 0..h {
        for x0 in 0..ow {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * x[[y, x0 + i]];
            }
            tmp[[y, x0]] = s;
        }
    }
    let mut out = ndarray::Array2::<f64>::zeros((oh, ow));
    for y0 in 0..oh {
        for x0 in 0..ow {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * tmp[[y0 + i, x0]];
            }
            out[[y0, x0]] = s;
        }
    }
    out
}

fn ssim_plane(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> (f64, usize) {
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mu_a = filter_valid(a);
    let mu_b = filter_valid(b);
    let aa = filter_valid(&(a * a));
    let bb = filter_valid(&(b * b));
    let ab = filter_valid(&(a * b));
    let mut acc = 0.0;
    let (oh, ow) = mu_a.dim();
    for y in 0..oh {
        for x in 0..ow {
            let (ma, mb) = (mu_a[[y, x]], mu_b[[y, x]]);
            let va = aa[[y, x]] - ma * ma;
            let vb = bb[[y, x]] - mb * mb;
            let cov = ab[[y, x]] - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            acc += s;
        }
    }
    (acc, oh * ow)
}

/// Intersection-over-union and F1 for binary masks. Both are 1.0 when both
/// masks are empty; non-binary inputs are rejected.
pub fn mask_metrics(pred: &Array3<u8>, gt: &Array3<u8>) -> Result<(f64, f64)> {
    if pred.shape() != gt.shape() {
        return Err(EvalError::Input(format!(
            "mask metrics: shape mismatch {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    for &v in pred.iter().chain(gt.iter()) {
        if v > 1 {
            return Err(EvalError::Input(format!(
                "mask metrics: non-binary value {v}"
            )));
        }
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    let mut p_count = 0u64;
    let mut g_count = 0u64;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        let (p, g) = (p != 0, g != 0);
        inter += (p && g) as u64;
        union += (p || g) as u64;
        p_count += p as u64;
        g_count += g as u64;
    }
    let iou = if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    };
    let f1 = if p_count + g_count == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p_count + g_count) as f64
    };
    Ok((iou, f1))
}

/// Convenience wrappers on owned frame arrays.
pub fn psnr_frames(a: &Array4<u8>, b: &Array4<u8>) -> Result<f64> {
    psnr(&a.view(), &b.view())
}

pub fn ssim_frames(a: &Array4<u8>, b: &Array4<u8>) -> Result<f64> {
    ssim(&a.view(), &b.view())
}
