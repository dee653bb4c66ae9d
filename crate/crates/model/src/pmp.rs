//! Prior-driven mask predictor: fuses the corrupted latent, the spatial
//! metadata prior and the diffusion attention prior through five 3-d conv
//! layers, upsamples by depth-to-space and emits per-pixel corruption
//! probabilities.

use crate::error::{ModelError, Result};
use crate::layout::depth_to_space;
use mgdm_tensor::{c, concat, Conv3Spec, Conv3d, Ctx, Init, ParamStore, Scalar, Var};
use ndarray::{Array3, ArrayD};
use rand::Rng;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct PmpConfig {
    pub c_lat: usize,
    pub d_p: usize,
    pub c_att: usize,
    /// Widths of the four hidden convs; the fifth maps to `factor^2`.
    pub widths: [usize; 4],
    pub factor: usize,
    pub threshold: f32,
}

impl PmpConfig {
    pub fn c_in(&self) -> usize {
        self.c_lat + self.d_p + self.c_att
    }
}

impl Default for PmpConfig {
    fn default() -> Self {
        PmpConfig {
            c_lat: 4,
            d_p: 32,
            c_att: 448,
            widths: [64, 64, 32, 32],
            factor: 4,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaskPredictor {
    pub cfg: PmpConfig,
    convs: Vec<Conv3d>,
}

impl MaskPredictor {
    /// The final conv is zero-initialized so an untrained predictor emits a
    /// uniform probability of 0.5. `zero_last = false` randomizes it for
    /// gradient checks.
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        cfg: PmpConfig,
        zero_last: bool,
        rng: &mut R,
    ) -> Self {
        let spec = Conv3Spec::same((3, 3, 3));
        let dims = [
            cfg.c_in(),
            cfg.widths[0],
            cfg.widths[1],
            cfg.widths[2],
            cfg.widths[3],
            cfg.factor * cfg.factor,
        ];
        let mut convs = Vec::new();
        for i in 0..5 {
            let init = if i == 4 && zero_last {
                Init::Zeros
            } else {
                Init::KaimingNormal {
                    fan_in: dims[i] * 27,
                }
            };
            convs.push(Conv3d::register(
                store,
                &format!("pmp.conv{i}"),
                dims[i],
                dims[i + 1],
                spec,
                init,
                rng,
            ));
        }
        MaskPredictor { cfg, convs }
    }

    /// Inputs share the latent grid `[B, *, N, h, w]`; output probabilities
    /// are `[B, 1, N, h*f, w*f]`.
    pub fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        x_l: Var<'g, F>,
        p_m: Var<'g, F>,
        att: Var<'g, F>,
    ) -> Result<Var<'g, F>> {
        let (xd, pd, ad) = (x_l.shape(), p_m.shape(), att.shape());
        if xd[2..] != pd[2..] || xd[2..] != ad[2..] || xd[0] != pd[0] || xd[0] != ad[0] {
            return Err(ModelError::Config(format!(
                "geometry mismatch: x_l {xd:?}, p_m {pd:?}, att {ad:?}"
            )));
        }
        let mut h = concat(1, &[x_l, p_m, att]);
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(ctx, h);
            if i + 1 < self.convs.len() {
                h = h.leaky_relu(c(LEAKY_SLOPE));
            }
        }
        let logits = depth_to_space(h, self.cfg.factor);
        Ok(logits.sigmoid())
    }
}

/// A corruption-probability map with its binarization.
#[derive(Debug, Clone)]
pub struct PseudoMask {
    /// `[N, H, W]` probabilities in [0, 1].
    pub probs: Array3<f32>,
    /// `probs > threshold`.
    pub binary: Array3<u8>,
    pub threshold: f32,
}

impl PseudoMask {
    pub fn from_probs(probs: Array3<f32>, threshold: f32) -> Self {
        let binary = probs.mapv(|p| u8::from(p > threshold));
        PseudoMask {
            probs,
            binary,
            threshold,
        }
    }

    /// Split a batched model output `[B, 1, N, H, W]` into per-clip masks.
    pub fn from_model_output(probs: &ArrayD<f32>, threshold: f32) -> Vec<PseudoMask> {
        let (b, n, h, w) = (
            probs.shape()[0],
            probs.shape()[2],
            probs.shape()[3],
            probs.shape()[4],
        );
        (0..b)
            .map(|bi| {
                let mut m = Array3::<f32>::zeros((n, h, w));
                for fi in 0..n {
                    for y in 0..h {
                        for x in 0..w {
                            m[[fi, y, x]] = probs[[bi, 0, fi, y, x]];
                        }
                    }
                }
                PseudoMask::from_probs(m, threshold)
            })
            .collect()
    }
}
