//! Hard-mask composition and the post-refinement network: shallow conv
//! features through residual Swin blocks, with a zero-initialized output conv
//! and a global residual so a fresh network is exactly transparent.

use crate::attention::{FeedForward, Mha};
use crate::error::{ModelError, Result};
use mgdm_tensor::{Conv2d, Ctx, Init, LayerNorm, ParamStore, Scalar, Var};
use ndarray::{Array3, Array4};
use rand::Rng;

/// Per-pixel selection: mask 1 takes the generated pixel, mask 0 keeps the
/// input pixel, bit-exact on both sides.
pub fn hard_compose(
    x: &Array4<u8>,
    y_tilde: &Array4<u8>,
    mask: &Array3<u8>,
) -> Result<Array4<u8>> {
    if x.shape() != y_tilde.shape() {
        return Err(ModelError::Input(format!(
            "frame shape mismatch: {:?} vs {:?}",
            x.shape(),
            y_tilde.shape()
        )));
    }
    if mask.shape() != &x.shape()[..3] {
        return Err(ModelError::Input(format!(
            "mask shape {:?} does not match frames {:?}",
            mask.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    let (n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    for fi in 0..n {
        for y in 0..h {
            for xx in 0..w {
                if mask[[fi, y, xx]] != 0 {
                    for ch in 0..3 {
                        out[[fi, y, xx, ch]] = y_tilde[[fi, y, xx, ch]];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Probability-weighted blend (optional alternative to the hard selector).
pub fn soft_compose(
    x: &Array4<u8>,
    y_tilde: &Array4<u8>,
    probs: &Array3<f32>,
) -> Result<Array4<u8>> {
    if x.shape() != y_tilde.shape() || probs.shape() != &x.shape()[..3] {
        return Err(ModelError::Input("soft compose shape mismatch".into()));
    }
    let mut out = x.clone();
    let (n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    for fi in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let p = probs[[fi, y, xx]].clamp(0.0, 1.0);
                for ch in 0..3 {
                    let v = p * y_tilde[[fi, y, xx, ch]] as f32
                        + (1.0 - p) * x[[fi, y, xx, ch]] as f32;
                    out[[fi, y, xx, ch]] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PrmConfig {
    pub width: usize,
    pub window: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn_mult: usize,
}

impl Default for PrmConfig {
    fn default() -> Self {
        PrmConfig {
            width: 64,
            window: 8,
            heads: 4,
            blocks: 2,
            ffn_mult: 2,
        }
    }
}

#[derive(Debug, Clone)]
struct SwinLayer {
    norm1: LayerNorm,
    attn: Mha,
    norm2: LayerNorm,
    ffn: FeedForward,
    /// Cyclic shift applied before windowing.
    shift: usize,
}

impl SwinLayer {
    fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        cfg: &PrmConfig,
        shift: usize,
        rng: &mut R,
    ) -> Self {
        SwinLayer {
            norm1: LayerNorm::register(store, &format!("{name}.norm1"), cfg.width, rng),
            attn: Mha::register(
                store,
                &format!("{name}.attn"),
                cfg.width,
                cfg.width,
                cfg.heads,
                false,
                rng,
            ),
            norm2: LayerNorm::register(store, &format!("{name}.norm2"), cfg.width, rng),
            ffn: FeedForward::register(store, &format!("{name}.ffn"), cfg.width, cfg.ffn_mult, rng),
            shift,
        }
    }

    /// `x`: `[B, C, H, W]` with window dividing H and W.
    fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        x: Var<'g, F>,
        window: usize,
    ) -> Var<'g, F> {
        let d = x.shape();
        let (b, cw, h, w) = (d[0], d[1], d[2], d[3]);
        let s = self.shift as isize;
        let shifted = if self.shift > 0 {
            x.roll2(2, -s, 3, -s)
        } else {
            x
        };
        let (nh, nw) = (h / window, w / window);
        // partition into windows of window^2 tokens
        let tokens = shifted
            .reshape(&[b, cw, nh, window, nw, window])
            .permute(&[0, 2, 4, 3, 5, 1]) // [B, nh, nw, ws, ws, C]
            .reshape(&[b * nh * nw, window * window, cw]);
        let normed = self.norm1.forward(ctx, tokens);
        let tokens = tokens.add(self.attn.forward(ctx, normed, normed));
        let tokens = tokens.add(self.ffn.forward(ctx, self.norm2.forward(ctx, tokens)));
        let merged = tokens
            .reshape(&[b, nh, nw, window, window, cw])
            .permute(&[0, 5, 1, 3, 2, 4])
            .reshape(&[b, cw, h, w]);
        if self.shift > 0 {
            merged.roll2(2, s, 3, s)
        } else {
            merged
        }
    }
}

/// One residual Swin block: a plain-window layer, a shifted-window layer, a
/// conv, and an identity skip around the whole block.
#[derive(Debug, Clone)]
struct Rstb {
    plain: SwinLayer,
    shifted: SwinLayer,
    conv: Conv2d,
}

impl Rstb {
    fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        cfg: &PrmConfig,
        rng: &mut R,
    ) -> Self {
        Rstb {
            plain: SwinLayer::register(store, &format!("{name}.swin0"), cfg, 0, rng),
            shifted: SwinLayer::register(store, &format!("{name}.swin1"), cfg, cfg.window / 2, rng),
            conv: Conv2d::register(
                store,
                &format!("{name}.conv"),
                cfg.width,
                cfg.width,
                (3, 3),
                (1, 1),
                (1, 1),
                Init::KaimingNormal {
                    fan_in: cfg.width * 9,
                },
                rng,
            ),
        }
    }

    fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        x: Var<'g, F>,
        window: usize,
    ) -> Var<'g, F> {
        let h = self.plain.forward(ctx, x, window);
        let h = self.shifted.forward(ctx, h, window);
        self.conv.forward(ctx, h).add(x)
    }
}

#[derive(Debug, Clone)]
pub struct Refiner {
    pub cfg: PrmConfig,
    conv_in: Conv2d,
    blocks: Vec<Rstb>,
    conv_out: Conv2d,
}

impl Refiner {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        cfg: PrmConfig,
        zero_last: bool,
        rng: &mut R,
    ) -> Self {
        let conv_in = Conv2d::register(
            store,
            "prm.conv_in",
            4,
            cfg.width,
            (3, 3),
            (1, 1),
            (1, 1),
            Init::KaimingNormal { fan_in: 4 * 9 },
            rng,
        );
        let blocks = (0..cfg.blocks)
            .map(|i| Rstb::register(store, &format!("prm.rstb{i}"), &cfg, rng))
            .collect();
        let conv_out = Conv2d::register(
            store,
            "prm.conv_out",
            cfg.width,
            3,
            (3, 3),
            (1, 1),
            (1, 1),
            if zero_last {
                Init::Zeros
            } else {
                Init::KaimingNormal {
                    fan_in: cfg.width * 9,
                }
            },
            rng,
        );
        Refiner {
            cfg,
            conv_in,
            blocks,
            conv_out,
        }
    }

    /// `x_tilde`: composed frames `[BN, 3, H, W]` (normalized), `mask`:
    /// `[BN, 1, H, W]`. Returns refined frames; at zero-init this is exactly
    /// `x_tilde`.
    pub fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        x_tilde: Var<'g, F>,
        mask: Var<'g, F>,
    ) -> Result<Var<'g, F>> {
        let d = x_tilde.shape();
        let (h, w) = (d[2], d[3]);
        if h % self.cfg.window != 0 || w % self.cfg.window != 0 {
            return Err(ModelError::Config(format!(
                "window {} must divide frame size {h}x{w}",
                self.cfg.window
            )));
        }
        let inp = mgdm_tensor::concat(1, &[x_tilde, mask]);
        let mut feat = self.conv_in.forward(ctx, inp);
        for b in &self.blocks {
            feat = b.forward(ctx, feat, self.cfg.window);
        }
        Ok(self.conv_out.forward(ctx, feat).add(x_tilde))
    }
}

/// Pixel coordinates per window under the Swin partition (after a cyclic
/// shift by `-shift` on both axes). Used to verify cover-and-disjoint.
pub fn window_partition_map(
    h: usize,
    w: usize,
    window: usize,
    shift: usize,
) -> Vec<Vec<(usize, usize)>> {
    let (nh, nw) = (h / window, w / window);
    let mut out = vec![Vec::new(); nh * nw];
    for y in 0..h {
        for x in 0..w {
            // position after roll by -shift
            let sy = (y + h - shift % h) % h;
            let sx = (x + w - shift % w) % w;
            let wi = (sy / window) * nw + sx / window;
            out[wi].push((y, x));
        }
    }
    out
}
