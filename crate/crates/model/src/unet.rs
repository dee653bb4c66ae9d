//! Video denoising U-Net. Convolutions are pseudo-3d (1x3x3) per the
//! inflation scheme; each resolution carries one transformer block ordered
//! self-attention, metadata cross-attention, temporal attention,
//! feed-forward. The cross-attention outputs are tapped at every resolution,
//! resized to the latent grid and concatenated into the attention prior.

use crate::attention::{FeedForward, Mha};
use crate::error::{ModelError, Result};
use crate::layout::{fold_frames, unfold_frames};
use mgdm_tensor::{
    c, concat, Conv3Spec, Conv3d, Ctx, GroupNorm, Init, LayerNorm, ParamStore, Scalar, Var,
};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct UNetConfig {
    pub c_lat: usize,
    /// Channel width per resolution, finest first.
    pub widths: Vec<usize>,
    pub d_ctx: usize,
    pub heads: usize,
    pub temb_dim: usize,
    pub ffn_mult: usize,
    pub t_max: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            c_lat: 4,
            widths: vec![64, 128, 256],
            d_ctx: 128,
            heads: 4,
            temb_dim: 128,
            ffn_mult: 4,
            t_max: 1000,
        }
    }
}

impl UNetConfig {
    /// Channels of the concatenated attention prior.
    pub fn c_att(&self) -> usize {
        self.widths.iter().sum()
    }
}

fn conv133(spec_stride: (usize, usize, usize)) -> Conv3Spec {
    Conv3Spec {
        kernel: (1, 3, 3),
        stride: spec_stride,
        pad: (0, 1, 1),
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    norm: GroupNorm,
    conv: Conv3d,
    temb_proj: mgdm_tensor::Linear,
    skip: Option<Conv3d>,
    c_out: usize,
}

impl ResBlock {
    fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        c_in: usize,
        c_out: usize,
        temb_dim: usize,
        rng: &mut R,
    ) -> Self {
        let norm = GroupNorm::register(store, &format!("{name}.norm"), c_in, rng);
        let conv = Conv3d::register(
            store,
            &format!("{name}.conv"),
            c_in,
            c_out,
            conv133((1, 1, 1)),
            Init::KaimingNormal { fan_in: c_in * 9 },
            rng,
        );
        let temb_proj = mgdm_tensor::Linear::register(
            store,
            &format!("{name}.temb"),
            temb_dim,
            c_out,
            Init::Normal(0.02),
            rng,
        );
        let skip = if c_in != c_out {
            Some(Conv3d::register(
                store,
                &format!("{name}.skip"),
                c_in,
                c_out,
                Conv3Spec {
                    kernel: (1, 1, 1),
                    stride: (1, 1, 1),
                    pad: (0, 0, 0),
                },
                Init::KaimingNormal { fan_in: c_in },
                rng,
            ))
        } else {
            None
        };
        ResBlock {
            norm,
            conv,
            temb_proj,
            skip,
            c_out,
        }
    }

    fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        x: Var<'g, F>,
        temb: Var<'g, F>,
    ) -> Var<'g, F> {
        let dims = x.shape();
        let (b, n, h, w) = (dims[0], dims[2], dims[3], dims[4]);
        let hider = self.norm.forward(ctx, x).silu();
        let hider = self.conv.forward(ctx, hider);
        let t = self
            .temb_proj
            .forward(ctx, temb) // [B, c_out]
            .reshape(&[b, self.c_out, 1, 1, 1])
            .broadcast_to(&[b, self.c_out, n, h, w]);
        let hider = hider.add(t);
        let skip = match &self.skip {
            Some(conv) => conv.forward(ctx, x),
            None => x,
        };
        hider.add(skip)
    }
}

#[derive(Debug, Clone)]
pub struct TransformerBlock {
    norm_self: LayerNorm,
    attn_self: Mha,
    norm_cross: LayerNorm,
    attn_cross: Mha,
    norm_temporal: LayerNorm,
    attn_temporal: Mha,
    norm_ffn: LayerNorm,
    ffn: FeedForward,
}

impl TransformerBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        width: usize,
        d_ctx: usize,
        heads: usize,
        ffn_mult: usize,
        zero_heads: bool,
        rng: &mut R,
    ) -> Self {
        TransformerBlock {
            norm_self: LayerNorm::register(store, &format!("{name}.norm_self"), width, rng),
            attn_self: Mha::register(store, &format!("{name}.self"), width, width, heads, false, rng),
            norm_cross: LayerNorm::register(store, &format!("{name}.norm_cross"), width, rng),
            attn_cross: Mha::register(store, &format!("{name}.cross"), width, d_ctx, heads, false, rng),
            norm_temporal: LayerNorm::register(store, &format!("{name}.norm_temporal"), width, rng),
            attn_temporal: Mha::register(
                store,
                &format!("{name}.temporal"),
                width,
                width,
                heads,
                zero_heads,
                rng,
            ),
            norm_ffn: LayerNorm::register(store, &format!("{name}.norm_ffn"), width, rng),
            ffn: FeedForward::register(store, &format!("{name}.ffn"), width, ffn_mult, rng),
        }
    }

    /// Returns the block output and the cross-attention output (tapped for
    /// the mask-predictor prior), both `[B, C, N, h, w]`.
    pub fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        x: Var<'g, F>,
        r_m: Var<'g, F>,
    ) -> (Var<'g, F>, Var<'g, F>) {
        let dims = x.shape();
        let (b, cw, n, h, w) = (dims[0], dims[1], dims[2], dims[3], dims[4]);
        let l = h * w;
        let rd = r_m.shape();
        let (lm, d_ctx) = (rd[2], rd[3]);

        // per-frame spatial tokens
        let mut tokens = x
            .permute(&[0, 2, 3, 4, 1]) // [B, N, h, w, C]
            .reshape(&[b * n, l, cw]);
        let normed = self.norm_self.forward(ctx, tokens);
        tokens = tokens.add(self.attn_self.forward(ctx, normed, normed));

        let kv = r_m.reshape(&[b * n, lm, d_ctx]);
        let cross_out = self
            .attn_cross
            .forward(ctx, self.norm_cross.forward(ctx, tokens), kv);
        tokens = tokens.add(cross_out);

        // temporal tokens: one sequence of N frames per spatial site
        let mut t_tokens = tokens
            .reshape(&[b, n, l, cw])
            .permute(&[0, 2, 1, 3])
            .reshape(&[b * l, n, cw]);
        let normed = self.norm_temporal.forward(ctx, t_tokens);
        t_tokens = t_tokens.add(self.attn_temporal.forward(ctx, normed, normed));
        let mut tokens = t_tokens
            .reshape(&[b, l, n, cw])
            .permute(&[0, 2, 1, 3])
            .reshape(&[b * n, l, cw]);

        tokens = tokens.add(self.ffn.forward(ctx, self.norm_ffn.forward(ctx, tokens)));

        let out = tokens
            .reshape(&[b, n, h, w, cw])
            .permute(&[0, 4, 1, 2, 3]);
        let tap = cross_out
            .reshape(&[b, n, h, w, cw])
            .permute(&[0, 4, 1, 2, 3]);
        (out, tap)
    }
}

#[derive(Debug, Clone)]
pub struct UNet {
    pub cfg: UNetConfig,
    conv_in: Conv3d,
    temb_fc1: mgdm_tensor::Linear,
    temb_fc2: mgdm_tensor::Linear,
    down_res: Vec<ResBlock>,
    down_tf: Vec<TransformerBlock>,
    downsample: Vec<Conv3d>,
    mid: ResBlock,
    up_res: Vec<ResBlock>,
    upsample: Vec<Conv3d>,
    norm_out: GroupNorm,
    conv_out: Conv3d,
}

pub struct UNetOutput<'g, F: Scalar> {
    /// Predicted noise, same shape as the noisy latent.
    pub eps: Var<'g, F>,
    /// Cross-attention prior `[B, c_att, N, h, w]`.
    pub att_prior: Var<'g, F>,
}

impl UNet {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        cfg: UNetConfig,
        zero_heads: bool,
        rng: &mut R,
    ) -> Self {
        let levels = cfg.widths.len();
        let w0 = cfg.widths[0];
        let conv_in = Conv3d::register(
            store,
            "unet.conv_in",
            cfg.c_lat * 2,
            w0,
            conv133((1, 1, 1)),
            Init::KaimingNormal {
                fan_in: cfg.c_lat * 2 * 9,
            },
            rng,
        );
        let temb_fc1 = mgdm_tensor::Linear::register(
            store,
            "unet.temb.fc1",
            cfg.temb_dim,
            cfg.temb_dim,
            Init::KaimingNormal {
                fan_in: cfg.temb_dim,
            },
            rng,
        );
        let temb_fc2 = mgdm_tensor::Linear::register(
            store,
            "unet.temb.fc2",
            cfg.temb_dim,
            cfg.temb_dim,
            Init::KaimingNormal {
                fan_in: cfg.temb_dim,
            },
            rng,
        );
        let mut down_res = Vec::new();
        let mut down_tf = Vec::new();
        let mut downsample = Vec::new();
        for lvl in 0..levels {
            let c_in = if lvl == 0 { w0 } else { cfg.widths[lvl] };
            down_res.push(ResBlock::register(
                store,
                &format!("unet.down{lvl}.res"),
                c_in,
                cfg.widths[lvl],
                cfg.temb_dim,
                rng,
            ));
            down_tf.push(TransformerBlock::register(
                store,
                &format!("unet.down{lvl}.tf"),
                cfg.widths[lvl],
                cfg.d_ctx,
                cfg.heads,
                cfg.ffn_mult,
                zero_heads,
                rng,
            ));
            if lvl + 1 < levels {
                downsample.push(Conv3d::register(
                    store,
                    &format!("unet.down{lvl}.pool"),
                    cfg.widths[lvl],
                    cfg.widths[lvl + 1],
                    conv133((1, 2, 2)),
                    Init::KaimingNormal {
                        fan_in: cfg.widths[lvl] * 9,
                    },
                    rng,
                ));
            }
        }
        let top = *cfg.widths.last().unwrap();
        let mid = ResBlock::register(store, "unet.mid.res", top, top, cfg.temb_dim, rng);
        let mut up_res = Vec::new();
        let mut upsample = Vec::new();
        for lvl in (0..levels).rev() {
            up_res.push(ResBlock::register(
                store,
                &format!("unet.up{lvl}.res"),
                cfg.widths[lvl] * 2,
                cfg.widths[lvl],
                cfg.temb_dim,
                rng,
            ));
            if lvl > 0 {
                upsample.push(Conv3d::register(
                    store,
                    &format!("unet.up{lvl}.expand"),
                    cfg.widths[lvl],
                    cfg.widths[lvl - 1],
                    conv133((1, 1, 1)),
                    Init::KaimingNormal {
                        fan_in: cfg.widths[lvl] * 9,
                    },
                    rng,
                ));
            }
        }
        let norm_out = GroupNorm::register(store, "unet.norm_out", w0, rng);
        let conv_out = Conv3d::register(
            store,
            "unet.conv_out",
            w0,
            cfg.c_lat,
            conv133((1, 1, 1)),
            Init::Zeros,
            rng,
        );
        UNet {
            cfg,
            conv_in,
            temb_fc1,
            temb_fc2,
            down_res,
            down_tf,
            downsample,
            mid,
            up_res,
            upsample,
            norm_out,
            conv_out,
        }
    }

    fn time_embedding<F: Scalar>(&self, t: &[usize]) -> ArrayD<F> {
        let d = self.cfg.temb_dim;
        let half = d / 2;
        let mut out = ArrayD::<F>::zeros(IxDyn(&[t.len(), d]));
        for (bi, &tv) in t.iter().enumerate() {
            for i in 0..half {
                let freq = (10000f64).powf(-(i as f64) / half as f64);
                let ang = tv as f64 * freq;
                out[[bi, i]] = c(ang.sin());
                out[[bi, half + i]] = c(ang.cos());
            }
        }
        out
    }

    /// One denoising evaluation. `x_t` and `cond_latent` are
    /// `[B, c_lat, N, h, w]`; `t` holds one step index per batch item;
    /// `r_m` is `[B, N, L, d_ctx]`.
    pub fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        x_t: Var<'g, F>,
        cond_latent: Var<'g, F>,
        t: &[usize],
        r_m: Var<'g, F>,
    ) -> Result<UNetOutput<'g, F>> {
        let xd = x_t.shape();
        let cd = cond_latent.shape();
        if xd != cd {
            return Err(ModelError::Config(format!(
                "conditioning latent {cd:?} must match the noisy latent {xd:?}"
            )));
        }
        if xd[0] != t.len() {
            return Err(ModelError::Input(
                "one timestep per batch item required".into(),
            ));
        }
        for &tv in t {
            if tv > self.cfg.t_max {
                return Err(ModelError::Input(format!(
                    "step {tv} out of range 0..={}",
                    self.cfg.t_max
                )));
            }
        }
        let (h0, w0) = (xd[3], xd[4]);
        let levels = self.cfg.widths.len();

        let temb = ctx.constant(self.time_embedding::<F>(t));
        let temb = self.temb_fc2.forward(ctx, self.temb_fc1.forward(ctx, temb).silu());

        let mut h = concat(1, &[x_t, cond_latent]);
        h = self.conv_in.forward(ctx, h);

        let mut skips = Vec::with_capacity(levels);
        let mut taps = Vec::with_capacity(levels);
        for lvl in 0..levels {
            h = self.down_res[lvl].forward(ctx, h, temb);
            let (out, tap) = self.down_tf[lvl].forward(ctx, h, r_m);
            h = out;
            taps.push(tap);
            skips.push(h);
            if lvl + 1 < levels {
                h = self.downsample[lvl].forward(ctx, h);
            }
        }
        h = self.mid.forward(ctx, h, temb);
        for (ui, lvl) in (0..levels).rev().enumerate() {
            h = concat(1, &[h, skips[lvl]]);
            h = self.up_res[ui].forward(ctx, h, temb);
            if lvl > 0 {
                // nearest-neighbour spatial upsample, frames untouched
                let n = h.shape()[2];
                h = unfold_frames(fold_frames(h).upsample_nearest2d(2), n);
                h = self.upsample[ui].forward(ctx, h);
            }
        }
        let eps = self
            .conv_out
            .forward(ctx, self.norm_out.forward(ctx, h).silu());

        // attention prior: every tap resized to the latent grid, stacked once
        assert_eq!(taps.len(), levels, "one tap per cross-attention site");
        let mut resized = Vec::with_capacity(levels);
        for tap in taps {
            let td = tap.shape();
            let n = td[2];
            let r = if td[3] == h0 && td[4] == w0 {
                tap
            } else {
                unfold_frames(fold_frames(tap).interp_bilinear2d(h0, w0), n)
            };
            resized.push(r);
        }
        let att_prior = concat(1, &resized);
        Ok(UNetOutput {
            eps,
            att_prior,
        })
    }
}
