//! Dual-stream metadata encoder: a motion-vector branch and a frame-type
//! branch fused by element-wise addition, projected into context tokens
//! (`r_m`, cross-attention keys/values) and a spatial prior (`p_m`).

use crate::attention::Mha;
use crate::error::{ModelError, Result};
use crate::layout::{fold_frames, unfold_frames};
use mgdm_tensor::{c, Conv2d, Ctx, Init, LayerNorm, Linear, ParamStore, Scalar, Var};
use rand::Rng;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct DmeConfig {
    /// Widths of the two conv stages; the second is the fused embed width.
    pub conv_widths: (usize, usize),
    pub mlp_hidden: usize,
    pub heads: usize,
    pub d_ctx: usize,
    pub d_p: usize,
    /// Disables the temporal transformer (ablation switch).
    pub temporal: bool,
}

impl Default for DmeConfig {
    fn default() -> Self {
        DmeConfig {
            conv_widths: (32, 64),
            mlp_hidden: 64,
            heads: 4,
            d_ctx: 128,
            d_p: 32,
            temporal: true,
        }
    }
}

/// Token + spatial projections of the fused metadata features.
pub struct Metadata<'g, F: Scalar> {
    /// `[B, N, L, d_ctx]` with `L = h*w`.
    pub r_m: Var<'g, F>,
    /// `[B, d_p, N, h, w]`.
    pub p_m: Var<'g, F>,
}

#[derive(Debug, Clone)]
pub struct MetadataEncoder {
    pub cfg: DmeConfig,
    conv1: Conv2d,
    conv2: Conv2d,
    t_norm: LayerNorm,
    t_attn: Mha,
    type_fc1: Linear,
    type_fc2: Linear,
    proj_tokens: Linear,
    proj_prior: Linear,
}

impl MetadataEncoder {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        cfg: DmeConfig,
        zero_heads: bool,
        rng: &mut R,
    ) -> Self {
        let (c1, d) = cfg.conv_widths;
        let conv1 = Conv2d::register(
            store,
            "dme.motion.conv1",
            4,
            c1,
            (3, 3),
            (1, 1),
            (1, 1),
            Init::KaimingNormal { fan_in: 4 * 9 },
            rng,
        );
        let conv2 = Conv2d::register(
            store,
            "dme.motion.conv2",
            c1,
            d,
            (3, 3),
            (1, 1),
            (1, 1),
            Init::KaimingNormal { fan_in: c1 * 9 },
            rng,
        );
        let t_norm = LayerNorm::register(store, "dme.temporal.norm", d, rng);
        let t_attn = Mha::register(store, "dme.temporal.attn", d, d, cfg.heads, zero_heads, rng);
        let type_fc1 = Linear::register(
            store,
            "dme.ftype.fc1",
            3,
            cfg.mlp_hidden,
            Init::KaimingNormal { fan_in: 3 },
            rng,
        );
        let type_fc2 = Linear::register(
            store,
            "dme.ftype.fc2",
            cfg.mlp_hidden,
            d,
            Init::KaimingNormal {
                fan_in: cfg.mlp_hidden,
            },
            rng,
        );
        let proj_tokens = Linear::register(
            store,
            "dme.proj.tokens",
            d,
            cfg.d_ctx,
            Init::KaimingNormal { fan_in: d },
            rng,
        );
        let proj_prior = Linear::register(
            store,
            "dme.proj.prior",
            d,
            cfg.d_p,
            Init::KaimingNormal { fan_in: d },
            rng,
        );
        MetadataEncoder {
            cfg,
            conv1,
            conv2,
            t_norm,
            t_attn,
            type_fc1,
            type_fc2,
            proj_tokens,
            proj_prior,
        }
    }

    /// Motion branch: two conv+pool stages applied per frame, then temporal
    /// self-attention across frames at each spatial site.
    /// `motion`: `[B, 4, N, H, W]` -> `[B, d, N, H/4, W/4]`.
    pub fn encode_motion<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        motion: Var<'g, F>,
    ) -> Result<Var<'g, F>> {
        let dims = motion.shape();
        let (b, n, h, w) = (dims[0], dims[2], dims[3], dims[4]);
        if h % 4 != 0 || w % 4 != 0 {
            return Err(ModelError::Config(format!(
                "motion field {h}x{w} not divisible by the total pooling factor 4"
            )));
        }
        let slope = c::<F>(LEAKY_SLOPE);
        let x = fold_frames(motion); // [B*N, 4, H, W]
        let x = self.conv1.forward(ctx, x).leaky_relu(slope).avg_pool2d(2);
        let x = self.conv2.forward(ctx, x).leaky_relu(slope).avg_pool2d(2);
        let x = unfold_frames(x, n); // [B, d, N, h, w]
        if !self.cfg.temporal {
            return Ok(x);
        }
        let d = self.cfg.conv_widths.1;
        let (hh, ww) = (h / 4, w / 4);
        // tokens over the frame axis at each spatial position
        let tokens = x
            .permute(&[0, 3, 4, 2, 1]) // [B, h, w, N, d]
            .reshape(&[b * hh * ww, n, d]);
        let attended = self
            .t_attn
            .forward(ctx, self.t_norm.forward(ctx, tokens), self.t_norm.forward(ctx, tokens));
        let tokens = tokens.add(attended);
        Ok(tokens
            .reshape(&[b, hh, ww, n, d])
            .permute(&[0, 4, 3, 1, 2]))
    }

    /// Frame-type branch: one-hot tokens through two MLP layers.
    /// `one_hot`: `[B, N, 3]` -> `[B, N, d]`.
    pub fn encode_frametype<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        one_hot: Var<'g, F>,
    ) -> Var<'g, F> {
        let h = self.type_fc1.forward(ctx, one_hot).leaky_relu(c(LEAKY_SLOPE));
        self.type_fc2.forward(ctx, h)
    }

    /// Broadcast the frame-type embedding over space, add, and project to the
    /// two output formats.
    pub fn fuse_and_project<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        motion_feat: Var<'g, F>,
        type_feat: Var<'g, F>,
    ) -> Result<Metadata<'g, F>> {
        let md = motion_feat.shape();
        let (b, d, n, h, w) = (md[0], md[1], md[2], md[3], md[4]);
        let td = type_feat.shape();
        if td != vec![b, n, d] {
            return Err(ModelError::Config(format!(
                "frame-type embedding {td:?} does not match motion features [{b}, {n}, {d}]"
            )));
        }
        let ty = type_feat
            .permute(&[0, 2, 1]) // [B, d, N]
            .reshape(&[b, d, n, 1, 1])
            .broadcast_to(&[b, d, n, h, w]);
        let fused = motion_feat.add(ty);
        // token form: [B, N, h*w, d] -> project to d_ctx
        let tokens = fused
            .permute(&[0, 2, 3, 4, 1])
            .reshape(&[b, n, h * w, d]);
        let r_m = self.proj_tokens.forward(ctx, tokens);
        // spatial form: project channels to d_p
        let prior_tokens = self.proj_prior.forward(ctx, tokens); // [B, N, h*w, d_p]
        let p_m = prior_tokens
            .reshape(&[b, n, h, w, self.cfg.d_p])
            .permute(&[0, 4, 1, 2, 3]);
        Ok(Metadata { r_m, p_m })
    }

    /// Full dual-stream pass.
    pub fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        motion: Var<'g, F>,
        type_one_hot: Var<'g, F>,
    ) -> Result<Metadata<'g, F>> {
        let m = self.encode_motion(ctx, motion)?;
        let t = self.encode_frametype(ctx, type_one_hot);
        self.fuse_and_project(ctx, m, t)
    }
}
