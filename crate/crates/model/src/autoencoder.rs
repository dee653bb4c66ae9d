//! Small per-frame convolutional autoencoder standing in for a pretrained
//! latent-space codec. Trained first, frozen afterwards; latents are scaled
//! to unit variance with a factor stored in the checkpoint.

use crate::error::{ModelError, Result};
use crate::layout::{fold_frames, unfold_frames};
use mgdm_tensor::{Conv2d, Ctx, Init, ParamStore, Scalar, Var};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct AeConfig {
    pub base: usize,
    pub c_lat: usize,
    /// Spatial downsample factor; must be a power of two.
    pub factor: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            base: 32,
            c_lat: 4,
            factor: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub cfg: AeConfig,
    enc_in: Conv2d,
    enc_down: Vec<Conv2d>,
    enc_out: Conv2d,
    dec_in: Conv2d,
    dec_up: Vec<Conv2d>,
    dec_out: Conv2d,
}

fn stages(factor: usize) -> Result<usize> {
    if !factor.is_power_of_two() || factor < 2 {
        return Err(ModelError::Config(format!(
            "latent factor {factor} must be a power of two >= 2"
        )));
    }
    Ok(factor.trailing_zeros() as usize)
}

impl Autoencoder {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        cfg: AeConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let n_stages = stages(cfg.factor)?;
        let k = Init::KaimingNormal { fan_in: 9 * 3 };
        let enc_in = Conv2d::register(store, "ae.enc.in", 3, cfg.base, (3, 3), (1, 1), (1, 1), k, rng);
        let mut widths = vec![cfg.base];
        for s in 0..n_stages {
            widths.push(cfg.base << (s + 1).min(2));
        }
        let mut enc_down = Vec::new();
        for s in 0..n_stages {
            enc_down.push(Conv2d::register(
                store,
                &format!("ae.enc.down{s}"),
                widths[s],
                widths[s + 1],
                (3, 3),
                (2, 2),
                (1, 1),
                Init::KaimingNormal {
                    fan_in: widths[s] * 9,
                },
                rng,
            ));
        }
        let top = widths[n_stages];
        let enc_out = Conv2d::register(
            store,
            "ae.enc.out",
            top,
            cfg.c_lat,
            (3, 3),
            (1, 1),
            (1, 1),
            Init::KaimingNormal { fan_in: top * 9 },
            rng,
        );
        let dec_in = Conv2d::register(
            store,
            "ae.dec.in",
            cfg.c_lat,
            top,
            (3, 3),
            (1, 1),
            (1, 1),
            Init::KaimingNormal {
                fan_in: cfg.c_lat * 9,
            },
            rng,
        );
        let mut dec_up = Vec::new();
        for s in (0..n_stages).rev() {
            dec_up.push(Conv2d::register(
                store,
                &format!("ae.dec.up{s}"),
                widths[s + 1],
                widths[s],
                (3, 3),
                (1, 1),
                (1, 1),
                Init::KaimingNormal {
                    fan_in: widths[s + 1] * 9,
                },
                rng,
            ));
        }
        let dec_out = Conv2d::register(
            store,
            "ae.dec.out",
            cfg.base,
            3,
            (3, 3),
            (1, 1),
            (1, 1),
            Init::KaimingNormal {
                fan_in: cfg.base * 9,
            },
            rng,
        );
        Ok(Autoencoder {
            cfg,
            enc_in,
            enc_down,
            enc_out,
            dec_in,
            dec_up,
            dec_out,
        })
    }

    /// `frames`: `[B, 3, N, H, W]` -> `[B, c_lat, N, H/f, W/f]`.
    pub fn encode<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, frames: Var<'g, F>) -> Result<Var<'g, F>> {
        let dims = frames.shape();
        let (n, h, w) = (dims[2], dims[3], dims[4]);
        if h % self.cfg.factor != 0 || w % self.cfg.factor != 0 {
            return Err(ModelError::Config(format!(
                "frame size {h}x{w} not divisible by latent factor {}",
                self.cfg.factor
            )));
        }
        let mut x = fold_frames(frames);
        x = self.enc_in.forward(ctx, x).silu();
        for conv in &self.enc_down {
            x = conv.forward(ctx, x).silu();
        }
        x = self.enc_out.forward(ctx, x);
        Ok(unfold_frames(x, n))
    }

    /// `latent`: `[B, c_lat, N, h, w]` -> `[B, 3, N, H, W]`.
    pub fn decode<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, latent: Var<'g, F>) -> Var<'g, F> {
        let n = latent.shape()[2];
        let mut x = fold_frames(latent);
        x = self.dec_in.forward(ctx, x).silu();
        for conv in &self.dec_up {
            x = x.upsample_nearest2d(2);
            x = conv.forward(ctx, x).silu();
        }
        x = self.dec_out.forward(ctx, x);
        unfold_frames(x, n)
    }
}
