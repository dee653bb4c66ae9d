//! Spatio-temporal patch discriminator with the hinge objective.

use mgdm_tensor::{c, Conv3Spec, Conv3d, Ctx, Init, ParamStore, Scalar, Var};
use rand::Rng;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct DiscConfig {
    pub widths: [usize; 3],
}

impl Default for DiscConfig {
    fn default() -> Self {
        DiscConfig {
            widths: [32, 64, 64],
        }
    }
}

/// Strided 3-d conv stack scoring local space-time patches. The temporal
/// receptive field spans more than three frames.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub cfg: DiscConfig,
    convs: Vec<Conv3d>,
}

impl Discriminator {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        cfg: DiscConfig,
        rng: &mut R,
    ) -> Self {
        let [w0, w1, w2] = cfg.widths;
        let dims = [3, w0, w1, w2, 1];
        let strides = [(1, 2, 2), (2, 2, 2), (2, 2, 2), (1, 1, 1)];
        let convs = (0..4)
            .map(|i| {
                Conv3d::register(
                    store,
                    &format!("disc.conv{i}"),
                    dims[i],
                    dims[i + 1],
                    Conv3Spec::same((3, 3, 3)).with_stride(strides[i]),
                    Init::KaimingNormal {
                        fan_in: dims[i] * 27,
                    },
                    rng,
                )
            })
            .collect();
        Discriminator { cfg, convs }
    }

    /// `frames`: `[B, 3, N, H, W]` -> patch scores `[B, 1, n', h', w']`.
    pub fn forward<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, frames: Var<'g, F>) -> Var<'g, F> {
        let mut h = frames;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(ctx, h);
            if i + 1 < self.convs.len() {
                h = h.leaky_relu(c(LEAKY_SLOPE));
            }
        }
        h
    }
}

/// Discriminator hinge loss:
/// `mean(relu(1 - D(real))) + mean(relu(1 + D(fake)))`.
pub fn hinge_d_loss<'g, F: Scalar>(real: Var<'g, F>, fake: Var<'g, F>) -> Var<'g, F> {
    let lr = real.neg().add_scalar(F::one()).relu().mean_all();
    let lf = fake.add_scalar(F::one()).relu().mean_all();
    lr.add(lf)
}

/// Generator hinge companion: `-mean(D(fake))`.
pub fn hinge_g_loss<'g, F: Scalar>(fake: Var<'g, F>) -> Var<'g, F> {
    fake.mean_all().neg()
}
