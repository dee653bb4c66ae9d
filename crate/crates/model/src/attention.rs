use mgdm_tensor::{c, Ctx, Init, Linear, ParamStore, Scalar, Var};
use rand::Rng;

/// Multi-head attention over token sequences. Queries come from the first
/// input, keys and values from the second, so the same block serves
/// self-attention (`kv = q`) and cross-attention.
#[derive(Debug, Clone)]
pub struct Mha {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    pub heads: usize,
    pub d_model: usize,
}

impl Mha {
    /// `zero_out` zero-initializes the output projection so the block starts
    /// as an identity residual branch.
    #[allow(clippy::too_many_arguments)]
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        d_model: usize,
        d_kv: usize,
        heads: usize,
        zero_out: bool,
        rng: &mut R,
    ) -> Self {
        assert!(d_model % heads == 0, "d_model must divide into heads");
        let init = Init::KaimingNormal { fan_in: d_model };
        let init_kv = Init::KaimingNormal { fan_in: d_kv };
        let q = Linear::register(store, &format!("{name}.q"), d_model, d_model, init, rng);
        let k = Linear::register(store, &format!("{name}.k"), d_kv, d_model, init_kv, rng);
        let v = Linear::register(store, &format!("{name}.v"), d_kv, d_model, init_kv, rng);
        let o_init = if zero_out { Init::Zeros } else { init };
        let o = Linear::register(store, &format!("{name}.o"), d_model, d_model, o_init, rng);
        Mha {
            q,
            k,
            v,
            o,
            heads,
            d_model,
        }
    }

    /// `q_tokens`: `[B, Lq, C]`, `kv_tokens`: `[B, Lkv, Ckv]` -> `[B, Lq, C]`.
    pub fn forward<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        q_tokens: Var<'g, F>,
        kv_tokens: Var<'g, F>,
    ) -> Var<'g, F> {
        self.forward_with_probs(ctx, q_tokens, kv_tokens).0
    }

    /// Also returns the attention probabilities `[B*heads, Lq, Lkv]`.
    pub fn forward_with_probs<'g, F: Scalar>(
        &self,
        ctx: &Ctx<'g, F>,
        q_tokens: Var<'g, F>,
        kv_tokens: Var<'g, F>,
    ) -> (Var<'g, F>, Var<'g, F>) {
        let qd = q_tokens.shape();
        let kd = kv_tokens.shape();
        let (b, lq) = (qd[0], qd[1]);
        let lk = kd[1];
        let h = self.heads;
        let dh = self.d_model / h;

        let split = |x: Var<'g, F>, l: usize| {
            x.reshape(&[b, l, h, dh])
                .permute(&[0, 2, 1, 3])
                .reshape(&[b * h, l, dh])
        };
        let q = split(self.q.forward(ctx, q_tokens), lq);
        let k = split(self.k.forward(ctx, kv_tokens), lk);
        let v = split(self.v.forward(ctx, kv_tokens), lk);

        let scores = q
            .bmm(k.permute(&[0, 2, 1]))
            .scale(c::<F>(1.0 / (dh as f64).sqrt()));
        let probs = scores.softmax_last();
        let out = probs.bmm(v); // [B*h, Lq, dh]
        let merged = out
            .reshape(&[b, h, lq, dh])
            .permute(&[0, 2, 1, 3])
            .reshape(&[b, lq, self.d_model]);
        (self.o.forward(ctx, merged), probs)
    }
}

/// Position-wise feed-forward block.
#[derive(Debug, Clone)]
pub struct FeedForward {
    fc1: Linear,
    fc2: Linear,
}

impl FeedForward {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        d_model: usize,
        mult: usize,
        rng: &mut R,
    ) -> Self {
        let hidden = d_model * mult;
        let fc1 = Linear::register(
            store,
            &format!("{name}.fc1"),
            d_model,
            hidden,
            Init::KaimingNormal { fan_in: d_model },
            rng,
        );
        let fc2 = Linear::register(
            store,
            &format!("{name}.fc2"),
            hidden,
            d_model,
            Init::KaimingNormal { fan_in: hidden },
            rng,
        );
        FeedForward { fc1, fc2 }
    }

    pub fn forward<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, x: Var<'g, F>) -> Var<'g, F> {
        self.fc2.forward(ctx, self.fc1.forward(ctx, x).silu())
    }
}
