mod common;

use common::{rand_arr, tiny_config};
use mgdm_model::*;
use mgdm_tensor::rng::seeded_rng;
use mgdm_tensor::{Ctx, Graph, ParamStore, TrainMask};
use ndarray::{ArrayD, IxDyn};

fn build_models(_zero_heads: bool) -> (ParamStore<f64>, Models) {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(7, 1);
    let models = Models::build(tiny_config(), &mut store, &mut rng).unwrap();
    (store, models)
}

#[test]
fn denoise_step_shape_contract() {
    let (store, models) = build_models(true);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let x_t = ctx.constant(rand_arr(&[1, 2, 2, 4, 4], 1, 1.0));
    let cond = ctx.constant(rand_arr(&[1, 2, 2, 4, 4], 2, 1.0));
    let r_m = ctx.constant(rand_arr(&[1, 2, 16, 6], 3, 1.0));
    let out = models.unet.forward(&ctx, x_t, cond, &[5], r_m).unwrap();
    assert_eq!(out.eps.shape(), vec![1, 2, 2, 4, 4]);
    let c_att = models.cfg.unet.c_att();
    assert_eq!(out.att_prior.shape(), vec![1, c_att, 2, 4, 4]);
}

#[test]
fn denoise_step_rejects_misaligned_shapes() {
    let (store, models) = build_models(true);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let x_t = ctx.constant(rand_arr(&[1, 2, 2, 4, 4], 1, 1.0));
    let cond = ctx.constant(rand_arr(&[1, 2, 2, 8, 8], 2, 1.0));
    let r_m = ctx.constant(rand_arr(&[1, 2, 16, 6], 3, 1.0));
    match models.unet.forward(&ctx, x_t, cond, &[5], r_m) {
        Err(e) => assert_eq!(e.kind(), ErrorKind::Config),
        Ok(_) => panic!("misaligned conditioning must be rejected"),
    }
    let cond = ctx.constant(rand_arr(&[1, 2, 2, 4, 4], 2, 1.0));
    assert!(models.unet.forward(&ctx, x_t, cond, &[99], r_m).is_err());
}

#[test]
fn attention_rows_are_stochastic() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(11, 1);
    let mha = Mha::register(&mut store, "t.attn", 8, 6, 2, false, &mut rng);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let q = ctx.constant(rand_arr(&[3, 5, 8], 1, 2.0));
    let kv = ctx.constant(rand_arr(&[3, 7, 6], 2, 2.0));
    let (_, probs) = mha.forward_with_probs(&ctx, q, kv);
    let p = probs.value();
    assert_eq!(p.shape(), &[6, 5, 7]);
    for b in 0..6 {
        for r in 0..5 {
            let s: f64 = (0..7).map(|k| p[[b, r, k]]).sum();
            assert!((s - 1.0).abs() < 1e-5, "row sum {s}");
        }
    }
}

#[test]
fn single_metadata_token_collapses_cross_attention_to_its_value() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(13, 1);
    let mha = Mha::register(&mut store, "t.attn", 8, 6, 2, false, &mut rng);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let q = ctx.constant(rand_arr(&[2, 5, 8], 1, 2.0));
    let kv = ctx.constant(rand_arr(&[2, 1, 6], 2, 2.0));
    let out = mha.forward(&ctx, q, kv).value();
    // all queries see the same single value vector
    for b in 0..2 {
        for r in 1..5 {
            for cdim in 0..8 {
                assert!(
                    (out[[b, 0, cdim]] - out[[b, r, cdim]]).abs() < 1e-10,
                    "query {r} differs from query 0"
                );
            }
        }
    }
}

#[test]
fn temporal_attention_keeps_identical_frames_identical() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(17, 1);
    let tf = TransformerBlock::register(&mut store, "t.tf", 4, 6, 2, 2, false, &mut rng);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let one = rand_arr::<f64>(&[1, 4, 1, 3, 3], 4, 1.0);
    let n = 3;
    let mut rep = ArrayD::<f64>::zeros(IxDyn(&[1, 4, n, 3, 3]));
    for fi in 0..n {
        for c in 0..4 {
            for y in 0..3 {
                for x in 0..3 {
                    rep[[0, c, fi, y, x]] = one[[0, c, 0, y, x]];
                }
            }
        }
    }
    let r_m = rand_arr::<f64>(&[1, 1, 4, 6], 5, 1.0);
    let mut r_rep = ArrayD::<f64>::zeros(IxDyn(&[1, n, 4, 6]));
    for fi in 0..n {
        for l in 0..4 {
            for d in 0..6 {
                r_rep[[0, fi, l, d]] = r_m[[0, 0, l, d]];
            }
        }
    }
    let (out, _) = tf.forward(&ctx, ctx.constant(rep), ctx.constant(r_rep));
    let o = out.value();
    for fi in 1..n {
        for c in 0..4 {
            for y in 0..3 {
                for x in 0..3 {
                    assert!(
                        (o[[0, c, 0, y, x]] - o[[0, c, fi, y, x]]).abs() < 1e-10,
                        "identical frames diverged"
                    );
                }
            }
        }
    }
}

#[test]
fn autoencoder_shape_and_determinism() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = seeded_rng(19, 1);
    let ae = Autoencoder::register(&mut store, AeConfig::default(), &mut rng).unwrap();
    let g = Graph::<f32>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    // [16, 64, 64, 3] frames, f=4, c_lat=4 -> latent [16, 16, 16, 4]
    let frames = ctx.constant(rand_arr(&[1, 3, 16, 64, 64], 23, 1.0));
    let latent = ae.encode(&ctx, frames).unwrap();
    assert_eq!(latent.shape(), vec![1, 4, 16, 16, 16]);
    let dec1 = ae.decode(&ctx, latent).value();
    let dec2 = ae.decode(&ctx, latent).value();
    assert_eq!(dec1, dec2, "decode must be deterministic");
    assert_eq!(dec1.shape(), &[1, 3, 16, 64, 64]);
    // non-divisible input is a configuration error
    let bad = ctx.constant(rand_arr(&[1, 3, 2, 30, 30], 2, 1.0));
    match ae.encode(&ctx, bad) {
        Err(e) => assert_eq!(e.kind(), ErrorKind::Config),
        Ok(_) => panic!("expected config error"),
    }
}

#[test]
fn depth_to_space_arithmetic_and_roundtrip() {
    let g = Graph::<f64>::new();
    // h=w=16 latent with f=4 -> 64x64 output per frame
    let x = g.constant(rand_arr(&[1, 16, 2, 16, 16], 3, 1.0));
    let up = depth_to_space(x, 4);
    assert_eq!(up.shape(), vec![1, 1, 2, 64, 64]);
    let back = space_to_depth(up, 4);
    assert_eq!(back.value(), x.value(), "rearrangement must invert exactly");

    // channel c = dy*f + dx lands at pixel offset (dy, dx)
    let mut probe = ArrayD::<f64>::zeros(IxDyn(&[1, 4, 1, 2, 2]));
    probe[[0, 3, 0, 1, 0]] = 7.0; // dy=1, dx=1 at latent (1,0)
    let up = depth_to_space(g.constant(probe), 2).value();
    assert_eq!(up[[0, 0, 0, 3, 1]], 7.0);
    assert_eq!(up.iter().filter(|&&v| v != 0.0).count(), 1);
}

#[test]
fn fresh_mask_predictor_emits_half_probabilities() {
    let (store, models) = build_models(true);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let c_att = models.cfg.unet.c_att();
    let x_l = ctx.constant(rand_arr(&[1, 2, 2, 4, 4], 1, 1.0));
    let p_m = ctx.constant(rand_arr(&[1, 3, 2, 4, 4], 2, 1.0));
    let att = ctx.constant(rand_arr(&[1, c_att, 2, 4, 4], 3, 1.0));
    let probs = models.pmp.forward(&ctx, x_l, p_m, att).unwrap().value();
    assert_eq!(probs.shape(), &[1, 1, 2, 16, 16]);
    for &p in probs.iter() {
        assert_eq!(p, 0.5, "zero-initialized head must output exactly 0.5");
    }
    // threshold 0.5 binarizes a fresh mask to all zeros
    let masks = PseudoMask::from_model_output(&probs.mapv(|v| v as f32), 0.5);
    assert!(masks[0].binary.iter().all(|&b| b == 0));
}

#[test]
fn mask_predictor_rejects_geometry_mismatch() {
    let (store, models) = build_models(true);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let c_att = models.cfg.unet.c_att();
    let x_l = ctx.constant(rand_arr(&[1, 2, 2, 4, 4], 1, 1.0));
    let p_m = ctx.constant(rand_arr(&[1, 3, 2, 8, 8], 2, 1.0));
    let att = ctx.constant(rand_arr(&[1, c_att, 2, 4, 4], 3, 1.0));
    match models.pmp.forward(&ctx, x_l, p_m, att) {
        Err(e) => assert_eq!(e.kind(), ErrorKind::Config),
        Ok(_) => panic!("geometry mismatch must be rejected"),
    }
}

#[test]
fn mask_loss_golden_values() {
    let g = Graph::<f64>::new();
    let gt = rand_arr::<f64>(&[64], 5, 1.0).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });

    // probs == gt (clamped) -> loss below 1e-5
    let exact = g.constant(gt.clone());
    let l = exact.bce_probs(&gt, 1e-7).value()[[0]];
    assert!(l <= 1e-5, "exact match loss {l}");

    // probs == 0.5 everywhere -> ln 2
    let half = g.constant(ArrayD::from_elem(IxDyn(&[64]), 0.5));
    let l = half.bce_probs(&gt, 1e-7).value()[[0]];
    assert!((l - std::f64::consts::LN_2).abs() < 1e-9, "got {l}");

    // probs == 1 - gt -> clamp bound -ln(1e-7)
    let flipped = g.constant(gt.mapv(|v| 1.0 - v));
    let l = flipped.bce_probs(&gt, 1e-7).value()[[0]];
    assert!((l - (-(1e-7f64).ln())).abs() < 1e-6, "got {l}");
    assert!((l - 16.118).abs() < 1e-2);
}

#[test]
fn mask_predictor_is_shift_equivariant_on_interior_frames() {
    // temporal translation of all inputs translates outputs on frames away
    // from the clip boundary (five 3x3x3 convs -> five-frame halo)
    let mut cfg = tiny_config();
    cfg.frames = 14;
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(31, 1);
    let models = Models::build(cfg, &mut store, &mut rng).unwrap();
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let c_att = models.cfg.unet.c_att();
    let n = 14;

    let x_l = rand_arr::<f64>(&[1, 2, n, 4, 4], 1, 1.0);
    let p_m = rand_arr::<f64>(&[1, 3, n, 4, 4], 2, 1.0);
    let att = rand_arr::<f64>(&[1, c_att, n, 4, 4], 3, 1.0);
    let shift = |a: &ArrayD<f64>| {
        let mut out = a.clone();
        for fi in 1..n {
            let src = a.index_axis(ndarray::Axis(2), fi - 1).to_owned();
            out.index_axis_mut(ndarray::Axis(2), fi).assign(&src);
        }
        out
    };
    // randomize the zero-initialized head so the check is non-trivial
    let mut store2 = ParamStore::<f64>::new();
    let mut rng2 = seeded_rng(32, 1);
    let pmp = MaskPredictor::register(
        &mut store2,
        PmpConfig {
            c_lat: 2,
            d_p: 3,
            c_att,
            widths: [4, 4, 3, 3],
            factor: 4,
            threshold: 0.5,
        },
        false,
        &mut rng2,
    );
    let g2 = Graph::<f64>::new();
    let ctx2 = Ctx::new(&g2, &store2, TrainMask::None);
    let base = pmp
        .forward(
            &ctx2,
            ctx2.constant(x_l.clone()),
            ctx2.constant(p_m.clone()),
            ctx2.constant(att.clone()),
        )
        .unwrap()
        .value();
    let moved = pmp
        .forward(
            &ctx2,
            ctx2.constant(shift(&x_l)),
            ctx2.constant(shift(&p_m)),
            ctx2.constant(shift(&att)),
        )
        .unwrap()
        .value();
    for fi in 6..n - 6 {
        for y in 0..16 {
            for x in 0..16 {
                let a = base[[0, 0, fi - 1, y, x]];
                let b = moved[[0, 0, fi, y, x]];
                assert!(
                    (a - b).abs() < 1e-9,
                    "interior frame {fi} not shift-consistent: {a} vs {b}"
                );
            }
        }
    }
    drop(ctx);
}

#[test]
fn probabilities_stay_in_range_and_binarization_is_idempotent() {
    let (store, models) = build_models(true);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::None);
    let c_att = models.cfg.unet.c_att();
    let x_l = ctx.constant(rand_arr(&[1, 2, 2, 4, 4], 41, 3.0));
    let p_m = ctx.constant(rand_arr(&[1, 3, 2, 4, 4], 42, 3.0));
    let att = ctx.constant(rand_arr(&[1, c_att, 2, 4, 4], 43, 3.0));
    let probs = models.pmp.forward(&ctx, x_l, p_m, att).unwrap().value();
    for &p in probs.iter() {
        assert!((0.0..=1.0).contains(&p));
    }
    let m = PseudoMask::from_model_output(&probs.mapv(|v| v as f32), 0.5);
    let again = PseudoMask::from_probs(m[0].binary.mapv(|b| b as f32), 0.5);
    assert_eq!(m[0].binary, again.binary, "binarization must be idempotent");
}
