//! Finite-difference checks for every differentiable op, in double precision.

use mgdm_tensor::check::grad_check;
use mgdm_tensor::rng::seeded_rng;
use mgdm_tensor::{c, concat, Conv3Spec, Ctx, Graph, Init, ParamStore, Scalar, TrainMask, Var};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use std::collections::BTreeMap;

const H: f64 = 1e-5;
const TOL: f64 = 1e-7;

fn rand_arr(dims: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = seeded_rng(seed, 90);
    let mut a = ArrayD::<f64>::zeros(IxDyn(dims));
    for e in a.iter_mut() {
        *e = rng.gen_range(-1.0..1.0);
    }
    a
}

/// Check d(loss)/d(params) for `build`, where loss = mean(build(x) * probe).
fn check_op(
    name: &str,
    param_dims: &[(&str, &[usize])],
    build: &dyn for<'g> Fn(&Ctx<'g, f64>) -> Var<'g, f64>,
) {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(7, 1);
    for (pname, dims) in param_dims {
        store.register(pname, dims, Init::Normal(0.5), &mut rng);
    }
    let mut run = |st: &ParamStore<f64>| -> (f64, BTreeMap<String, ArrayD<f64>>) {
        let g = Graph::<f64>::new();
        let ctx = Ctx::new(&g, st, TrainMask::All);
        let out = build(&ctx);
        let probe = ctx.constant(rand_arr(&out.shape(), 4242));
        let loss = out.mul(probe).mean_all();
        let lv = loss.value()[[0]];
        let mut grads = g.backward(loss);
        (lv, ctx.grads_by_name(&mut grads))
    };
    let (_, analytic) = run(&store);
    let report = grad_check(
        &mut store,
        &analytic,
        &mut |st| run(st).0,
        H,
        TOL,
    );
    assert!(
        report.max_rel <= 1e-6,
        "{name}: max rel err {} at {} ({} checked)",
        report.max_rel,
        report.worst,
        report.checked
    );
}

#[test]
fn grad_add_sub_mul_scale() {
    check_op(
        "add",
        &[("a", &[3, 4]), ("b", &[3, 4])],
        &|ctx| ctx.p("a").add(ctx.p("b")),
    );
    check_op(
        "sub",
        &[("a", &[3, 4]), ("b", &[3, 4])],
        &|ctx| ctx.p("a").sub(ctx.p("b")),
    );
    check_op(
        "mul",
        &[("a", &[3, 4]), ("b", &[3, 4])],
        &|ctx| ctx.p("a").mul(ctx.p("b")),
    );
    check_op("scale", &[("a", &[5])], &|ctx| {
        ctx.p("a").scale(-1.7).add_scalar(0.3)
    });
    check_op("sqr", &[("a", &[5])], &|ctx| ctx.p("a").sqr());
}

#[test]
fn grad_activations() {
    check_op("leaky_relu", &[("a", &[64])], &|ctx| {
        ctx.p("a").leaky_relu(0.2)
    });
    check_op("sigmoid", &[("a", &[32])], &|ctx| ctx.p("a").sigmoid());
    check_op("silu", &[("a", &[32])], &|ctx| ctx.p("a").silu());
}

#[test]
fn grad_matmul_bmm() {
    check_op(
        "matmul",
        &[("a", &[4, 6]), ("b", &[6, 5])],
        &|ctx| ctx.p("a").matmul(ctx.p("b")),
    );
    check_op(
        "bmm",
        &[("a", &[2, 3, 4]), ("b", &[2, 4, 5])],
        &|ctx| ctx.p("a").bmm(ctx.p("b")),
    );
}

#[test]
fn grad_shape_ops() {
    check_op("reshape", &[("a", &[2, 6])], &|ctx| {
        ctx.p("a").reshape(&[3, 4])
    });
    check_op("permute", &[("a", &[2, 3, 4])], &|ctx| {
        ctx.p("a").permute(&[2, 0, 1])
    });
    check_op("broadcast", &[("a", &[1, 3, 1])], &|ctx| {
        ctx.p("a").broadcast_to(&[2, 3, 4])
    });
    check_op("narrow", &[("a", &[3, 5])], &|ctx| {
        ctx.p("a").narrow(1, 1, 3)
    });
    check_op("roll", &[("a", &[2, 4, 4])], &|ctx| {
        ctx.p("a").roll2(1, 3, 2, -1)
    });
    check_op(
        "concat",
        &[("a", &[2, 3]), ("b", &[2, 2])],
        &|ctx| concat(1, &[ctx.p("a"), ctx.p("b")]),
    );
}

#[test]
fn grad_softmax_norms() {
    check_op("softmax", &[("a", &[3, 5])], &|ctx| {
        ctx.p("a").softmax_last()
    });
    check_op(
        "layer_norm",
        &[("a", &[4, 6]), ("g", &[6]), ("bta", &[6])],
        &|ctx| ctx.p("a").layer_norm(ctx.p("g"), ctx.p("bta"), 1e-5),
    );
    check_op(
        "group_norm",
        &[("a", &[2, 4, 3, 3]), ("g", &[4]), ("bta", &[4])],
        &|ctx| ctx.p("a").group_norm(2, ctx.p("g"), ctx.p("bta"), 1e-5),
    );
}

#[test]
fn grad_conv3d() {
    check_op(
        "conv3d_same",
        &[("x", &[2, 3, 3, 4, 4]), ("w", &[4, 3, 3, 3, 3]), ("b", &[4])],
        &|ctx| {
            ctx.p("x")
                .conv3d(ctx.p("w"), ctx.p("b"), Conv3Spec::same((3, 3, 3)))
        },
    );
    check_op(
        "conv3d_strided",
        &[("x", &[1, 2, 4, 6, 6]), ("w", &[3, 2, 1, 3, 3]), ("b", &[3])],
        &|ctx| {
            let spec = Conv3Spec {
                kernel: (1, 3, 3),
                stride: (1, 2, 2),
                pad: (0, 1, 1),
            };
            ctx.p("x").conv3d(ctx.p("w"), ctx.p("b"), spec)
        },
    );
}

#[test]
fn grad_conv2d_pool_resize() {
    check_op(
        "conv2d",
        &[("x", &[2, 3, 5, 5]), ("w", &[4, 3, 3, 3]), ("b", &[4])],
        &|ctx| {
            ctx.p("x")
                .conv2d(ctx.p("w"), ctx.p("b"), (3, 3), (1, 1), (1, 1))
        },
    );
    check_op("avg_pool", &[("x", &[2, 3, 4, 4])], &|ctx| {
        ctx.p("x").avg_pool2d(2)
    });
    check_op("upsample", &[("x", &[1, 2, 3, 3])], &|ctx| {
        ctx.p("x").upsample_nearest2d(2)
    });
    check_op("bilinear_up", &[("x", &[1, 2, 3, 3])], &|ctx| {
        ctx.p("x").interp_bilinear2d(7, 5)
    });
    check_op("bilinear_down", &[("x", &[1, 2, 8, 8])], &|ctx| {
        ctx.p("x").interp_bilinear2d(3, 3)
    });
}

#[test]
fn grad_losses() {
    check_op(
        "mse",
        &[("a", &[3, 4]), ("b", &[3, 4])],
        &|ctx| ctx.p("a").mse(ctx.p("b")),
    );
    check_op(
        "l1",
        &[("a", &[3, 4]), ("b", &[3, 4])],
        &|ctx| ctx.p("a").l1(ctx.p("b")),
    );
    // BCE: keep probabilities strictly inside the clamp band.
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(11, 1);
    store.register("logits", &[40], Init::Normal(0.8), &mut rng);
    let target = rand_arr(&[40], 5).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let t2 = target.clone();
    let mut run = |st: &ParamStore<f64>| -> (f64, BTreeMap<String, ArrayD<f64>>) {
        let g = Graph::<f64>::new();
        let ctx = Ctx::new(&g, st, TrainMask::All);
        let loss = ctx.p("logits").sigmoid().bce_probs(&t2, 1e-7);
        let lv = loss.value()[[0]];
        let mut grads = g.backward(loss);
        (lv, ctx.grads_by_name(&mut grads))
    };
    let (_, analytic) = run(&store);
    let report = grad_check(&mut store, &analytic, &mut |st| run(st).0, H, TOL);
    assert!(report.max_rel <= 1e-6, "bce: {}", report.worst);
    drop(target);
}

#[test]
fn grad_flows_through_shared_leaf() {
    // A parameter used twice must receive summed gradients.
    check_op("shared", &[("a", &[4, 4])], &|ctx| {
        let a = ctx.p("a");
        a.matmul(a).add(a)
    });
}

#[test]
fn detach_blocks_gradients() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(3, 1);
    store.register("a", &[4], Init::Normal(1.0), &mut rng);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::All);
    let a = ctx.p("a");
    let loss = a.detach().sqr().mean_all();
    let mut grads = g.backward(loss);
    assert!(grads.take(a).is_none(), "detach must stop gradient flow");
}

#[test]
fn backward_accumulates_exact_zero_under_zero_scale() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(3, 1);
    store.register("a", &[8], Init::Normal(1.0), &mut rng);
    let g = Graph::<f64>::new();
    let ctx = Ctx::new(&g, &store, TrainMask::All);
    let a = ctx.p("a");
    let loss = a.sqr().mean_all().scale(0.0);
    let mut grads = g.backward(loss);
    let ga = grads.take(a).expect("gradient present");
    assert!(ga.iter().all(|&v| v == 0.0));
}

#[test]
fn roll_is_cyclic_and_invertible() {
    let x = rand_arr(&[2, 5, 7], 99);
    let g = Graph::<f64>::new();
    let v = g.constant(x.clone());
    let rolled = v.roll2(1, 2, 2, -3).roll2(1, -2, 2, 3);
    assert_eq!(rolled.value(), x);
}

#[test]
fn softmax_rows_sum_to_one() {
    let x = rand_arr(&[6, 9], 17).mapv(|v| v * 4.0);
    let g = Graph::<f64>::new();
    let y = g.constant(x).softmax_last().value();
    for row in y.rows() {
        let s: f64 = row.sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn adam_zero_lr_is_identity() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = seeded_rng(3, 1);
    store.register("a", &[16], Init::Normal(1.0), &mut rng);
    let before = store.get("a").clone();
    let mut opt = mgdm_tensor::Adam::<f32>::new();
    let mut grads = BTreeMap::new();
    grads.insert("a".to_string(), ArrayD::from_elem(IxDyn(&[16]), 1.0f32));
    opt.step(&mut store, &grads, &|_| 0.0);
    assert_eq!(store.get("a"), &before);
}

#[test]
fn adam_moves_against_gradient() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = seeded_rng(3, 1);
    store.register("a", &[4], Init::Normal(1.0), &mut rng);
    let before = store.get("a").clone();
    let mut opt = mgdm_tensor::Adam::<f64>::new();
    let mut grads = BTreeMap::new();
    grads.insert("a".to_string(), ArrayD::from_elem(IxDyn(&[4]), 2.0));
    opt.step(&mut store, &grads, &|_| 0.1);
    for (b, a) in before.iter().zip(store.get("a").iter()) {
        assert!(a < b, "positive gradient must decrease the parameter");
    }
}

#[test]
fn scalar_casts_roundtrip() {
    assert_eq!(c::<f32>(0.25).to_f64(), 0.25);
    assert_eq!(f64::from_f64(1.5), 1.5);
}
