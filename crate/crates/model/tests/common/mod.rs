use mgdm_model::*;
use mgdm_tensor::check::grad_check;
use mgdm_tensor::rng::seeded_rng;
use mgdm_tensor::{Ctx, Graph, ParamStore, Scalar, TrainMask, Var};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use std::collections::BTreeMap;

/// Small geometry for fast forwards and finite-difference checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        frames: 2,
        height: 16,
        width: 16,
        ae: AeConfig {
            base: 4,
            c_lat: 2,
            factor: 4,
        },
        dme: DmeConfig {
            conv_widths: (3, 4),
            mlp_hidden: 5,
            heads: 2,
            d_ctx: 6,
            d_p: 3,
            temporal: true,
        },
        unet: UNetConfig {
            c_lat: 2,
            widths: vec![4, 6, 8],
            d_ctx: 6,
            heads: 2,
            temb_dim: 8,
            ffn_mult: 2,
            t_max: 10,
        },
        pmp_widths: [4, 4, 3, 3],
        mask_threshold: 0.5,
        prm: PrmConfig {
            width: 6,
            window: 2,
            heads: 2,
            blocks: 1,
            ffn_mult: 2,
        },
        disc: DiscConfig { widths: [3, 4, 4] },
        schedule: ScheduleKind::Cosine,
        sample_steps: 4,
    }
}

pub fn rand_arr<F: Scalar>(dims: &[usize], seed: u64, scale: f64) -> ArrayD<F> {
    let mut rng = seeded_rng(seed, 77);
    let mut a = ArrayD::<F>::zeros(IxDyn(dims));
    for e in a.iter_mut() {
        *e = F::from_f64(rng.gen_range(-scale..scale));
    }
    a
}

/// Run a finite-difference check on `loss_of(store)` vs its tape gradients.
/// `builder` must register the parameters; `loss` builds the scalar loss.
pub fn run_grad_check(
    name: &str,
    tol: f64,
    register: impl FnOnce(&mut ParamStore<f64>),
    loss: impl for<'g> Fn(&Ctx<'g, f64>) -> Var<'g, f64>,
) {
    let mut store = ParamStore::<f64>::new();
    register(&mut store);
    let mut run = |st: &ParamStore<f64>| -> (f64, BTreeMap<String, ArrayD<f64>>) {
        let g = Graph::<f64>::new();
        let ctx = Ctx::new(&g, st, TrainMask::All);
        let l = loss(&ctx);
        let lv = l.value()[[0]];
        let mut grads = g.backward(l);
        (lv, ctx.grads_by_name(&mut grads))
    };
    let (_, analytic) = run(&store);
    let report = grad_check(&mut store, &analytic, &mut |st| run(st).0, 1e-4, 1e-7);
    println!(
        "{name}: {} elements, max rel err {:.3e}",
        report.checked, report.max_rel
    );
    assert!(
        report.max_rel <= tol,
        "{name} gradient mismatch: {} (max rel {:.3e})",
        report.worst,
        report.max_rel
    );
}
