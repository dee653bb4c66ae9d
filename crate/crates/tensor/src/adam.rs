use crate::nn::ParamStore;
use crate::scalar::{c, Scalar};
use ndarray::ArrayD;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct AdamSlot<F: Scalar> {
    pub m: ArrayD<F>,
    pub v: ArrayD<F>,
    pub t: u64,
}

/// Adam with per-parameter learning rates resolved by name.
pub struct Adam<F: Scalar> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: BTreeMap<String, AdamSlot<F>>,
}

impl<F: Scalar> Default for Adam<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Adam<F> {
    pub fn new() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: BTreeMap::new(),
        }
    }

    /// Apply one update. `lr_for` maps a parameter name to its learning rate;
    /// a rate of zero skips the parameter entirely (no state advance).
    pub fn step(
        &mut self,
        params: &mut ParamStore<F>,
        grads: &BTreeMap<String, ArrayD<F>>,
        lr_for: &dyn Fn(&str) -> f64,
    ) {
        let b1 = c::<F>(self.beta1);
        let b2 = c::<F>(self.beta2);
        let one = F::one();
        for (name, grad) in grads {
            let lr = lr_for(name);
            if lr == 0.0 {
                continue;
            }
            let slot = self.state.entry(name.clone()).or_insert_with(|| AdamSlot {
                m: ArrayD::zeros(grad.raw_dim()),
                v: ArrayD::zeros(grad.raw_dim()),
                t: 0,
            });
            slot.t += 1;
            slot.m.zip_mut_with(grad, |m, &g| *m = *m * b1 + g * (one - b1));
            slot.v
                .zip_mut_with(grad, |v, &g| *v = *v * b2 + g * g * (one - b2));
            let bc1 = 1.0 - self.beta1.powi(slot.t as i32);
            let bc2 = 1.0 - self.beta2.powi(slot.t as i32);
            let step_scale = c::<F>(lr / bc1);
            let bc2_inv = c::<F>(1.0 / bc2);
            let epsf = c::<F>(self.eps);
            let p = params.get_mut(name);
            ndarray::Zip::from(p)
                .and(&slot.m)
                .and(&slot.v)
                .for_each(|pe, &me, &ve| {
                    let vhat = (ve * bc2_inv).sqrt() + epsf;
                    *pe = *pe - step_scale * me / vhat;
                });
        }
    }
}
