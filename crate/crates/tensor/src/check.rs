//! Finite-difference gradient verification used by the test suites.

use crate::nn::ParamStore;
use ndarray::ArrayD;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compare analytic gradients against central finite differences.
///
/// `loss_fn` must be a pure function of the store. Elements where both the
/// analytic and numeric gradients are below `abs_guard` are counted as
/// matching (finite-difference noise dominates there).
pub fn grad_check(
    params: &mut ParamStore<f64>,
    analytic: &BTreeMap<String, ArrayD<f64>>,
    loss_fn: &mut dyn FnMut(&ParamStore<f64>) -> f64,
    h: f64,
    abs_guard: f64,
) -> GradCheckReport {
    let names: Vec<String> = params.names().cloned().collect();
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    let mut checked = 0usize;
    for name in &names {
        let n = params.get(name).len();
        for idx in 0..n {
            let orig = params.get(name).as_slice().unwrap()[idx];
            params.get_mut(name).as_slice_mut().unwrap()[idx] = orig + h;
            let up = loss_fn(params);
            params.get_mut(name).as_slice_mut().unwrap()[idx] = orig - h;
            let down = loss_fn(params);
            params.get_mut(name).as_slice_mut().unwrap()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic_v = analytic
                .get(name)
                .map(|g| g.as_slice().unwrap()[idx])
                .unwrap_or(0.0);
            checked += 1;
            let scale = analytic_v.abs().max(numeric.abs());
            if scale < abs_guard {
                continue;
            }
            let rel = (analytic_v - numeric).abs() / scale;
            if rel > max_rel {
                max_rel = rel;
                worst = format!("{name}[{idx}] analytic={analytic_v:.6e} numeric={numeric:.6e}");
            }
        }
    }
    GradCheckReport {
        max_rel,
        worst,
        checked,
    }
}
