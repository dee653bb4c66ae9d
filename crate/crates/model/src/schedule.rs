use crate::error::{ModelError, Result};
use mgdm_tensor::{c, Scalar};
use ndarray::ArrayD;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

impl ScheduleKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ScheduleKind::Cosine),
            "linear" => Ok(ScheduleKind::Linear),
            other => Err(ModelError::Input(format!(
                "unknown schedule kind {other:?} (expected cosine or linear)"
            ))),
        }
    }
}

/// Variance-preserving noise schedule: `x_t = gamma_t * x0 + delta_t * eps`
/// with `gamma_t^2 + delta_t^2 = 1` and `gamma` non-increasing in `t`.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, t_max: usize) -> Self {
        match kind {
            ScheduleKind::Cosine => Self::cosine(t_max),
            ScheduleKind::Linear => Self::linear(t_max),
        }
    }

    /// Squared-cosine cumulative schedule with per-step noise capped so the
    /// terminal signal level stays strictly positive.
    pub fn cosine(t_max: usize) -> Self {
        let s = 0.008f64;
        let f = |t: f64| ((t / t_max as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2)
            .cos()
            .powi(2);
        let f0 = f(0.0);
        let mut alpha_bar = vec![1.0f64; t_max + 1];
        for t in 1..=t_max {
            let ratio = (f(t as f64) / f(t as f64 - 1.0)).clamp(0.001, 1.0);
            alpha_bar[t] = alpha_bar[t - 1] * ratio;
        }
        let _ = f0;
        Self::from_alpha_bar(t_max, &alpha_bar)
    }

    /// Linear beta ramp from 1e-4 to 0.02.
    pub fn linear(t_max: usize) -> Self {
        let mut alpha_bar = vec![1.0f64; t_max + 1];
        for t in 1..=t_max {
            let beta = if t_max > 1 {
                1e-4 + (0.02 - 1e-4) * (t - 1) as f64 / (t_max - 1) as f64
            } else {
                1e-4
            };
            alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta);
        }
        Self::from_alpha_bar(t_max, &alpha_bar)
    }

    fn from_alpha_bar(t_max: usize, alpha_bar: &[f64]) -> Self {
        let gamma: Vec<f64> = alpha_bar.iter().map(|&a| a.sqrt()).collect();
        let delta: Vec<f64> = alpha_bar.iter().map(|&a| (1.0 - a).sqrt()).collect();
        NoiseSchedule {
            t_max,
            gamma,
            delta,
        }
    }

    pub fn gamma_at(&self, t: usize) -> f64 {
        self.gamma[t]
    }

    pub fn delta_at(&self, t: usize) -> f64 {
        self.delta[t]
    }

    /// Forward noising: `gamma_t * x0 + delta_t * eps`.
    pub fn add_noise<F: Scalar>(
        &self,
        x0: &ArrayD<F>,
        t: usize,
        eps: &ArrayD<F>,
    ) -> Result<ArrayD<F>> {
        if t > self.t_max {
            return Err(ModelError::Input(format!(
                "step {t} out of range 0..={}",
                self.t_max
            )));
        }
        if x0.shape() != eps.shape() {
            return Err(ModelError::Input(
                "noise shape must match the sample shape".into(),
            ));
        }
        let g = c::<F>(self.gamma[t]);
        let d = c::<F>(self.delta[t]);
        let mut out = x0.mapv(|v| v * g);
        out.zip_mut_with(eps, |o, &e| *o = *o + e * d);
        Ok(out)
    }

    /// Descending step sequence for sampling with `steps` model calls,
    /// ending at 0.
    pub fn sample_steps(&self, steps: usize) -> Result<Vec<usize>> {
        if steps == 0 {
            return Err(ModelError::Input("steps must be positive".into()));
        }
        if steps > self.t_max {
            return Err(ModelError::Input(format!(
                "steps {steps} exceeds schedule length {}",
                self.t_max
            )));
        }
        let mut ts: Vec<usize> = (1..=steps)
            .map(|i| (i * self.t_max) / steps)
            .collect();
        ts.dedup();
        ts.reverse();
        Ok(ts)
    }
}

/// Deterministic (eta = 0) iterative inversion of the forward process:
/// `x0_hat = (x_t - delta_t * eps_hat) / gamma_t`, then re-noise to the
/// previous step with the same predicted noise.
pub fn ddim_sample<F: Scalar>(
    schedule: &NoiseSchedule,
    steps: usize,
    init: ArrayD<F>,
    mut predict: impl FnMut(&ArrayD<F>, usize) -> ArrayD<F>,
) -> Result<ArrayD<F>> {
    let seq = schedule.sample_steps(steps)?;
    let mut x = init;
    for (i, &t) in seq.iter().enumerate() {
        let t_prev = if i + 1 < seq.len() { seq[i + 1] } else { 0 };
        let eps = predict(&x, t);
        let g_t = c::<F>(schedule.gamma[t]);
        let d_t = c::<F>(schedule.delta[t]);
        let g_p = c::<F>(schedule.gamma[t_prev]);
        let d_p = c::<F>(schedule.delta[t_prev]);
        let mut next = ArrayD::<F>::zeros(x.raw_dim());
        ndarray::Zip::from(&mut next)
            .and(&x)
            .and(&eps)
            .for_each(|n, &xv, &ev| {
                let x0 = (xv - d_t * ev) / g_t;
                *n = g_p * x0 + d_p * ev;
            });
        x = next;
    }
    Ok(x)
}
