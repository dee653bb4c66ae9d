use crate::graph::Var;
use crate::scalar::{c, Scalar};
use ndarray::{ArrayD, IxDyn};

impl<'g, F: Scalar> Var<'g, F> {
    /// Mean over all elements, as a `[1]`-shaped node.
    pub fn mean_all(self) -> Var<'g, F> {
        let a = self.id;
        let n = self.g.with_value(self, |x| x.len());
        let inv = c::<F>(1.0 / n as f64);
        let v = self.g.with_value(self, |x| {
            ArrayD::from_elem(IxDyn(&[1]), x.sum() * inv)
        });
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, vals, sink| {
                let g = dy[[0]] * inv;
                sink.add(a, ArrayD::from_elem(vals[a].raw_dim(), g));
            }),
        )
    }

    pub fn sum_all(self) -> Var<'g, F> {
        let a = self.id;
        let v = self
            .g
            .with_value(self, |x| ArrayD::from_elem(IxDyn(&[1]), x.sum()));
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, vals, sink| {
                sink.add(a, ArrayD::from_elem(vals[a].raw_dim(), dy[[0]]));
            }),
        )
    }

    /// Mean squared error against a target node.
    pub fn mse(self, target: Var<'g, F>) -> Var<'g, F> {
        self.sub(target).sqr().mean_all()
    }

    /// Mean absolute error against a target node.
    pub fn l1(self, target: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.id, target.id);
        let n = self.g.with_value(self, |x| x.len());
        let inv = c::<F>(1.0 / n as f64);
        let v = self.g.with_value(self, |x| {
            target.g.with_value(target, |t| {
                let mut s = F::zero();
                for (&xv, &tv) in x.iter().zip(t.iter()) {
                    s = s + (xv - tv).abs();
                }
                ArrayD::from_elem(IxDyn(&[1]), s * inv)
            })
        });
        self.g.push(
            v,
            &[a, b],
            Box::new(move |dy, vals, sink| {
                let g = dy[[0]] * inv;
                let x = &vals[a];
                let t = &vals[b];
                let mut dx = ArrayD::<F>::zeros(x.raw_dim());
                for ((d, &xv), &tv) in dx.iter_mut().zip(x.iter()).zip(t.iter()) {
                    *d = if xv > tv {
                        g
                    } else if xv < tv {
                        -g
                    } else {
                        F::zero()
                    };
                }
                if sink.wants(a) {
                    sink.add(a, dx.clone());
                }
                if sink.wants(b) {
                    sink.add(b, dx.mapv(|e| -e));
                }
            }),
        )
    }

    /// Mean binary cross entropy of probabilities against a constant 0/1
    /// target. Probabilities are clamped to `[clamp, 1-clamp]`; gradients are
    /// zero where the clamp is active.
    pub fn bce_probs(self, target: &ArrayD<F>, clamp: f64) -> Var<'g, F> {
        let a = self.id;
        let lo = c::<F>(clamp);
        let hi = F::one() - lo;
        let t = target.clone();
        let n = self.g.with_value(self, |x| {
            assert_eq!(x.shape(), t.shape(), "bce: shape mismatch");
            x.len()
        });
        let inv = c::<F>(1.0 / n as f64);
        let t_back = t.clone();
        let v = self.g.with_value(self, |x| {
            let mut s = F::zero();
            for (&p, &tv) in x.iter().zip(t.iter()) {
                let pc = p.max(lo).min(hi);
                s = s - (tv * pc.ln() + (F::one() - tv) * (F::one() - pc).ln());
            }
            ArrayD::from_elem(IxDyn(&[1]), s * inv)
        });
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, vals, sink| {
                let g = dy[[0]] * inv;
                let x = &vals[a];
                let mut dx = ArrayD::<F>::zeros(x.raw_dim());
                for ((d, &p), &tv) in dx.iter_mut().zip(x.iter()).zip(t_back.iter()) {
                    if p < lo || p > hi {
                        continue; // clamped: no gradient
                    }
                    let pc = p.max(lo).min(hi);
                    *d = g * (pc - tv) / (pc * (F::one() - pc));
                }
                sink.add(a, dx);
            }),
        )
    }
}
