use crate::graph::Var;
use crate::scalar::{c, Scalar};
use ndarray::ArrayD;

impl<'g, F: Scalar> Var<'g, F> {
    pub fn add(self, rhs: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.id, rhs.id);
        let v = self.g.with_value(self, |x| {
            rhs.g.with_value(rhs, |y| {
                assert_eq!(x.shape(), y.shape(), "add: shape mismatch");
                x + y
            })
        });
        self.g.push(
            v,
            &[a, b],
            Box::new(move |dy, _vals, sink| {
                sink.add(a, dy.clone());
                sink.add(b, dy.clone());
            }),
        )
    }

    pub fn sub(self, rhs: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.id, rhs.id);
        let v = self
            .g
            .with_value(self, |x| rhs.g.with_value(rhs, |y| x - y));
        self.g.push(
            v,
            &[a, b],
            Box::new(move |dy, _vals, sink| {
                sink.add(a, dy.clone());
                sink.add(b, dy.mapv(|e| -e));
            }),
        )
    }

    pub fn mul(self, rhs: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.id, rhs.id);
        let v = self
            .g
            .with_value(self, |x| rhs.g.with_value(rhs, |y| x * y));
        self.g.push(
            v,
            &[a, b],
            Box::new(move |dy, vals, sink| {
                if sink.wants(a) {
                    sink.add(a, dy * &vals[b]);
                }
                if sink.wants(b) {
                    sink.add(b, dy * &vals[a]);
                }
            }),
        )
    }

    pub fn neg(self) -> Var<'g, F> {
        self.scale(c(-1.0))
    }

    pub fn scale(self, k: F) -> Var<'g, F> {
        let a = self.id;
        let v = self.g.with_value(self, |x| x.mapv(|e| e * k));
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| sink.add(a, dy.mapv(|e| e * k))),
        )
    }

    pub fn add_scalar(self, k: F) -> Var<'g, F> {
        let a = self.id;
        let v = self.g.with_value(self, |x| x.mapv(|e| e + k));
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| sink.add(a, dy.clone())),
        )
    }

    pub fn sqr(self) -> Var<'g, F> {
        let a = self.id;
        let v = self.g.with_value(self, |x| x.mapv(|e| e * e));
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, vals, sink| {
                let two = c::<F>(2.0);
                sink.add(a, dy * &vals[a].mapv(|e| e * two));
            }),
        )
    }

    pub fn relu(self) -> Var<'g, F> {
        self.leaky_relu(F::zero())
    }

    pub fn leaky_relu(self, slope: F) -> Var<'g, F> {
        let a = self.id;
        let v = self
            .g
            .with_value(self, |x| x.mapv(|e| if e > F::zero() { e } else { e * slope }));
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, vals, sink| {
                let mut dx = dy.clone();
                dx.zip_mut_with(&vals[a], |d, &x| {
                    if x <= F::zero() {
                        *d = *d * slope;
                    }
                });
                sink.add(a, dx);
            }),
        )
    }

    pub fn sigmoid(self) -> Var<'g, F> {
        let a = self.id;
        let v = self.g.with_value(self, |x| x.mapv(sigmoid_elem));
        let out_id = self.g.len();
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, vals, sink| {
                let y = &vals[out_id];
                let mut dx = dy.clone();
                dx.zip_mut_with(y, |d, &s| *d = *d * s * (F::one() - s));
                sink.add(a, dx);
            }),
        )
    }

    /// x * sigmoid(x)
    pub fn silu(self) -> Var<'g, F> {
        let a = self.id;
        let v = self.g.with_value(self, |x| x.mapv(|e| e * sigmoid_elem(e)));
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, vals, sink| {
                let mut dx = dy.clone();
                dx.zip_mut_with(&vals[a], |d, &x| {
                    let s = sigmoid_elem(x);
                    *d = *d * (s + x * s * (F::one() - s));
                });
                sink.add(a, dx);
            }),
        )
    }
}

#[inline]
fn sigmoid_elem<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Sum `parts` elementwise (shapes must match).
pub fn add_n<'g, F: Scalar>(parts: &[Var<'g, F>]) -> Var<'g, F> {
    assert!(!parts.is_empty());
    let mut acc = parts[0];
    for p in &parts[1..] {
        acc = acc.add(*p);
    }
    acc
}

/// Elementwise helper used by a few forwards outside the tape.
pub fn sigmoid_array<F: Scalar>(x: &ArrayD<F>) -> ArrayD<F> {
    x.mapv(sigmoid_elem)
}
