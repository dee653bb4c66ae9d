use crate::graph::Var;
use crate::scalar::Scalar;
use ndarray::{ArrayD, ArrayView2, Ix2, Ix3, IxDyn};

fn as2<F: Scalar>(x: &ArrayD<F>) -> ArrayView2<'_, F> {
    x.view().into_dimensionality::<Ix2>().expect("expected 2-d")
}

impl<'g, F: Scalar> Var<'g, F> {
    /// `[M, K] x [K, N] -> [M, N]`
    pub fn matmul(self, rhs: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.id, rhs.id);
        let v = self.g.with_value(self, |x| {
            rhs.g
                .with_value(rhs, |y| as2(x).dot(&as2(y)).into_dyn())
        });
        self.g.push(
            v,
            &[a, b],
            Box::new(move |dy, vals, sink| {
                let dy2 = as2(dy);
                if sink.wants(a) {
                    sink.add(a, dy2.dot(&as2(&vals[b]).t()).into_dyn());
                }
                if sink.wants(b) {
                    sink.add(b, as2(&vals[a]).t().dot(&dy2).into_dyn());
                }
            }),
        )
    }

    /// Batched matmul: `[B, M, K] x [B, K, N] -> [B, M, N]`
    pub fn bmm(self, rhs: Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.id, rhs.id);
        let v = self.g.with_value(self, |x| {
            rhs.g.with_value(rhs, |y| bmm_forward(x, y))
        });
        self.g.push(
            v,
            &[a, b],
            Box::new(move |dy, vals, sink| {
                let x = &vals[a];
                let y = &vals[b];
                let dy3 = dy.view().into_dimensionality::<Ix3>().unwrap();
                let x3 = x.view().into_dimensionality::<Ix3>().unwrap();
                let y3 = y.view().into_dimensionality::<Ix3>().unwrap();
                let nb = x3.shape()[0];
                if sink.wants(a) {
                    let mut da = ArrayD::<F>::zeros(x.raw_dim());
                    {
                        let mut da3 = da.view_mut().into_dimensionality::<Ix3>().unwrap();
                        for i in 0..nb {
                            let d = dy3.index_axis(ndarray::Axis(0), i);
                            let yb = y3.index_axis(ndarray::Axis(0), i);
                            da3.index_axis_mut(ndarray::Axis(0), i)
                                .assign(&d.dot(&yb.t()));
                        }
                    }
                    sink.add(a, da);
                }
                if sink.wants(b) {
                    let mut db = ArrayD::<F>::zeros(y.raw_dim());
                    {
                        let mut db3 = db.view_mut().into_dimensionality::<Ix3>().unwrap();
                        for i in 0..nb {
                            let d = dy3.index_axis(ndarray::Axis(0), i);
                            let xb = x3.index_axis(ndarray::Axis(0), i);
                            db3.index_axis_mut(ndarray::Axis(0), i)
                                .assign(&xb.t().dot(&d));
                        }
                    }
                    sink.add(b, db);
                }
            }),
        )
    }
}

fn bmm_forward<F: Scalar>(x: &ArrayD<F>, y: &ArrayD<F>) -> ArrayD<F> {
    let x3 = x.view().into_dimensionality::<Ix3>().expect("bmm: lhs 3-d");
    let y3 = y.view().into_dimensionality::<Ix3>().expect("bmm: rhs 3-d");
    let (nb, m, _k) = (x3.shape()[0], x3.shape()[1], x3.shape()[2]);
    let n = y3.shape()[2];
    assert_eq!(x3.shape()[0], y3.shape()[0], "bmm: batch mismatch");
    assert_eq!(x3.shape()[2], y3.shape()[1], "bmm: inner dim mismatch");
    let mut out = ArrayD::<F>::zeros(IxDyn(&[nb, m, n]));
    {
        let mut o3 = out.view_mut().into_dimensionality::<Ix3>().unwrap();
        for i in 0..nb {
            let xb = x3.index_axis(ndarray::Axis(0), i);
            let yb = y3.index_axis(ndarray::Axis(0), i);
            o3.index_axis_mut(ndarray::Axis(0), i).assign(&xb.dot(&yb));
        }
    }
    out
}
