use crate::graph::Var;
use crate::scalar::{c, Scalar};
use ndarray::{ArrayD, Axis, Ix2, IxDyn};

fn rows<F: Scalar>(x: &ArrayD<F>) -> (usize, usize) {
    let d = *x.shape().last().expect("empty shape");
    (x.len() / d, d)
}

impl<'g, F: Scalar> Var<'g, F> {
    /// Softmax over the last axis.
    pub fn softmax_last(self) -> Var<'g, F> {
        let a = self.id;
        let v = self.g.with_value(self, |x| {
            let (n, d) = rows(x);
            let flat = x.view().into_shape_with_order(IxDyn(&[n, d])).unwrap();
            let mut out = flat.to_owned();
            for mut row in out.rows_mut() {
                let mx = row.iter().cloned().fold(F::neg_infinity(), F::max);
                row.mapv_inplace(|e| (e - mx).exp());
                let s = row.sum();
                row.mapv_inplace(|e| e / s);
            }
            out.into_shape_with_order(x.raw_dim()).unwrap()
        });
        let out_id = self.g.len();
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, vals, sink| {
                let y = &vals[out_id];
                let (n, d) = rows(y);
                let y2 = y.view().into_shape_with_order(IxDyn(&[n, d])).unwrap();
                let dy2 = dy.view().into_shape_with_order(IxDyn(&[n, d])).unwrap();
                let mut dx = ndarray::Array2::<F>::zeros((n, d));
                for i in 0..n {
                    let yr = y2.index_axis(Axis(0), i);
                    let dr = dy2.index_axis(Axis(0), i);
                    let dot: F = yr
                        .iter()
                        .zip(dr.iter())
                        .map(|(&yv, &dv)| yv * dv)
                        .fold(F::zero(), |acc, e| acc + e);
                    let mut row = dx.row_mut(i);
                    for j in 0..d {
                        row[j] = yr[j] * (dr[j] - dot);
                    }
                }
                sink.add(a, dx.into_dyn().into_shape_with_order(vals[a].raw_dim()).unwrap());
            }),
        )
    }

    /// Layer normalization over the last axis with learnable `gamma`/`beta`
    /// of shape `[D]`.
    pub fn layer_norm(self, gamma: Var<'g, F>, beta: Var<'g, F>, eps: f64) -> Var<'g, F> {
        let (xid, gid, bid) = (self.id, gamma.id, beta.id);
        let epsf = c::<F>(eps);
        let v = self.g.with_value(self, |x| {
            gamma.g.with_value(gamma, |gm| {
                beta.g.with_value(beta, |bt| {
                    let (n, d) = rows(x);
                    let x2 = x.view().into_shape_with_order(IxDyn(&[n, d])).unwrap();
                    let mut out = ndarray::Array2::<F>::zeros((n, d));
                    let inv_d = c::<F>(1.0 / d as f64);
                    for i in 0..n {
                        let row = x2.index_axis(Axis(0), i);
                        let mu = row.sum() * inv_d;
                        let var = row
                            .iter()
                            .map(|&e| (e - mu) * (e - mu))
                            .fold(F::zero(), |a2, e| a2 + e)
                            * inv_d;
                        let inv_std = F::one() / (var + epsf).sqrt();
                        let mut orow = out.row_mut(i);
                        for j in 0..d {
                            orow[j] = (row[j] - mu) * inv_std * gm[[j]] + bt[[j]];
                        }
                    }
                    out.into_dyn().into_shape_with_order(x.raw_dim()).unwrap()
                })
            })
        });
        self.g.push(
            v,
            &[xid, gid, bid],
            Box::new(move |dy, vals, sink| {
                let x = &vals[xid];
                let gm = &vals[gid];
                let (n, d) = rows(x);
                let x2 = x.view().into_shape_with_order(IxDyn(&[n, d])).unwrap();
                let dy2 = dy.view().into_shape_with_order(IxDyn(&[n, d])).unwrap();
                let inv_d = c::<F>(1.0 / d as f64);
                let mut dx = ndarray::Array2::<F>::zeros((n, d));
                let mut dgamma = ndarray::Array1::<F>::zeros(d);
                let mut dbeta = ndarray::Array1::<F>::zeros(d);
                for i in 0..n {
                    let row = x2.index_axis(Axis(0), i);
                    let drow = dy2.index_axis(Axis(0), i);
                    let mu = row.sum() * inv_d;
                    let var = row
                        .iter()
                        .map(|&e| (e - mu) * (e - mu))
                        .fold(F::zero(), |a2, e| a2 + e)
                        * inv_d;
                    let inv_std = F::one() / (var + epsf).sqrt();
                    // x_hat and reductions
                    let mut sum_dxh = F::zero();
                    let mut sum_dxh_xh = F::zero();
                    let mut xh = vec![F::zero(); d];
                    let mut dxh = vec![F::zero(); d];
                    for j in 0..d {
                        xh[j] = (row[j] - mu) * inv_std;
                        dxh[j] = drow[j] * gm[[j]];
                        sum_dxh = sum_dxh + dxh[j];
                        sum_dxh_xh = sum_dxh_xh + dxh[j] * xh[j];
                        dgamma[j] = dgamma[j] + drow[j] * xh[j];
                        dbeta[j] = dbeta[j] + drow[j];
                    }
                    let mean_dxh = sum_dxh * inv_d;
                    let mean_dxh_xh = sum_dxh_xh * inv_d;
                    let mut out_row = dx.row_mut(i);
                    for j in 0..d {
                        out_row[j] = (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh) * inv_std;
                    }
                }
                if sink.wants(xid) {
                    sink.add(
                        xid,
                        dx.into_dyn().into_shape_with_order(x.raw_dim()).unwrap(),
                    );
                }
                sink.add(gid, dgamma.into_dyn());
                sink.add(bid, dbeta.into_dyn());
            }),
        )
    }

    /// Group normalization of `[B, C, ...]` with per-channel `gamma`/`beta`.
    pub fn group_norm(
        self,
        groups: usize,
        gamma: Var<'g, F>,
        beta: Var<'g, F>,
        eps: f64,
    ) -> Var<'g, F> {
        let (xid, gid, bid) = (self.id, gamma.id, beta.id);
        let dims = self.shape();
        let (nb, ch) = (dims[0], dims[1]);
        assert!(ch % groups == 0, "group_norm: channels not divisible");
        let spatial: usize = dims[2..].iter().product();
        let cg = ch / groups;
        let row_len = cg * spatial;
        let epsf = c::<F>(eps);
        let dims_v = dims.clone();
        let v = self.g.with_value(self, |x| {
            gamma.g.with_value(gamma, |gm| {
                beta.g.with_value(beta, |bt| {
                    let x2 = x
                        .view()
                        .into_shape_with_order(IxDyn(&[nb * groups, row_len]))
                        .unwrap()
                        .into_dimensionality::<Ix2>()
                        .unwrap();
                    let mut out = ndarray::Array2::<F>::zeros((nb * groups, row_len));
                    let inv_n = c::<F>(1.0 / row_len as f64);
                    for r in 0..nb * groups {
                        let grp = r % groups;
                        let row = x2.index_axis(Axis(0), r);
                        let mu = row.sum() * inv_n;
                        let var = row
                            .iter()
                            .map(|&e| (e - mu) * (e - mu))
                            .fold(F::zero(), |a2, e| a2 + e)
                            * inv_n;
                        let inv_std = F::one() / (var + epsf).sqrt();
                        let mut orow = out.row_mut(r);
                        for j in 0..row_len {
                            let chan = grp * cg + j / spatial;
                            orow[j] = (row[j] - mu) * inv_std * gm[[chan]] + bt[[chan]];
                        }
                    }
                    out.into_dyn().into_shape_with_order(IxDyn(&dims_v)).unwrap()
                })
            })
        });
        let dims_b = dims.clone();
        self.g.push(
            v,
            &[xid, gid, bid],
            Box::new(move |dy, vals, sink| {
                let x = &vals[xid];
                let gm = &vals[gid];
                let x2 = x
                    .view()
                    .into_shape_with_order(IxDyn(&[nb * groups, row_len]))
                    .unwrap()
                    .into_dimensionality::<Ix2>()
                    .unwrap();
                let dy2 = dy
                    .view()
                    .into_shape_with_order(IxDyn(&[nb * groups, row_len]))
                    .unwrap()
                    .into_dimensionality::<Ix2>()
                    .unwrap();
                let inv_n = c::<F>(1.0 / row_len as f64);
                let mut dx = ndarray::Array2::<F>::zeros((nb * groups, row_len));
                let mut dgamma = ndarray::Array1::<F>::zeros(ch);
                let mut dbeta = ndarray::Array1::<F>::zeros(ch);
                for r in 0..nb * groups {
                    let grp = r % groups;
                    let row = x2.index_axis(Axis(0), r);
                    let drow = dy2.index_axis(Axis(0), r);
                    let mu = row.sum() * inv_n;
                    let var = row
                        .iter()
                        .map(|&e| (e - mu) * (e - mu))
                        .fold(F::zero(), |a2, e| a2 + e)
                        * inv_n;
                    let inv_std = F::one() / (var + epsf).sqrt();
                    let mut sum_dxh = F::zero();
                    let mut sum_dxh_xh = F::zero();
                    let mut xh = vec![F::zero(); row_len];
                    let mut dxh = vec![F::zero(); row_len];
                    for j in 0..row_len {
                        let chan = grp * cg + j / spatial;
                        xh[j] = (row[j] - mu) * inv_std;
                        dxh[j] = drow[j] * gm[[chan]];
                        sum_dxh = sum_dxh + dxh[j];
                        sum_dxh_xh = sum_dxh_xh + dxh[j] * xh[j];
                        dgamma[chan] = dgamma[chan] + drow[j] * xh[j];
                        dbeta[chan] = dbeta[chan] + drow[j];
                    }
                    let mean_dxh = sum_dxh * inv_n;
                    let mean_dxh_xh = sum_dxh_xh * inv_n;
                    let mut orow = dx.row_mut(r);
                    for j in 0..row_len {
                        orow[j] = (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh) * inv_std;
                    }
                }
                if sink.wants(xid) {
                    sink.add(
                        xid,
                        dx.into_dyn().into_shape_with_order(IxDyn(&dims_b)).unwrap(),
                    );
                }
                sink.add(gid, dgamma.into_dyn());
                sink.add(bid, dbeta.into_dyn());
            }),
        )
    }
}
