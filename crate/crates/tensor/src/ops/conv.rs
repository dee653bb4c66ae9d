use crate::graph::Var;
use crate::scalar::{c, Scalar};
use ndarray::{ArrayD, ArrayView2, ArrayViewMut2, Ix2, IxDyn};

#[derive(Debug, Clone, Copy)]
pub struct Conv3Spec {
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

impl Conv3Spec {
    pub fn same(kernel: (usize, usize, usize)) -> Self {
        Conv3Spec {
            kernel,
            stride: (1, 1, 1),
            pad: (kernel.0 / 2, kernel.1 / 2, kernel.2 / 2),
        }
    }

    pub fn with_stride(mut self, stride: (usize, usize, usize)) -> Self {
        self.stride = stride;
        self
    }

    fn out_dims(&self, d: usize, h: usize, w: usize) -> (usize, usize, usize) {
        let od = (d + 2 * self.pad.0 - self.kernel.0) / self.stride.0 + 1;
        let oh = (h + 2 * self.pad.1 - self.kernel.1) / self.stride.1 + 1;
        let ow = (w + 2 * self.pad.2 - self.kernel.2) / self.stride.2 + 1;
        (od, oh, ow)
    }
}

/// Expand input patches into a `[Cin*kd*kh*kw, OD*OH*OW]` matrix.
fn im2col<F: Scalar>(x: &ArrayD<F>, b: usize, spec: &Conv3Spec) -> ndarray::Array2<F> {
    let (cin, d, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3], x.shape()[4]);
    let (kd, kh, kw) = spec.kernel;
    let (sd, sh, sw) = spec.stride;
    let (pd, ph, pw) = spec.pad;
    let (od, oh, ow) = spec.out_dims(d, h, w);
    let rows = cin * kd * kh * kw;
    let cols = od * oh * ow;
    let mut col = ndarray::Array2::<F>::zeros((rows, cols));
    let xs = x.as_slice().expect("im2col: non-contiguous input");
    let base = b * cin * d * h * w;
    for ci in 0..cin {
        for zk in 0..kd {
            for yk in 0..kh {
                for xk in 0..kw {
                    let row = ((ci * kd + zk) * kh + yk) * kw + xk;
                    let mut dst_row = col.row_mut(row);
                    let dst = dst_row.as_slice_mut().unwrap();
                    for oz in 0..od {
                        let iz = (oz * sd + zk) as isize - pd as isize;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * sh + yk) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let dst_off = (oz * oh + oy) * ow;
                            let src_row =
                                base + ((ci * d + iz as usize) * h + iy as usize) * w;
                            if sw == 1 {
                                // contiguous span along the W axis
                                let ix0 = xk as isize - pw as isize;
                                let ox_lo = (-ix0).max(0) as usize;
                                let ox_hi = ((w as isize - ix0).min(ow as isize)).max(0) as usize;
                                if ox_lo < ox_hi {
                                    let src0 =
                                        (src_row as isize + ix0 + ox_lo as isize) as usize;
                                    dst[dst_off + ox_lo..dst_off + ox_hi]
                                        .copy_from_slice(&xs[src0..src0 + (ox_hi - ox_lo)]);
                                }
                            } else {
                                for ox in 0..ow {
                                    let ix = (ox * sw + xk) as isize - pw as isize;
                                    if ix >= 0 && ix < w as isize {
                                        dst[dst_off + ox] = xs[src_row + ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add a column matrix back onto the input gradient.
fn col2im<F: Scalar>(
    dcol: &ndarray::Array2<F>,
    dx: &mut ArrayD<F>,
    b: usize,
    spec: &Conv3Spec,
) {
    let (cin, d, h, w) = (dx.shape()[1], dx.shape()[2], dx.shape()[3], dx.shape()[4]);
    let (kd, kh, kw) = spec.kernel;
    let (sd, sh, sw) = spec.stride;
    let (pd, ph, pw) = spec.pad;
    let (od, oh, ow) = spec.out_dims(d, h, w);
    let xs = dx.as_slice_mut().expect("col2im: non-contiguous grad");
    let base = b * cin * d * h * w;
    for ci in 0..cin {
        for zk in 0..kd {
            for yk in 0..kh {
                for xk in 0..kw {
                    let row = ((ci * kd + zk) * kh + yk) * kw + xk;
                    let src_row = dcol.row(row);
                    let src = src_row.as_slice().unwrap();
                    for oz in 0..od {
                        let iz = (oz * sd + zk) as isize - pd as isize;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * sh + yk) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src_off = (oz * oh + oy) * ow;
                            let dst_row =
                                base + ((ci * d + iz as usize) * h + iy as usize) * w;
                            for ox in 0..ow {
                                let ix = (ox * sw + xk) as isize - pw as isize;
                                if ix >= 0 && ix < w as isize {
                                    let i = dst_row + ix as usize;
                                    xs[i] = xs[i] + src[src_off + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn weight2<F: Scalar>(wt: &ArrayD<F>) -> ArrayView2<'_, F> {
    let co = wt.shape()[0];
    let k: usize = wt.shape()[1..].iter().product();
    wt.view()
        .into_shape_with_order(IxDyn(&[co, k]))
        .unwrap()
        .into_dimensionality::<Ix2>()
        .unwrap()
}

impl<'g, F: Scalar> Var<'g, F> {
    /// 3-d convolution. `self`: `[B, Cin, D, H, W]`, `weight`:
    /// `[Cout, Cin, kd, kh, kw]`, `bias`: `[Cout]`.
    pub fn conv3d(self, weight: Var<'g, F>, bias: Var<'g, F>, spec: Conv3Spec) -> Var<'g, F> {
        let (xid, wid, bid) = (self.id, weight.id, bias.id);
        let v = self.g.with_value(self, |x| {
            weight.g.with_value(weight, |wt| {
                bias.g.with_value(bias, |bs| conv3d_forward(x, wt, bs, &spec))
            })
        });
        self.g.push(
            v,
            &[xid, wid, bid],
            Box::new(move |dy, vals, sink| {
                let x = &vals[xid];
                let wt = &vals[wid];
                let nb = x.shape()[0];
                let co = wt.shape()[0];
                let p: usize = dy.shape()[2..].iter().product();
                let dy_flat = dy
                    .view()
                    .into_shape_with_order(IxDyn(&[nb, co, p]))
                    .unwrap();
                if sink.wants(bid) {
                    let mut db = ndarray::Array1::<F>::zeros(co);
                    for b in 0..nb {
                        for ci in 0..co {
                            let row = dy_flat.slice(ndarray::s![b, ci, ..]);
                            db[ci] = db[ci] + row.sum();
                        }
                    }
                    sink.add(bid, db.into_dyn());
                }
                let w2 = weight2(wt);
                let mut dwt = if sink.wants(wid) {
                    Some(ndarray::Array2::<F>::zeros((co, w2.shape()[1])))
                } else {
                    None
                };
                let mut dx = if sink.wants(xid) {
                    Some(ArrayD::<F>::zeros(x.raw_dim()))
                } else {
                    None
                };
                for b in 0..nb {
                    let dy_b = dy_flat
                        .index_axis(ndarray::Axis(0), b)
                        .into_dimensionality::<Ix2>()
                        .unwrap();
                    if dwt.is_some() || dx.is_some() {
                        if let Some(dw) = &mut dwt {
                            let col = im2col(x, b, &spec);
                            let contrib = dy_b.dot(&col.t());
                            dw.zip_mut_with(&contrib, |a2, &b2| *a2 = *a2 + b2);
                        }
                        if let Some(dx_arr) = &mut dx {
                            let dcol = w2.t().dot(&dy_b);
                            col2im(&dcol, dx_arr, b, &spec);
                        }
                    }
                }
                if let Some(dw) = dwt {
                    let dw_shaped = dw
                        .into_dyn()
                        .into_shape_with_order(vals[wid].raw_dim())
                        .unwrap();
                    sink.add(wid, dw_shaped);
                }
                if let Some(dx_arr) = dx {
                    sink.add(xid, dx_arr);
                }
            }),
        )
    }

    /// 2-d convolution on `[B, Cin, H, W]` via the 3-d engine.
    pub fn conv2d(
        self,
        weight: Var<'g, F>,
        bias: Var<'g, F>,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Var<'g, F> {
        let dims = self.shape();
        let (b, ci, h, w) = (dims[0], dims[1], dims[2], dims[3]);
        let x5 = self.reshape(&[b, ci, 1, h, w]);
        let wdims = weight.shape();
        let w5 = weight.reshape(&[wdims[0], wdims[1], 1, wdims[2], wdims[3]]);
        let spec = Conv3Spec {
            kernel: (1, kernel.0, kernel.1),
            stride: (1, stride.0, stride.1),
            pad: (0, pad.0, pad.1),
        };
        let out = x5.conv3d(w5, bias, spec);
        let odims = out.shape();
        out.reshape(&[odims[0], odims[1], odims[3], odims[4]])
    }

    /// Non-overlapping average pooling on `[B, C, H, W]`.
    pub fn avg_pool2d(self, k: usize) -> Var<'g, F> {
        let a = self.id;
        let dims = self.shape();
        let (nb, ch, h, w) = (dims[0], dims[1], dims[2], dims[3]);
        assert!(h % k == 0 && w % k == 0, "avg_pool2d: size not divisible");
        let (oh, ow) = (h / k, w / k);
        let inv = c::<F>(1.0 / (k * k) as f64);
        let v = self.g.with_value(self, |x| {
            let mut out = ArrayD::<F>::zeros(IxDyn(&[nb, ch, oh, ow]));
            for b in 0..nb {
                for ci in 0..ch {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut s = F::zero();
                            for dy in 0..k {
                                for dx in 0..k {
                                    s = s + x[[b, ci, oy * k + dy, ox * k + dx]];
                                }
                            }
                            out[[b, ci, oy, ox]] = s * inv;
                        }
                    }
                }
            }
            out
        });
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| {
                let mut dx = ArrayD::<F>::zeros(IxDyn(&[nb, ch, h, w]));
                for b in 0..nb {
                    for ci in 0..ch {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g = dy[[b, ci, oy, ox]] * inv;
                                for ddy in 0..k {
                                    for ddx in 0..k {
                                        dx[[b, ci, oy * k + ddy, ox * k + ddx]] = g;
                                    }
                                }
                            }
                        }
                    }
                }
                sink.add(a, dx);
            }),
        )
    }

    /// Nearest-neighbour upsampling on `[B, C, H, W]`.
    pub fn upsample_nearest2d(self, k: usize) -> Var<'g, F> {
        let a = self.id;
        let dims = self.shape();
        let (nb, ch, h, w) = (dims[0], dims[1], dims[2], dims[3]);
        let v = self.g.with_value(self, |x| {
            let mut out = ArrayD::<F>::zeros(IxDyn(&[nb, ch, h * k, w * k]));
            for b in 0..nb {
                for ci in 0..ch {
                    for y in 0..h * k {
                        for xq in 0..w * k {
                            out[[b, ci, y, xq]] = x[[b, ci, y / k, xq / k]];
                        }
                    }
                }
            }
            out
        });
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| {
                let mut dx = ArrayD::<F>::zeros(IxDyn(&[nb, ch, h, w]));
                for b in 0..nb {
                    for ci in 0..ch {
                        for y in 0..h * k {
                            for xq in 0..w * k {
                                dx[[b, ci, y / k, xq / k]] =
                                    dx[[b, ci, y / k, xq / k]] + dy[[b, ci, y, xq]];
                            }
                        }
                    }
                }
                sink.add(a, dx);
            }),
        )
    }

    /// Bilinear resize of `[B, C, H, W]` to `(oh, ow)` (half-pixel centers,
    /// edges clamped).
    pub fn interp_bilinear2d(self, oh: usize, ow: usize) -> Var<'g, F> {
        let a = self.id;
        let dims = self.shape();
        let (nb, ch, h, w) = (dims[0], dims[1], dims[2], dims[3]);
        let taps_y = bilinear_taps(h, oh);
        let taps_x = bilinear_taps(w, ow);
        let (ty_f, tx_f) = (taps_y.clone(), taps_x.clone());
        let v = self.g.with_value(self, |x| {
            let mut out = ArrayD::<F>::zeros(IxDyn(&[nb, ch, oh, ow]));
            for b in 0..nb {
                for ci in 0..ch {
                    for oy in 0..oh {
                        let (y0, y1, wy) = ty_f[oy];
                        for ox in 0..ow {
                            let (x0, x1, wx) = tx_f[ox];
                            let v00 = x[[b, ci, y0, x0]].to_f64();
                            let v01 = x[[b, ci, y0, x1]].to_f64();
                            let v10 = x[[b, ci, y1, x0]].to_f64();
                            let v11 = x[[b, ci, y1, x1]].to_f64();
                            let top = v00 * (1.0 - wx) + v01 * wx;
                            let bot = v10 * (1.0 - wx) + v11 * wx;
                            out[[b, ci, oy, ox]] = c(top * (1.0 - wy) + bot * wy);
                        }
                    }
                }
            }
            out
        });
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| {
                let mut dx = ArrayD::<F>::zeros(IxDyn(&[nb, ch, h, w]));
                for b in 0..nb {
                    for ci in 0..ch {
                        for oy in 0..oh {
                            let (y0, y1, wy) = taps_y[oy];
                            for ox in 0..ow {
                                let (x0, x1, wx) = taps_x[ox];
                                let g = dy[[b, ci, oy, ox]].to_f64();
                                dx[[b, ci, y0, x0]] =
                                    dx[[b, ci, y0, x0]] + c(g * (1.0 - wy) * (1.0 - wx));
                                dx[[b, ci, y0, x1]] = dx[[b, ci, y0, x1]] + c(g * (1.0 - wy) * wx);
                                dx[[b, ci, y1, x0]] = dx[[b, ci, y1, x0]] + c(g * wy * (1.0 - wx));
                                dx[[b, ci, y1, x1]] = dx[[b, ci, y1, x1]] + c(g * wy * wx);
                            }
                        }
                    }
                }
                sink.add(a, dx);
            }),
        )
    }
}

/// (lo index, hi index, weight of hi) per output position.
fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            let w = (src - lo as f64).clamp(0.0, 1.0);
            (lo, hi, w)
        })
        .collect()
}

fn conv3d_forward<F: Scalar>(
    x: &ArrayD<F>,
    wt: &ArrayD<F>,
    bias: &ArrayD<F>,
    spec: &Conv3Spec,
) -> ArrayD<F> {
    assert_eq!(x.ndim(), 5, "conv3d: input must be [B,C,D,H,W]");
    let (nb, cin, d, h, w) = (
        x.shape()[0],
        x.shape()[1],
        x.shape()[2],
        x.shape()[3],
        x.shape()[4],
    );
    assert_eq!(wt.shape()[1], cin, "conv3d: channel mismatch");
    let co = wt.shape()[0];
    let (od, oh, ow) = spec.out_dims(d, h, w);
    let p = od * oh * ow;
    let w2 = weight2(wt);
    let mut out = ArrayD::<F>::zeros(IxDyn(&[nb, co, od, oh, ow]));
    for b in 0..nb {
        let col = im2col(x, b, spec);
        let res = w2.dot(&col); // [Cout, P]
        let mut dst: ArrayViewMut2<'_, F> = out
            .view_mut()
            .into_shape_with_order(IxDyn(&[nb, co, p]))
            .unwrap()
            .index_axis_move(ndarray::Axis(0), b)
            .into_dimensionality::<Ix2>()
            .unwrap();
        dst.assign(&res);
        for ci in 0..co {
            let bv = bias[[ci]];
            dst.row_mut(ci).mapv_inplace(|e| e + bv);
        }
    }
    out
}
