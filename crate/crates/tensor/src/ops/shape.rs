use crate::graph::Var;
use crate::scalar::Scalar;
use ndarray::{ArrayD, Axis, IxDyn, Slice};

/// Reshape an array that may not be in standard layout.
pub fn reshape_std<F: Scalar>(x: &ArrayD<F>, dims: &[usize]) -> ArrayD<F> {
    let std = x.as_standard_layout().into_owned();
    std.into_shape_with_order(IxDyn(dims))
        .expect("reshape: element count mismatch")
}

impl<'g, F: Scalar> Var<'g, F> {
    pub fn reshape(self, dims: &[usize]) -> Var<'g, F> {
        let a = self.id;
        let v = self.g.with_value(self, |x| reshape_std(x, dims));
        let src_dims: Vec<usize> = self.shape();
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| sink.add(a, reshape_std(dy, &src_dims))),
        )
    }

    pub fn permute(self, axes: &[usize]) -> Var<'g, F> {
        let a = self.id;
        let axes_v = axes.to_vec();
        let v = self.g.with_value(self, |x| {
            x.view()
                .permuted_axes(IxDyn(&axes_v))
                .as_standard_layout()
                .into_owned()
        });
        let mut inv = vec![0usize; axes_v.len()];
        for (i, &ax) in axes_v.iter().enumerate() {
            inv[ax] = i;
        }
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| {
                sink.add(
                    a,
                    dy.view()
                        .permuted_axes(IxDyn(&inv))
                        .as_standard_layout()
                        .into_owned(),
                )
            }),
        )
    }

    /// Broadcast to `dims`. Requires same rank; size-1 axes expand.
    pub fn broadcast_to(self, dims: &[usize]) -> Var<'g, F> {
        let a = self.id;
        let src_dims = self.shape();
        assert_eq!(src_dims.len(), dims.len(), "broadcast_to: rank mismatch");
        let dims_v = dims.to_vec();
        let v = self.g.with_value(self, |x| {
            x.broadcast(IxDyn(&dims_v))
                .expect("broadcast_to: incompatible shapes")
                .to_owned()
        });
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| {
                let mut g = dy.clone();
                for (ax, (&s, &d)) in src_dims.iter().zip(dims_v.iter()).enumerate() {
                    if s == 1 && d > 1 {
                        let summed = g.sum_axis(Axis(ax)).insert_axis(Axis(ax));
                        g = summed;
                    }
                }
                sink.add(a, g);
            }),
        )
    }

    /// Slice `len` elements starting at `start` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g, F> {
        let a = self.id;
        let src_dims = self.shape();
        let v = self.g.with_value(self, |x| {
            x.slice_axis(Axis(axis), Slice::from(start..start + len))
                .to_owned()
        });
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| {
                let mut g = ArrayD::zeros(IxDyn(&src_dims));
                g.slice_axis_mut(Axis(axis), Slice::from(start..start + len))
                    .assign(dy);
                sink.add(a, g);
            }),
        )
    }

    /// Cyclic shift along two axes (positive shifts move content toward
    /// higher indices).
    pub fn roll2(self, axis_a: usize, shift_a: isize, axis_b: usize, shift_b: isize) -> Var<'g, F> {
        let a = self.id;
        let v = self
            .g
            .with_value(self, |x| roll_array(x, axis_a, shift_a, axis_b, shift_b));
        self.g.push(
            v,
            &[a],
            Box::new(move |dy, _vals, sink| {
                sink.add(a, roll_array(dy, axis_a, -shift_a, axis_b, -shift_b))
            }),
        )
    }
}

fn roll_array<F: Scalar>(
    x: &ArrayD<F>,
    axis_a: usize,
    shift_a: isize,
    axis_b: usize,
    shift_b: isize,
) -> ArrayD<F> {
    let mut out = x.clone();
    roll_axis_inplace(&mut out, x, axis_a, shift_a);
    let tmp = out.clone();
    roll_axis_inplace(&mut out, &tmp, axis_b, shift_b);
    out
}

fn roll_axis_inplace<F: Scalar>(out: &mut ArrayD<F>, x: &ArrayD<F>, axis: usize, shift: isize) {
    let n = x.shape()[axis] as isize;
    if n == 0 {
        return;
    }
    let s = shift.rem_euclid(n);
    if s == 0 {
        out.assign(x);
        return;
    }
    let s = s as usize;
    let n = n as usize;
    // dest[i] = src[(i - s) mod n]
    out.slice_axis_mut(Axis(axis), Slice::from(s..n))
        .assign(&x.slice_axis(Axis(axis), Slice::from(0..n - s)));
    out.slice_axis_mut(Axis(axis), Slice::from(0..s))
        .assign(&x.slice_axis(Axis(axis), Slice::from(n - s..n)));
}

/// Concatenate along `axis`.
pub fn concat<'g, F: Scalar>(axis: usize, parts: &[Var<'g, F>]) -> Var<'g, F> {
    assert!(!parts.is_empty());
    let g = parts[0].g;
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let views: Vec<ArrayD<F>> = parts.iter().map(|p| p.value()).collect();
    let v = ndarray::concatenate(
        Axis(axis),
        &views.iter().map(|a| a.view()).collect::<Vec<_>>(),
    )
    .expect("concat: incompatible shapes");
    let sizes: Vec<usize> = views.iter().map(|a| a.shape()[axis]).collect();
    let parent_ids = ids.clone();
    g.push(
        v,
        &parent_ids,
        Box::new(move |dy, _vals, sink| {
            let mut off = 0usize;
            for (i, &sz) in sizes.iter().enumerate() {
                let part = dy
                    .slice_axis(Axis(axis), Slice::from(off..off + sz))
                    .to_owned();
                sink.add(ids[i], part);
                off += sz;
            }
        }),
    )
}
