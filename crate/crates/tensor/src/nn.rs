use crate::graph::{Grads, Graph, Var};
use crate::scalar::{c, Scalar};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use std::cell::RefCell;
use std::collections::BTreeMap;

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// Kaiming-style normal: std = sqrt(2 / fan_in).
    KaimingNormal { fan_in: usize },
    Uniform(f64, f64),
}

/// Named parameter arrays. Iteration order is lexicographic, which fixes the
/// optimizer update and checkpoint layout.
pub struct ParamStore<F: Scalar> {
    map: BTreeMap<String, ArrayD<F>>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            map: BTreeMap::new(),
        }
    }

    pub fn register<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        dims: &[usize],
        init: Init,
        rng: &mut R,
    ) {
        assert!(
            !self.map.contains_key(name),
            "duplicate parameter {name:?}"
        );
        let arr = match init {
            Init::Zeros => ArrayD::zeros(IxDyn(dims)),
            Init::Ones => ArrayD::from_elem(IxDyn(dims), F::one()),
            Init::Normal(std) => {
                let mut a = ArrayD::zeros(IxDyn(dims));
                for e in a.iter_mut() {
                    *e = F::sample_standard_normal(rng) * c(std);
                }
                a
            }
            Init::KaimingNormal { fan_in } => {
                let std = (2.0 / fan_in as f64).sqrt();
                let mut a = ArrayD::zeros(IxDyn(dims));
                for e in a.iter_mut() {
                    *e = F::sample_standard_normal(rng) * c(std);
                }
                a
            }
            Init::Uniform(lo, hi) => {
                let mut a = ArrayD::zeros(IxDyn(dims));
                for e in a.iter_mut() {
                    *e = F::sample_uniform(rng, lo, hi);
                }
                a
            }
        };
        self.map.insert(name.to_string(), arr);
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<F>) {
        self.map.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<F> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<F> {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<F>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<F>)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn n_elements(&self) -> usize {
        self.map.values().map(|a| a.len()).sum()
    }

    /// Convert every parameter through `f64` into another element type.
    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        let mut out = ParamStore::new();
        for (k, v) in &self.map {
            out.map
                .insert(k.clone(), v.mapv(|e| G::from_f64(e.to_f64())));
        }
        out
    }
}

/// Decides which parameters are gradient targets for a given pass.
#[derive(Debug, Clone)]
pub enum TrainMask {
    All,
    None,
    /// Parameters whose name starts with any of these prefixes.
    Prefixes(Vec<String>),
}

impl TrainMask {
    pub fn prefixes(list: &[&str]) -> Self {
        TrainMask::Prefixes(list.iter().map(|s| s.to_string()).collect())
    }

    pub fn matches(&self, name: &str) -> bool {
        match self {
            TrainMask::All => true,
            TrainMask::None => false,
            TrainMask::Prefixes(ps) => ps.iter().any(|p| name.starts_with(p.as_str())),
        }
    }
}

/// Per-forward context binding a graph to a parameter store. Each parameter
/// becomes a single leaf per graph so that repeated uses share gradients.
pub struct Ctx<'g, F: Scalar> {
    pub graph: &'g Graph<F>,
    store: &'g ParamStore<F>,
    mask: TrainMask,
    leaves: RefCell<BTreeMap<String, usize>>,
}

impl<'g, F: Scalar> Ctx<'g, F> {
    pub fn new(graph: &'g Graph<F>, store: &'g ParamStore<F>, mask: TrainMask) -> Self {
        Ctx {
            graph,
            store,
            mask,
            leaves: RefCell::new(BTreeMap::new()),
        }
    }

    /// Leaf for a named parameter (cached per graph).
    pub fn p(&self, name: &str) -> Var<'g, F> {
        if let Some(&id) = self.leaves.borrow().get(name) {
            return Var {
                g: self.graph,
                id,
            };
        }
        let v = self
            .graph
            .leaf(self.store.get(name).clone(), self.mask.matches(name));
        self.leaves.borrow_mut().insert(name.to_string(), v.id);
        v
    }

    pub fn constant(&self, value: ArrayD<F>) -> Var<'g, F> {
        self.graph.constant(value)
    }

    /// Map the backward result to named parameter gradients (trainable leaves
    /// only; missing entries mean an exactly-zero gradient).
    pub fn grads_by_name(&self, grads: &mut Grads<F>) -> BTreeMap<String, ArrayD<F>> {
        let mut out = BTreeMap::new();
        for (name, &id) in self.leaves.borrow().iter() {
            if !self.mask.matches(name) {
                continue;
            }
            let v = Var {
                g: self.graph,
                id,
            };
            if let Some(g) = grads.take(v) {
                out.insert(name.clone(), g);
            }
        }
        out
    }
}

/// Fully connected layer acting on the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: String,
    pub b: String,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        d_in: usize,
        d_out: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w = format!("{name}.w");
        let b = format!("{name}.b");
        store.register(&w, &[d_in, d_out], init, rng);
        store.register(&b, &[d_out], Init::Zeros, rng);
        Linear {
            w,
            b,
            d_in,
            d_out,
        }
    }

    /// `x`: `[..., d_in]` -> `[..., d_out]`
    pub fn forward<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, x: Var<'g, F>) -> Var<'g, F> {
        let dims = x.shape();
        let n: usize = dims[..dims.len() - 1].iter().product();
        let flat = x.reshape(&[n, self.d_in]);
        let y = flat.matmul(ctx.p(&self.w));
        let b = ctx
            .p(&self.b)
            .reshape(&[1, self.d_out])
            .broadcast_to(&[n, self.d_out]);
        let y = y.add(b);
        let mut out_dims = dims[..dims.len() - 1].to_vec();
        out_dims.push(self.d_out);
        y.reshape(&out_dims)
    }
}

/// 3-d convolution layer.
#[derive(Debug, Clone)]
pub struct Conv3d {
    pub w: String,
    pub b: String,
    pub spec: crate::ops::conv::Conv3Spec,
}

impl Conv3d {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        c_in: usize,
        c_out: usize,
        spec: crate::ops::conv::Conv3Spec,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w = format!("{name}.w");
        let b = format!("{name}.b");
        let (kd, kh, kw) = spec.kernel;
        store.register(&w, &[c_out, c_in, kd, kh, kw], init, rng);
        store.register(&b, &[c_out], Init::Zeros, rng);
        Conv3d { w, b, spec }
    }

    pub fn forward<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, x: Var<'g, F>) -> Var<'g, F> {
        x.conv3d(ctx.p(&self.w), ctx.p(&self.b), self.spec)
    }
}

/// 2-d convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: String,
    pub b: String,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w = format!("{name}.w");
        let b = format!("{name}.b");
        store.register(&w, &[c_out, c_in, kernel.0, kernel.1], init, rng);
        store.register(&b, &[c_out], Init::Zeros, rng);
        Conv2d {
            w,
            b,
            kernel,
            stride,
            pad,
        }
    }

    pub fn forward<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, x: Var<'g, F>) -> Var<'g, F> {
        x.conv2d(ctx.p(&self.w), ctx.p(&self.b), self.kernel, self.stride, self.pad)
    }
}

/// Layer norm with learnable affine over the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub g: String,
    pub b: String,
    pub eps: f64,
}

impl LayerNorm {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        d: usize,
        rng: &mut R,
    ) -> Self {
        let g = format!("{name}.g");
        let b = format!("{name}.b");
        store.register(&g, &[d], Init::Ones, rng);
        store.register(&b, &[d], Init::Zeros, rng);
        LayerNorm {
            g,
            b,
            eps: 1e-5,
        }
    }

    pub fn forward<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, x: Var<'g, F>) -> Var<'g, F> {
        x.layer_norm(ctx.p(&self.g), ctx.p(&self.b), self.eps)
    }
}

/// Group norm with learnable per-channel affine.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub g: String,
    pub b: String,
    pub groups: usize,
    pub eps: f64,
}

impl GroupNorm {
    pub fn register<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        channels: usize,
        rng: &mut R,
    ) -> Self {
        let groups = [8usize, 4, 2, 1]
            .into_iter()
            .find(|g| channels % g == 0)
            .unwrap_or(1);
        let g = format!("{name}.g");
        let b = format!("{name}.b");
        store.register(&g, &[channels], Init::Ones, rng);
        store.register(&b, &[channels], Init::Zeros, rng);
        GroupNorm {
            g,
            b,
            groups,
            eps: 1e-5,
        }
    }

    pub fn forward<'g, F: Scalar>(&self, ctx: &Ctx<'g, F>, x: Var<'g, F>) -> Var<'g, F> {
        x.group_norm(self.groups, ctx.p(&self.g), ctx.p(&self.b), self.eps)
    }
}
