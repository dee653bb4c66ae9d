use crate::scalar::Scalar;
use ndarray::ArrayD;
use std::cell::RefCell;

/// Gradient accumulator passed to backward closures.
pub struct GradSink<'a, F: Scalar> {
    grads: &'a mut Vec<Option<ArrayD<F>>>,
    needs: &'a [bool],
}

impl<'a, F: Scalar> GradSink<'a, F> {
    /// Accumulate a gradient contribution into node `id`. Contributions for
    /// nodes that are not on any path to a trainable leaf are dropped.
    pub fn add(&mut self, id: usize, contribution: ArrayD<F>) {
        if !self.needs[id] {
            return;
        }
        match &mut self.grads[id] {
            Some(g) => g.zip_mut_with(&contribution, |a, &b| *a = *a + b),
            slot @ None => *slot = Some(contribution),
        }
    }

    pub fn wants(&self, id: usize) -> bool {
        self.needs[id]
    }
}

type BackFn<F> = Box<dyn Fn(&ArrayD<F>, &[ArrayD<F>], &mut GradSink<'_, F>)>;

struct Inner<F: Scalar> {
    values: Vec<ArrayD<F>>,
    needs: Vec<bool>,
    backs: Vec<Option<BackFn<F>>>,
}

/// A dynamic computation tape. One graph is built per forward pass; `backward`
/// walks it in reverse. All operations are sequential and allocation order is
/// fixed by the program, so results are bit-reproducible.
pub struct Graph<F: Scalar> {
    inner: RefCell<Inner<F>>,
}

/// Handle to a node in a [`Graph`]. Cheap to copy.
pub struct Var<'g, F: Scalar> {
    pub(crate) g: &'g Graph<F>,
    pub(crate) id: usize,
}

impl<F: Scalar> Clone for Var<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<F: Scalar> Copy for Var<'_, F> {}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Grads<F: Scalar> {
    by_id: Vec<Option<ArrayD<F>>>,
}

impl<F: Scalar> Grads<F> {
    pub fn get(&self, v: Var<'_, F>) -> Option<&ArrayD<F>> {
        self.by_id.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var<'_, F>) -> Option<ArrayD<F>> {
        self.by_id.get_mut(v.id).and_then(|g| g.take())
    }
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            inner: RefCell::new(Inner {
                values: Vec::new(),
                needs: Vec::new(),
                backs: Vec::new(),
            }),
        }
    }

    /// A leaf node. `trainable` marks it as a gradient target.
    pub fn leaf(&self, value: ArrayD<F>, trainable: bool) -> Var<'_, F> {
        let mut inn = self.inner.borrow_mut();
        inn.values.push(value);
        inn.needs.push(trainable);
        inn.backs.push(None);
        Var {
            g: self,
            id: inn.values.len() - 1,
        }
    }

    /// A leaf that never receives gradients.
    pub fn constant(&self, value: ArrayD<F>) -> Var<'_, F> {
        self.leaf(value, false)
    }

    /// Number of nodes currently on the tape.
    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Clone out the value of a node.
    pub fn value(&self, v: Var<'_, F>) -> ArrayD<F> {
        self.inner.borrow().values[v.id].clone()
    }

    /// Run `f` with a borrow of the node's value (avoids the clone).
    pub fn with_value<R>(&self, v: Var<'_, F>, f: impl FnOnce(&ArrayD<F>) -> R) -> R {
        f(&self.inner.borrow().values[v.id])
    }

    pub fn shape(&self, v: Var<'_, F>) -> Vec<usize> {
        self.inner.borrow().values[v.id].shape().to_vec()
    }

    /// Push a computed node. `parents` decides gradient-need propagation;
    /// `back` receives (dy, all node values, sink).
    pub(crate) fn push(
        &self,
        value: ArrayD<F>,
        parents: &[usize],
        back: BackFn<F>,
    ) -> Var<'_, F> {
        let mut inn = self.inner.borrow_mut();
        let needs = parents.iter().any(|&p| inn.needs[p]);
        inn.values.push(value);
        inn.needs.push(needs);
        inn.backs.push(if needs { Some(back) } else { None });
        Var {
            g: self,
            id: inn.values.len() - 1,
        }
    }

    /// Reverse sweep from a scalar loss. Returns per-node gradients; map leaf
    /// handles back to names on the caller side.
    pub fn backward(&self, loss: Var<'_, F>) -> Grads<F> {
        let inn = self.inner.borrow();
        let n = inn.values.len();
        assert_eq!(
            inn.values[loss.id].len(),
            1,
            "backward expects a scalar loss node"
        );
        let mut grads: Vec<Option<ArrayD<F>>> = vec![None; n];
        grads[loss.id] = Some(ArrayD::from_elem(inn.values[loss.id].raw_dim(), F::one()));
        for id in (0..=loss.id).rev() {
            if grads[id].is_none() {
                continue;
            }
            if let Some(back) = &inn.backs[id] {
                let dy = grads[id].take().unwrap();
                let mut sink = GradSink {
                    grads: &mut grads,
                    needs: &inn.needs,
                };
                back(&dy, &inn.values, &mut sink);
            }
        }
        Grads { by_id: grads }
    }
}

impl<'g, F: Scalar> Var<'g, F> {
    pub fn graph(&self) -> &'g Graph<F> {
        self.g
    }

    pub fn value(&self) -> ArrayD<F> {
        self.g.value(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.g.shape(*self)
    }

    /// Cut the tape: returns a constant with this node's value.
    pub fn detach(&self) -> Var<'g, F> {
        self.g.constant(self.value())
    }
}
