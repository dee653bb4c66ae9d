//! Reverse-mode autodiff on dynamic-rank `ndarray` tensors.
//!
//! A fresh [`Graph`] is built per forward pass; [`Graph::backward`] walks the
//! tape from a scalar loss. Everything is sequential and allocation-order
//! stable, so training runs are reproducible bit for bit under a fixed seed.

pub mod adam;
pub mod check;
pub mod graph;
pub mod nn;
pub mod ops;
pub mod rng;
pub mod scalar;

pub use adam::Adam;
pub use graph::{Grads, Graph, Var};
pub use nn::{Conv2d, Conv3d, Ctx, GroupNorm, Init, LayerNorm, Linear, ParamStore, TrainMask};
pub use ops::conv::Conv3Spec;
pub use ops::elementwise::{add_n, sigmoid_array};
pub use ops::shape::{concat, reshape_std};
pub use scalar::{c, Scalar};
