//! Layers, loss and optimizer with hand-derived backward passes.
//!
//! Tensors are flat row-major `f64` slices; every layer documents its
//! layout. Forward passes take `&self` and return whatever the backward pass
//! needs; backward passes accumulate into [`Param::grad`].

pub mod activation;
pub mod batch_norm;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod gru;
pub mod kernels;
pub mod loss;
pub mod message_passing;
pub mod optim;
mod param;

pub use param::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
