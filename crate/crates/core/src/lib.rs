//! snnforge: deferred-execution spiking neural network modeling and training
//! on an emulated analog neuromorphic backend.
//!
//! Networks are declared eagerly — module invocations register into an
//! [`graph::Instance`] and return promise handles — and executed explicitly
//! with [`graph::Instance::run`], which lowers the registered invocations to
//! an execution graph, drives the backend, and fills the handles with
//! observables. Training runs with surrogate gradients whose backward pass
//! consumes observation tensors injected from the (emulated) hardware.

pub mod backend;
pub mod error;
pub mod tensor;
pub mod transforms;

pub use error::{Error, Result};
