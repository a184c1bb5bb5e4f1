//! Dense time-major tensors and tape-based reverse-mode differentiation.
//!
//! A [`TimeTensor`] is an immutable `[steps, batch, units]` array. All
//! arithmetic lives on a [`Tape`](tape::Tape): operations eagerly compute a
//! new tensor and, when any operand requires gradients, record a node so a
//! later reverse sweep can push gradients back to the leaves. Module-level
//! backward rules (neurons, synapses) plug in through
//! [`CustomBackward`](tape::CustomBackward) nodes whose backward pass reads
//! observation tensors injected after execution.

pub mod ops;
pub mod tape;

use std::fmt;
use std::sync::Arc;

use num_traits::Float;

use crate::error::{Error, Result};

/// Scalar element type for one run: `f32` for training, `f64` for
/// verification. Selected per run, never mixed per tensor.
pub trait Real:
    Float
    + num_traits::NumAssign
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    const BITS: u32;

    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Real for f32 {
    const BITS: u32 = 32;

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const BITS: u32 = 64;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn into_f64(self) -> f64 {
        self
    }
}

/// Shape of a time-major tensor: `[steps, batch, units]`.
///
/// Matrices (synapse weights, per-batch scores) use the convention
/// `steps == 1`, with `batch` as rows and `units` as columns.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Shape {
    pub steps: usize,
    pub batch: usize,
    pub units: usize,
}

impl Shape {
    pub fn new(steps: usize, batch: usize, units: usize) -> Self {
        Shape { steps, batch, units }
    }

    /// `[1, rows, cols]` matrix shape.
    pub fn matrix(rows: usize, cols: usize) -> Self {
        Shape { steps: 1, batch: rows, units: cols }
    }

    /// Scalar shape `[1, 1, 1]`.
    pub fn scalar() -> Self {
        Shape { steps: 1, batch: 1, units: 1 }
    }

    pub fn len(&self) -> usize {
        self.steps * self.batch * self.units
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, t: usize, b: usize, n: usize) -> usize {
        (t * self.batch + b) * self.units + n
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}x{}x{}]", self.steps, self.batch, self.units)
    }
}

/// Position of a tensor on a tape: owning tape, node, and output slot.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorRef {
    pub tape: u64,
    pub node: tape::NodeId,
    pub output: u16,
}

/// Immutable dense time-major array with an optional tape attachment.
#[derive(Clone, Debug)]
pub struct TimeTensor<E: Real> {
    shape: Shape,
    data: Arc<[E]>,
    node: Option<TensorRef>,
}

impl<E: Real> TimeTensor<E> {
    /// Build from raw data; the length must match the shape.
    pub fn new(shape: Shape, data: Vec<E>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.len()
            )));
        }
        Ok(TimeTensor { shape, data: data.into(), node: None })
    }

    pub fn zeros(shape: Shape) -> Self {
        TimeTensor { shape, data: vec![E::zero(); shape.len()].into(), node: None }
    }

    pub fn filled(shape: Shape, value: E) -> Self {
        TimeTensor { shape, data: vec![value; shape.len()].into(), node: None }
    }

    /// `[1, rows, cols]` matrix constructor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<E>) -> Result<Self> {
        Self::new(Shape::matrix(rows, cols), data)
    }

    /// Scalar constructor.
    pub fn scalar(value: E) -> Self {
        TimeTensor { shape: Shape::scalar(), data: vec![value].into(), node: None }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    #[inline]
    pub fn get(&self, t: usize, b: usize, n: usize) -> E {
        self.data[self.shape.index(t, b, n)]
    }

    /// Contiguous `[batch * units]` slice for one time step.
    pub fn step_slice(&self, t: usize) -> &[E] {
        let stride = self.shape.batch * self.shape.units;
        &self.data[t * stride..(t + 1) * stride]
    }

    /// The scalar value of a one-element tensor.
    pub fn item(&self) -> E {
        debug_assert_eq!(self.shape.len(), 1);
        self.data[0]
    }

    pub fn node(&self) -> Option<TensorRef> {
        self.node
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Same data, attached to a tape node. Crate-internal: only tapes mint refs.
    pub(crate) fn with_node(&self, node: TensorRef) -> Self {
        TimeTensor { shape: self.shape, data: Arc::clone(&self.data), node: Some(node) }
    }

    /// Same data, detached from any tape.
    pub fn detached(&self) -> Self {
        TimeTensor { shape: self.shape, data: Arc::clone(&self.data), node: None }
    }

    pub fn map<F: Fn(E) -> E>(&self, f: F) -> Self {
        let data: Vec<E> = self.data.iter().map(|&x| f(x)).collect();
        TimeTensor { shape: self.shape, data: data.into(), node: None }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.into_f64()).collect()
    }

    pub fn from_f64_slice(shape: Shape, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| E::from_f64(x)).collect())
    }
}

/// Convert an `f64` constant into the run's element type.
#[inline]
pub fn rf<E: Real>(x: f64) -> E {
    E::from_f64(x)
}
