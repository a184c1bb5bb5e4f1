//! Gradient tape: eager forward computation with recorded backward rules.

use std::cell::{Cell, RefCell};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::ops;
use super::{rf, Real, Shape, TensorRef, TimeTensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Index of a node on its tape.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(pub(crate) usize);

/// Provenance of a tensor read during the backward pass. The
/// hardware-in-the-loop contract is checked against these tags: with the
/// emulator active, backward must never touch mock-simulated state.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DataTag {
    EmulatorObservation,
    MockObservation,
    Parameter,
    ExternalInput,
    Derived,
}

/// Read counts per provenance tag, aggregated over one backward sweep.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct ReadStats {
    pub emulator_observation: u64,
    pub mock_observation: u64,
    pub parameter: u64,
    pub external_input: u64,
    pub derived: u64,
}

#[derive(Default)]
struct ReadCounters {
    emulator: Cell<u64>,
    mock: Cell<u64>,
    parameter: Cell<u64>,
    external: Cell<u64>,
    derived: Cell<u64>,
}

impl ReadCounters {
    fn count(&self, tag: DataTag) {
        let cell = match tag {
            DataTag::EmulatorObservation => &self.emulator,
            DataTag::MockObservation => &self.mock,
            DataTag::Parameter => &self.parameter,
            DataTag::ExternalInput => &self.external,
            DataTag::Derived => &self.derived,
        };
        cell.set(cell.get() + 1);
    }

    fn reset(&self) {
        self.emulator.set(0);
        self.mock.set(0);
        self.parameter.set(0);
        self.external.set(0);
        self.derived.set(0);
    }

    fn snapshot(&self) -> ReadStats {
        ReadStats {
            emulator_observation: self.emulator.get(),
            mock_observation: self.mock.get(),
            parameter: self.parameter.get(),
            external_input: self.external.get(),
            derived: self.derived.get(),
        }
    }
}

/// A tensor stored in a custom node together with its provenance.
#[derive(Clone, Debug)]
pub struct TaggedTensor<E: Real> {
    pub tensor: TimeTensor<E>,
    pub tag: DataTag,
}

impl<E: Real> TaggedTensor<E> {
    pub fn new(tensor: TimeTensor<E>, tag: DataTag) -> Self {
        TaggedTensor { tensor, tag }
    }
}

/// Observation tensors handed to a custom node after backend execution.
#[derive(Clone, Debug)]
pub struct ObservationSet<E: Real> {
    /// `EmulatorObservation` or `MockObservation`.
    pub source: DataTag,
    pub spikes: Option<TimeTensor<E>>,
    pub membrane: Option<TimeTensor<E>>,
}

/// Per-node context handed to custom backward rules. Every tensor access is
/// counted against its provenance tag so the injection contract can be
/// asserted after a backward sweep.
pub struct CustomCtx<E: Real> {
    saved: Vec<TaggedTensor<E>>,
    injected: RefCell<Option<ObservationSet<E>>>,
}

impl<E: Real> CustomCtx<E> {
    pub fn new(saved: Vec<TaggedTensor<E>>) -> Self {
        CustomCtx { saved, injected: RefCell::new(None) }
    }
}

/// Counted view of a [`CustomCtx`] used during backward.
pub struct CtxHandle<'a, E: Real> {
    ctx: &'a CustomCtx<E>,
    counters: &'a ReadCounters,
}

impl<'a, E: Real> CtxHandle<'a, E> {
    pub fn saved(&self, index: usize) -> Result<TimeTensor<E>> {
        let entry = self
            .ctx
            .saved
            .get(index)
            .ok_or_else(|| Error::Usage(format!("custom node has no saved tensor {index}")))?;
        self.counters.count(entry.tag);
        Ok(entry.tensor.clone())
    }

    pub fn injected_spikes(&self) -> Result<TimeTensor<E>> {
        let inj = self.ctx.injected.borrow();
        let set = inj
            .as_ref()
            .ok_or_else(|| Error::Usage("no observations injected into custom node".into()))?;
        let t = set
            .spikes
            .as_ref()
            .ok_or_else(|| Error::Data("injected observations carry no spikes".into()))?;
        self.counters.count(set.source);
        Ok(t.clone())
    }

    pub fn injected_membrane(&self) -> Result<TimeTensor<E>> {
        let inj = self.ctx.injected.borrow();
        let set = inj
            .as_ref()
            .ok_or_else(|| Error::Usage("no observations injected into custom node".into()))?;
        let t = set
            .membrane
            .as_ref()
            .ok_or_else(|| Error::Data("injected observations carry no membrane".into()))?;
        self.counters.count(set.source);
        Ok(t.clone())
    }
}

/// Backward rule of a custom differentiable function. The forward values are
/// produced outside the tape (by the backend or a mock simulation); only the
/// backward consumes the node context.
pub trait CustomBackward<E: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Maps output gradients to input gradients. `out_grads[i]` is `None`
    /// when output `i` received no gradient; the result must hold one entry
    /// per declared input (or `None` where nothing flows).
    fn backward(
        &self,
        ctx: &CtxHandle<'_, E>,
        out_grads: &[Option<TimeTensor<E>>],
    ) -> Result<Vec<Option<TimeTensor<E>>>>;
}

enum Op<E: Real> {
    Leaf,
    MatmulTime {
        input: Option<TensorRef>,
        weights: Option<TensorRef>,
        saved_input: TimeTensor<E>,
        saved_weights: TimeTensor<E>,
    },
    MaxOverTime {
        input: TensorRef,
        argmax: Arc<[usize]>,
        in_shape: Shape,
    },
    SoftmaxXent {
        scores: TensorRef,
        probs: TimeTensor<E>,
        labels: Vec<usize>,
    },
    Add {
        lhs: Option<TensorRef>,
        rhs: Option<TensorRef>,
    },
    Scale {
        input: TensorRef,
        factor: E,
    },
    SumAll {
        input: TensorRef,
        in_shape: Shape,
    },
    Custom {
        inputs: Vec<Option<TensorRef>>,
        rule: Arc<dyn CustomBackward<E>>,
        ctx: CustomCtx<E>,
    },
}

struct TapeNode<E: Real> {
    op: Op<E>,
    out_shapes: Vec<Shape>,
}

/// Gradients keyed by tape node, as produced by [`Tape::backward`].
pub struct Gradients<E: Real> {
    tape: u64,
    grads: Vec<Vec<Option<TimeTensor<E>>>>,
}

impl<E: Real> Gradients<E> {
    /// Gradient w.r.t. a tensor that was attached to this tape.
    pub fn wrt(&self, tensor: &TimeTensor<E>) -> Option<&TimeTensor<E>> {
        let r = tensor.node()?;
        if r.tape != self.tape {
            return None;
        }
        self.grads.get(r.node.0)?.get(r.output as usize)?.as_ref()
    }

    /// Gradient at output 0 of a node (leaves have a single output).
    pub fn by_node(&self, node: NodeId) -> Option<&TimeTensor<E>> {
        self.grads.get(node.0)?.first()?.as_ref()
    }
}

/// Operation recorder and reverse-mode engine. One tape per execution
/// context; independent tapes are unrelated.
pub struct Tape<E: Real> {
    id: u64,
    nodes: Vec<TapeNode<E>>,
    counters: ReadCounters,
}

impl<E: Real> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Real> Tape<E> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            counters: ReadCounters::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop all recorded nodes (fresh run over the same parameters).
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.counters.reset();
    }

    /// Read counts of the most recent backward sweep.
    pub fn read_stats(&self) -> ReadStats {
        self.counters.snapshot()
    }

    fn push(&mut self, op: Op<E>, out_shapes: Vec<Shape>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(TapeNode { op, out_shapes });
        id
    }

    fn tensor_ref(&self, node: NodeId, output: u16) -> TensorRef {
        TensorRef { tape: self.id, node, output }
    }

    /// Checks that a tensor's node belongs to this tape.
    fn check_ref(&self, t: &TimeTensor<E>) -> Result<Option<TensorRef>> {
        match t.node() {
            None => Ok(None),
            Some(r) if r.tape == self.id => Ok(Some(r)),
            Some(_) => Err(Error::Usage(
                "tensor belongs to a different tape".into(),
            )),
        }
    }

    /// Register a differentiable leaf (parameter or gradient-carrying input).
    pub fn leaf(&mut self, tensor: &TimeTensor<E>) -> TimeTensor<E> {
        let node = self.push(Op::Leaf, vec![tensor.shape()]);
        tensor.with_node(self.tensor_ref(node, 0))
    }

    /// `out[t,b,m] = sum_n input[t,b,n] * weights[n,m]`.
    pub fn matmul_time(
        &mut self,
        input: &TimeTensor<E>,
        weights: &TimeTensor<E>,
    ) -> Result<TimeTensor<E>> {
        let in_ref = self.check_ref(input)?;
        let w_ref = self.check_ref(weights)?;
        let out = ops::matmul_time_raw(input, weights)?;
        if in_ref.is_none() && w_ref.is_none() {
            return Ok(out);
        }
        let node = self.push(
            Op::MatmulTime {
                input: in_ref,
                weights: w_ref,
                saved_input: input.detached(),
                saved_weights: weights.detached(),
            },
            vec![out.shape()],
        );
        Ok(out.with_node(self.tensor_ref(node, 0)))
    }

    /// Per-(batch, unit) maximum over the time axis. Ties break to the
    /// earliest step; backward routes the whole gradient to the argmax step.
    pub fn max_over_time(&mut self, input: &TimeTensor<E>) -> Result<(TimeTensor<E>, Vec<usize>)> {
        let shape = input.shape();
        if shape.steps < 1 || shape.is_empty() {
            return Err(Error::Dimension(format!(
                "max_over_time: empty time axis in {shape}"
            )));
        }
        let in_ref = self.check_ref(input)?;
        let cols = shape.batch * shape.units;
        let mut values = vec![E::zero(); cols];
        let mut argmax = vec![0usize; cols];
        for c in 0..cols {
            let mut best = input.data()[c];
            let mut best_t = 0usize;
            for t in 1..shape.steps {
                let v = input.data()[t * cols + c];
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            values[c] = best;
            argmax[c] = best_t;
        }
        let out = TimeTensor::new(Shape::matrix(shape.batch, shape.units), values)?;
        let Some(input_ref) = in_ref else {
            return Ok((out, argmax));
        };
        let node = self.push(
            Op::MaxOverTime {
                input: input_ref,
                argmax: argmax.clone().into(),
                in_shape: shape,
            },
            vec![out.shape()],
        );
        Ok((out.with_node(self.tensor_ref(node, 0)), argmax))
    }

    /// Mean over the batch of `-log softmax(scores)[label]`, stabilized by
    /// max subtraction. `scores` is a `[1, B, K]` matrix.
    pub fn softmax_cross_entropy(
        &mut self,
        scores: &TimeTensor<E>,
        labels: &[usize],
    ) -> Result<TimeTensor<E>> {
        let shape = scores.shape();
        if shape.steps != 1 {
            return Err(Error::Dimension(format!(
                "softmax_cross_entropy: expected [1,B,K] scores, got {shape}"
            )));
        }
        let (b_size, k) = (shape.batch, shape.units);
        if labels.len() != b_size {
            return Err(Error::Dimension(format!(
                "softmax_cross_entropy: {} labels for batch {}",
                labels.len(),
                b_size
            )));
        }
        for (b, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::Index(format!(
                    "label {l} out of range [0,{k}) at batch entry {b}"
                )));
            }
        }
        let s_ref = self.check_ref(scores)?;
        let mut probs = vec![E::zero(); b_size * k];
        let mut loss = E::zero();
        for b in 0..b_size {
            let row = &scores.data()[b * k..(b + 1) * k];
            let m = row.iter().cloned().fold(row[0], E::max);
            let mut denom = E::zero();
            for (j, &s) in row.iter().enumerate() {
                let e = (s - m).exp();
                probs[b * k + j] = e;
                denom += e;
            }
            for j in 0..k {
                probs[b * k + j] /= denom;
            }
            loss -= probs[b * k + labels[b]].ln();
        }
        loss /= rf::<E>(b_size as f64);
        let out = TimeTensor::scalar(loss);
        let Some(scores_ref) = s_ref else {
            return Ok(out);
        };
        let probs = TimeTensor::matrix(b_size, k, probs)?;
        let node = self.push(
            Op::SoftmaxXent { scores: scores_ref, probs, labels: labels.to_vec() },
            vec![Shape::scalar()],
        );
        Ok(out.with_node(self.tensor_ref(node, 0)))
    }

    /// Elementwise sum.
    pub fn add(&mut self, a: &TimeTensor<E>, b: &TimeTensor<E>) -> Result<TimeTensor<E>> {
        let a_ref = self.check_ref(a)?;
        let b_ref = self.check_ref(b)?;
        let out = ops::add_raw(a, b)?;
        if a_ref.is_none() && b_ref.is_none() {
            return Ok(out);
        }
        let node = self.push(Op::Add { lhs: a_ref, rhs: b_ref }, vec![out.shape()]);
        Ok(out.with_node(self.tensor_ref(node, 0)))
    }

    /// Multiply by a scalar constant.
    pub fn scale(&mut self, input: &TimeTensor<E>, factor: E) -> Result<TimeTensor<E>> {
        let in_ref = self.check_ref(input)?;
        let out = input.map(|x| x * factor);
        let Some(input_ref) = in_ref else { return Ok(out) };
        let node = self.push(Op::Scale { input: input_ref, factor }, vec![out.shape()]);
        Ok(out.with_node(self.tensor_ref(node, 0)))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum_all(&mut self, input: &TimeTensor<E>) -> Result<TimeTensor<E>> {
        let in_ref = self.check_ref(input)?;
        let total: E = input.data().iter().cloned().sum();
        let out = TimeTensor::scalar(total);
        let Some(input_ref) = in_ref else { return Ok(out) };
        let node = self.push(
            Op::SumAll { input: input_ref, in_shape: input.shape() },
            vec![Shape::scalar()],
        );
        Ok(out.with_node(self.tensor_ref(node, 0)))
    }

    /// Record a custom function whose forward values were produced outside
    /// the tape. Returns the output tensors attached to the new node.
    pub fn custom(
        &mut self,
        rule: Arc<dyn CustomBackward<E>>,
        inputs: &[&TimeTensor<E>],
        saved: Vec<TaggedTensor<E>>,
        outputs: Vec<TimeTensor<E>>,
    ) -> Result<Vec<TimeTensor<E>>> {
        let mut in_refs = Vec::with_capacity(inputs.len());
        for t in inputs {
            in_refs.push(self.check_ref(t)?);
        }
        let out_shapes: Vec<Shape> = outputs.iter().map(|t| t.shape()).collect();
        let node = self.push(
            Op::Custom { inputs: in_refs, rule, ctx: CustomCtx::new(saved) },
            out_shapes,
        );
        Ok(outputs
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.with_node(self.tensor_ref(node, i as u16)))
            .collect())
    }

    /// Attach observation tensors to a custom node. The node's backward rule
    /// receives exactly this set.
    pub fn inject_observations(&mut self, node: NodeId, set: ObservationSet<E>) -> Result<()> {
        match self.nodes.get(node.0).map(|n| &n.op) {
            Some(Op::Custom { ctx, .. }) => {
                *ctx.injected.borrow_mut() = Some(set);
                Ok(())
            }
            Some(_) => Err(Error::Usage(format!(
                "node {} is not a custom function",
                node.0
            ))),
            None => Err(Error::Usage(format!("node {} is not on this tape", node.0))),
        }
    }

    /// Reverse sweep from a scalar root. Gradients at fan-out points are
    /// summed; custom nodes consume their injected observations.
    pub fn backward(&mut self, root: &TimeTensor<E>) -> Result<Gradients<E>> {
        let root_ref = self
            .check_ref(root)?
            .ok_or_else(|| Error::Usage("backward root is not on the tape".into()))?;
        if root.shape().len() != 1 {
            return Err(Error::Usage(format!(
                "backward root must be scalar, got {}",
                root.shape()
            )));
        }
        self.counters.reset();
        let mut grads: Vec<Vec<Option<TimeTensor<E>>>> = self
            .nodes
            .iter()
            .map(|n| vec![None; n.out_shapes.len()])
            .collect();
        grads[root_ref.node.0][root_ref.output as usize] =
            Some(TimeTensor::filled(root.shape(), E::one()));

        for idx in (0..=root_ref.node.0).rev() {
            // Each node is visited exactly once, in reverse topological order.
            let node_grads = std::mem::take(&mut grads[idx]);
            if node_grads.iter().all(Option::is_none) {
                grads[idx] = node_grads;
                continue;
            }
            let mut pending: Vec<(TensorRef, TimeTensor<E>)> = Vec::new();
            {
                let node = &self.nodes[idx];
                match &node.op {
                    Op::Leaf => {}
                    Op::MatmulTime { input, weights, saved_input, saved_weights } => {
                        let g = node_grads[0].as_ref().expect("single-output node");
                        if let Some(r) = input {
                            pending.push((*r, ops::matmul_grad_input(g, saved_weights)));
                        }
                        if let Some(r) = weights {
                            pending.push((*r, ops::matmul_grad_weights(g, saved_input)));
                        }
                    }
                    Op::MaxOverTime { input, argmax, in_shape } => {
                        let g = node_grads[0].as_ref().expect("single-output node");
                        let cols = in_shape.batch * in_shape.units;
                        let mut out = vec![E::zero(); in_shape.len()];
                        for c in 0..cols {
                            out[argmax[c] * cols + c] = g.data()[c];
                        }
                        pending.push((
                            *input,
                            TimeTensor::new(*in_shape, out).expect("shape consistent"),
                        ));
                    }
                    Op::SoftmaxXent { scores, probs, labels } => {
                        let g = node_grads[0].as_ref().expect("single-output node").item();
                        let shape = probs.shape();
                        let inv_b = rf::<E>(1.0 / shape.batch as f64);
                        let mut out = probs.data().to_vec();
                        for (b, &l) in labels.iter().enumerate() {
                            out[b * shape.units + l] -= E::one();
                        }
                        for v in &mut out {
                            *v = *v * inv_b * g;
                        }
                        pending.push((
                            *scores,
                            TimeTensor::new(shape, out).expect("shape consistent"),
                        ));
                    }
                    Op::Add { lhs, rhs } => {
                        let g = node_grads[0].as_ref().expect("single-output node");
                        if let Some(r) = lhs {
                            pending.push((*r, g.detached()));
                        }
                        if let Some(r) = rhs {
                            pending.push((*r, g.detached()));
                        }
                    }
                    Op::Scale { input, factor } => {
                        let g = node_grads[0].as_ref().expect("single-output node");
                        let f = *factor;
                        pending.push((*input, g.map(|x| x * f)));
                    }
                    Op::SumAll { input, in_shape } => {
                        let g = node_grads[0].as_ref().expect("single-output node").item();
                        pending.push((*input, TimeTensor::filled(*in_shape, g)));
                    }
                    Op::Custom { inputs, rule, ctx } => {
                        let handle = CtxHandle { ctx, counters: &self.counters };
                        let in_grads = rule.backward(&handle, &node_grads)?;
                        if in_grads.len() != inputs.len() {
                            return Err(Error::Usage(format!(
                                "custom rule '{}' returned {} gradients for {} inputs",
                                rule.name(),
                                in_grads.len(),
                                inputs.len()
                            )));
                        }
                        for (r, g) in inputs.iter().zip(in_grads) {
                            if let (Some(r), Some(g)) = (r, g) {
                                pending.push((*r, g));
                            }
                        }
                    }
                }
            }
            grads[idx] = node_grads;
            for (r, g) in pending {
                ops::accumulate(&mut grads[r.node.0][r.output as usize], g);
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }
}
