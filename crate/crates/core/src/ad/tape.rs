use std::cell::{Cell, RefCell};

use smallvec::SmallVec;

use super::Var;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub type NodeId = usize;

/// Elementary operations a tape node can record.
///
/// `Implicit` marks a node whose value comes from an inner solve (a Newton
/// step, an eliminated algebraic state); the recorder supplies its value and
/// local partials directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Pow,
    Implicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapeNode {
    pub op: OpKind,
    pub operands: SmallVec<[NodeId; 2]>,
    pub value: f64,
    /// ∂value/∂operand at the recorded point, one per operand.
    pub partials: SmallVec<[f64; 2]>,
}

/// Tangent components carried by a node recorded in nested mode.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTangent {
    pub value: f64,
    pub partials: SmallVec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Record,
    Nested,
    Passive,
}

/// Single-writer recorder. Programs are evaluated over [`Var`]s bound to a
/// builder; [`TapeBuilder::finish`] freezes the recording into a [`Tape`].
#[derive(Debug)]
pub struct TapeBuilder {
    mode: Mode,
    nodes: RefCell<Vec<TapeNode>>,
    tangents: RefCell<Vec<NodeTangent>>,
    inputs: RefCell<Vec<NodeId>>,
    // passive mode hands out ids without storing nodes
    passive_count: Cell<usize>,
    poison: RefCell<Option<String>>,
}

impl Default for TapeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TapeBuilder {
    pub fn new() -> Self {
        Self::with_mode(Mode::Record)
    }

    /// Forward-over-reverse recording: every node also carries a tangent.
    pub fn nested() -> Self {
        Self::with_mode(Mode::Nested)
    }

    /// Evaluation only; nothing is stored.
    pub fn passive() -> Self {
        Self::with_mode(Mode::Passive)
    }

    fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            nodes: RefCell::new(Vec::new()),
            tangents: RefCell::new(Vec::new()),
            inputs: RefCell::new(Vec::new()),
            passive_count: Cell::new(0),
            poison: RefCell::new(None),
        }
    }

    pub fn is_nested(&self) -> bool {
        self.mode == Mode::Nested
    }

    pub fn is_passive(&self) -> bool {
        self.mode == Mode::Passive
    }

    pub fn len(&self) -> usize {
        match self.mode {
            Mode::Passive => self.passive_count.get(),
            _ => self.nodes.borrow().len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, value: f64) -> Var<'_> {
        self.input_with_tangent(value, 0.0)
    }

    pub fn input_with_tangent(&self, value: f64, tangent: f64) -> Var<'_> {
        let id = self.push(OpKind::Input, &[], value, &[], tangent, &[]);
        if self.mode != Mode::Passive {
            self.inputs.borrow_mut().push(id);
        }
        Var::from_parts(self, id, value, tangent)
    }

    pub fn inputs(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    pub fn inputs_with_tangents(&self, values: &[f64], tangents: &[f64]) -> Vec<Var<'_>> {
        debug_assert_eq!(values.len(), tangents.len());
        values
            .iter()
            .zip(tangents)
            .map(|(&v, &t)| self.input_with_tangent(v, t))
            .collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        let id = self.push(OpKind::Constant, &[], value, &[], 0.0, &[]);
        Var::from_parts(self, id, value, 0.0)
    }

    /// Appends a node with caller-supplied value and local partials.
    pub fn record(
        &self,
        op: OpKind,
        operands: &[NodeId],
        value: f64,
        partials: &[f64],
    ) -> Result<NodeId> {
        if operands.len() != partials.len() {
            return Err(Error::dims("local partials", operands.len(), partials.len()));
        }
        let len = self.len();
        if let Some(&bad) = operands.iter().find(|&&id| id >= len) {
            return Err(Error::UnknownNode { id: bad, len });
        }
        let tangent = if self.mode == Mode::Nested {
            let tangents = self.tangents.borrow();
            operands.iter().zip(partials).map(|(&id, p)| tangents[id].value * p).sum()
        } else {
            0.0
        };
        Ok(self.push(op, operands, value, partials, tangent, &[]))
    }

    /// Records a node whose value is produced outside the elementary operation
    /// set. The tangent is propagated to first order through `partials`; the
    /// partials themselves carry no tangent, so nested recordings through an
    /// implicit node are exact only when the partials are locally constant.
    pub fn record_implicit<'t>(&'t self, operands: &[Var<'t>], value: f64, partials: &[f64]) -> Var<'t> {
        assert_eq!(operands.len(), partials.len(), "one partial per operand");
        let ids: SmallVec<[NodeId; 2]> = operands.iter().map(|v| v.id()).collect();
        let tangent = operands
            .iter()
            .zip(partials)
            .map(|(v, p)| v.tangent() * p)
            .sum();
        let id = self.push(OpKind::Implicit, &ids, value, partials, tangent, &[]);
        Var::from_parts(self, id, value, tangent)
    }

    /// Marks the recording as failed; evaluation helpers surface the message.
    pub fn poison(&self, message: impl Into<String>) {
        let mut slot = self.poison.borrow_mut();
        if slot.is_none() {
            *slot = Some(message.into());
        }
    }

    pub fn poisoned(&self) -> Option<String> {
        self.poison.borrow().clone()
    }

    pub(crate) fn push(
        &self,
        op: OpKind,
        operands: &[NodeId],
        value: f64,
        partials: &[f64],
        tangent: f64,
        partial_tangents: &[f64],
    ) -> NodeId {
        match self.mode {
            Mode::Passive => {
                let id = self.passive_count.get();
                self.passive_count.set(id + 1);
                id
            }
            Mode::Record | Mode::Nested => {
                let mut nodes = self.nodes.borrow_mut();
                let id = nodes.len();
                nodes.push(TapeNode {
                    op,
                    operands: SmallVec::from_slice(operands),
                    value,
                    partials: SmallVec::from_slice(partials),
                });
                if self.mode == Mode::Nested {
                    let partials = if partial_tangents.len() == partials.len() {
                        SmallVec::from_slice(partial_tangents)
                    } else {
                        SmallVec::from_elem(0.0, partials.len())
                    };
                    self.tangents.borrow_mut().push(NodeTangent {
                        value: tangent,
                        partials,
                    });
                }
                id
            }
        }
    }

    /// Freezes the recording with the given outputs, leaving the builder empty.
    pub fn finish(&self, outputs: &[Var<'_>]) -> Result<Tape> {
        if let Some(msg) = self.poisoned() {
            return Err(Error::Program(msg));
        }
        if self.mode == Mode::Passive {
            return Err(Error::Structural("a passive builder records no tape".into()));
        }
        let output_ids: Vec<NodeId> = outputs.iter().map(|v| v.id()).collect();
        let nodes = self.nodes.take();
        if let Some(&bad) = output_ids.iter().find(|&&id| id >= nodes.len()) {
            return Err(Error::UnknownNode {
                id: bad,
                len: nodes.len(),
            });
        }
        let tangents = (self.mode == Mode::Nested).then(|| self.tangents.take());
        let first_non_finite = nodes.iter().position(|n| {
            !n.value.is_finite() || n.partials.iter().any(|p| !p.is_finite())
        });
        Ok(Tape {
            nodes,
            tangents,
            input_ids: self.inputs.take(),
            output_ids,
            first_non_finite,
        })
    }
}

/// An immutable recorded program in topological order.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<TapeNode>,
    tangents: Option<Vec<NodeTangent>>,
    input_ids: Vec<NodeId>,
    output_ids: Vec<NodeId>,
    first_non_finite: Option<NodeId>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TapeNode] {
        &self.nodes
    }

    pub fn input_ids(&self) -> &[NodeId] {
        &self.input_ids
    }

    pub fn output_ids(&self) -> &[NodeId] {
        &self.output_ids
    }

    pub fn num_inputs(&self) -> usize {
        self.input_ids.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.output_ids.len()
    }

    pub fn is_nested(&self) -> bool {
        self.tangents.is_some()
    }

    pub fn output_values(&self) -> Vec<f64> {
        self.output_ids.iter().map(|&id| self.nodes[id].value).collect()
    }

    /// Tangents of the outputs as recorded (nested tapes only).
    pub fn output_tangents(&self) -> Option<Vec<f64>> {
        let tangents = self.tangents.as_ref()?;
        Some(self.output_ids.iter().map(|&id| tangents[id].value).collect())
    }

    fn check_finite(&self) -> Result<()> {
        match self.first_non_finite {
            Some(node) => Err(Error::NonFinite { node }),
            None => Ok(()),
        }
    }

    /// Tangent sweep: returns J·v.
    pub fn forward_sweep(&self, input_tangents: &[f64]) -> Result<Vec<f64>> {
        if input_tangents.len() != self.num_inputs() {
            return Err(Error::dims("input tangents", self.num_inputs(), input_tangents.len()));
        }
        self.check_finite()?;
        let mut dot = vec![0.0; self.nodes.len()];
        for (&id, &v) in self.input_ids.iter().zip(input_tangents) {
            dot[id] = v;
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.operands.is_empty() {
                continue;
            }
            dot[id] = node
                .operands
                .iter()
                .zip(&node.partials)
                .map(|(&op, &p)| p * dot[op])
                .sum();
        }
        Ok(self.output_ids.iter().map(|&id| dot[id]).collect())
    }

    /// Cotangent sweep: returns Jᵀ·α.
    pub fn reverse_sweep(&self, output_cotangents: &[f64]) -> Result<Vec<f64>> {
        if output_cotangents.len() != self.num_outputs() {
            return Err(Error::dims("output cotangents", self.num_outputs(), output_cotangents.len()));
        }
        self.check_finite()?;
        let mut adj = vec![0.0; self.nodes.len()];
        for (&id, &a) in self.output_ids.iter().zip(output_cotangents) {
            adj[id] += a;
        }
        for (id, node) in self.nodes.iter().enumerate().rev() {
            let a = adj[id];
            if a == 0.0 {
                continue;
            }
            for (&op, &p) in node.operands.iter().zip(&node.partials) {
                adj[op] += a * p;
            }
        }
        Ok(self.input_ids.iter().map(|&id| adj[id]).collect())
    }

    /// Reverse sweep over a nested tape. Returns the cotangents of the inputs
    /// together with their tangent components, i.e. Jᵀα and (d/dε Jᵀ)α along
    /// the seeded input tangents.
    pub fn reverse_sweep_nested(&self, output_cotangents: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let tangents = self
            .tangents
            .as_ref()
            .ok_or_else(|| Error::Contract("nested sweep on a tape recorded without tangents".into()))?;
        if output_cotangents.len() != self.num_outputs() {
            return Err(Error::dims("output cotangents", self.num_outputs(), output_cotangents.len()));
        }
        self.check_finite()?;
        if let Some(node) = tangents
            .iter()
            .position(|t| !t.value.is_finite() || t.partials.iter().any(|p| !p.is_finite()))
        {
            return Err(Error::NonFinite { node });
        }
        let n = self.nodes.len();
        let mut adj = vec![0.0; n];
        let mut adj_t = vec![0.0; n];
        for (&id, &a) in self.output_ids.iter().zip(output_cotangents) {
            adj[id] += a;
        }
        for (id, node) in self.nodes.iter().enumerate().rev() {
            let (a, at) = (adj[id], adj_t[id]);
            if a == 0.0 && at == 0.0 {
                continue;
            }
            let tn = &tangents[id];
            for ((&op, &p), &pt) in node.operands.iter().zip(&node.partials).zip(&tn.partials) {
                adj[op] += a * p;
                adj_t[op] += at * p + a * pt;
            }
        }
        Ok((
            self.input_ids.iter().map(|&id| adj[id]).collect(),
            self.input_ids.iter().map(|&id| adj_t[id]).collect(),
        ))
    }

    /// Full Jacobian with min(I, J) sweeps.
    pub fn jacobian(&self) -> Result<DenseMatrix> {
        self.jacobian_columns(0..self.num_inputs())
    }

    /// Jacobian restricted to a contiguous block of inputs. Uses forward
    /// sweeps when the block is narrower than the output count.
    pub fn jacobian_columns(&self, columns: std::ops::Range<usize>) -> Result<DenseMatrix> {
        let strategy = if columns.len() <= self.num_outputs() {
            SweepStrategy::Forward
        } else {
            SweepStrategy::Reverse
        };
        self.jacobian_columns_with(columns, strategy)
    }

    pub fn jacobian_columns_with(
        &self,
        columns: std::ops::Range<usize>,
        strategy: SweepStrategy,
    ) -> Result<DenseMatrix> {
        let (n_in, n_out) = (self.num_inputs(), self.num_outputs());
        if columns.end > n_in {
            return Err(Error::dims("jacobian columns", n_in, columns.end));
        }
        let width = columns.len();
        let mut jac = DenseMatrix::zeros(n_out, width);
        match strategy {
            SweepStrategy::Forward => {
                let mut seed = vec![0.0; n_in];
                for (c, col) in columns.clone().enumerate() {
                    seed[col] = 1.0;
                    let out = self.forward_sweep(&seed)?;
                    seed[col] = 0.0;
                    for (r, v) in out.into_iter().enumerate() {
                        jac[(r, c)] = v;
                    }
                }
            }
            SweepStrategy::Reverse => {
                let mut seed = vec![0.0; n_out];
                for r in 0..n_out {
                    seed[r] = 1.0;
                    let row = self.reverse_sweep(&seed)?;
                    seed[r] = 0.0;
                    for (c, col) in columns.clone().enumerate() {
                        jac[(r, c)] = row[col];
                    }
                }
            }
        }
        Ok(jac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStrategy {
    Forward,
    Reverse,
}
