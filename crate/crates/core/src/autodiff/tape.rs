//! Append-only scalar computation graph with first-order reverse mode.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};

/// Index of a node on a [`Tape`]. Parents always have smaller ids than children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// The closed set of primitives a tape can record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Constant,
    Parameter,
    Input,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Neg,
    Square,
    Tanh,
    Sin,
    Exp,
    Reciprocal,
    Sum,
    Mean,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Parameter => "parameter",
            Op::Input => "input",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Neg => "neg",
            Op::Square => "square",
            Op::Tanh => "tanh",
            Op::Sin => "sin",
            Op::Exp => "exp",
            Op::Reciprocal => "reciprocal",
            Op::Sum => "sum",
            Op::Mean => "mean",
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Constant | Op::Parameter | Op::Input)
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub parents: SmallVec<[NodeId; 2]>,
    /// ∂(this)/∂(parent k), recorded at construction time.
    pub partials: SmallVec<[f64; 2]>,
    pub value: f64,
}

/// A single-writer scalar graph. Interior mutability lets [`Var`] handles
/// implement the arithmetic operator traits.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<(NodeId, usize)>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("parameters", &self.params.borrow().len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, id: NodeId) -> Result<f64> {
        self.nodes
            .borrow()
            .get(id.0)
            .map(|n| n.value)
            .ok_or(Error::UnknownNode(id.0))
    }

    pub fn node(&self, id: NodeId) -> Result<Node> {
        self.nodes
            .borrow()
            .get(id.0)
            .cloned()
            .ok_or(Error::UnknownNode(id.0))
    }

    /// `(leaf id, flat coordinate)` for every registered parameter.
    pub fn parameter_leaves(&self) -> Vec<(NodeId, usize)> {
        self.params.borrow().clone()
    }

    /// Number of flat parameter coordinates addressed by this tape.
    pub fn parameter_count(&self) -> usize {
        self.params
            .borrow()
            .iter()
            .map(|&(_, i)| i + 1)
            .max()
            .unwrap_or(0)
    }

    fn push(&self, op: Op, parents: SmallVec<[NodeId; 2]>, partials: SmallVec<[f64; 2]>, value: f64) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        let id = NodeId(nodes.len());
        debug_assert!(parents.iter().all(|p| p.0 < id.0));
        nodes.push(Node {
            op,
            parents,
            partials,
            value,
        });
        id
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        let id = self.push(Op::Constant, SmallVec::new(), SmallVec::new(), value);
        Var { tape: self, id }
    }

    /// Registers a leaf bound to flat parameter coordinate `index`.
    pub fn parameter(&self, value: f64, index: usize) -> Var<'_> {
        debug_assert!(
            self.params.borrow().iter().all(|&(_, i)| i != index),
            "parameter coordinate {index} registered twice"
        );
        let id = self.push(Op::Parameter, SmallVec::new(), SmallVec::new(), value);
        self.params.borrow_mut().push((id, index));
        Var { tape: self, id }
    }

    /// A differentiable leaf that is not a trainable parameter.
    pub fn input(&self, value: f64) -> Var<'_> {
        let id = self.push(Op::Input, SmallVec::new(), SmallVec::new(), value);
        Var { tape: self, id }
    }

    /// Re-wraps an existing node id.
    pub fn var(&self, id: NodeId) -> Result<Var<'_>> {
        if id.0 < self.len() {
            Ok(Var { tape: self, id })
        } else {
            Err(Error::UnknownNode(id.0))
        }
    }

    fn unary(&self, op: Op, a: NodeId, value: f64, partial: f64) -> NodeId {
        self.push(op, smallvec![a], smallvec![partial], value)
    }

    fn binary(&self, op: Op, a: NodeId, b: NodeId, value: f64, pa: f64, pb: f64) -> NodeId {
        self.push(op, smallvec![a, b], smallvec![pa, pb], value)
    }

    fn val(&self, id: NodeId) -> f64 {
        self.nodes.borrow()[id.0].value
    }

    /// Sum of the given nodes, accumulated left to right.
    pub fn sum<'t>(&'t self, terms: &[Var<'t>]) -> Var<'t> {
        let value = terms.iter().fold(0.0, |acc, v| acc + v.value());
        let parents = terms.iter().map(|v| v.id).collect();
        let partials = terms.iter().map(|_| 1.0).collect();
        Var {
            tape: self,
            id: self.push(Op::Sum, parents, partials, value),
        }
    }

    /// Arithmetic mean of the given nodes; an empty slice yields a zero constant.
    pub fn mean<'t>(&'t self, terms: &[Var<'t>]) -> Var<'t> {
        if terms.is_empty() {
            return self.constant(0.0);
        }
        let n = terms.len() as f64;
        let value = terms.iter().fold(0.0, |acc, v| acc + v.value()) / n;
        let parents = terms.iter().map(|v| v.id).collect();
        let partials = terms.iter().map(|_| 1.0 / n).collect();
        Var {
            tape: self,
            id: self.push(Op::Mean, parents, partials, value),
        }
    }

    /// Adjoint of every node up to and including `root`, accumulated in
    /// descending node-id order.
    pub fn adjoints(&self, root: NodeId) -> Result<Vec<f64>> {
        let nodes = self.nodes.borrow();
        let root_node = nodes.get(root.0).ok_or(Error::UnknownNode(root.0))?;
        if !root_node.value.is_finite() {
            return Err(Error::NonFiniteNode {
                node: root.0,
                value: root_node.value,
            });
        }
        let mut adj = vec![0.0_f64; root.0 + 1];
        adj[root.0] = 1.0;
        for id in (0..=root.0).rev() {
            let a = adj[id];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[id];
            if !node.value.is_finite() || !a.is_finite() {
                return Err(Error::NonFiniteNode {
                    node: id,
                    value: if node.value.is_finite() { a } else { node.value },
                });
            }
            for (p, d) in node.parents.iter().zip(&node.partials) {
                adj[p.0] += a * d;
            }
        }
        Ok(adj)
    }

    /// Flat parameter gradient ∂root/∂θ_i.
    pub fn backward(&self, root: NodeId) -> Result<Vec<f64>> {
        let adj = self.adjoints(root)?;
        let mut grad = vec![0.0; self.parameter_count()];
        for &(id, index) in self.params.borrow().iter() {
            if id.0 < adj.len() {
                grad[index] += adj[id.0];
            }
        }
        Ok(grad)
    }

    /// Recomputes every non-leaf value from its parents and returns the ids
    /// whose recomputed value differs bitwise from the stored one.
    pub fn replay_mismatches(&self) -> Vec<NodeId> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<f64> = Vec::with_capacity(nodes.len());
        let mut bad = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            let p = |k: usize| values[n.parents[k].0];
            let v = match n.op {
                op if op.is_leaf() => n.value,
                Op::Add => p(0) + p(1),
                Op::Sub => p(0) - p(1),
                Op::Mul => p(0) * p(1),
                Op::Scale(k) => k * p(0),
                Op::Neg => -p(0),
                Op::Square => p(0) * p(0),
                Op::Tanh => super::scalar::tanh(p(0)),
                Op::Sin => p(0).sin(),
                Op::Exp => p(0).exp(),
                Op::Reciprocal => 1.0 / p(0),
                Op::Sum => n.parents.iter().fold(0.0, |acc, q| acc + values[q.0]),
                Op::Mean => {
                    n.parents.iter().fold(0.0, |acc, q| acc + values[q.0]) / n.parents.len() as f64
                }
                _ => unreachable!(),
            };
            if v.to_bits() != n.value.to_bits() {
                bad.push(NodeId(i));
            }
            values.push(v);
        }
        bad
    }
}

/// Handle to a node on a tape; arithmetic on handles records new nodes.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}={})", self.id.0, self.value())
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> f64 {
        self.tape.val(self.id)
    }

    fn wrap(&self, id: NodeId) -> Var<'t> {
        Var { tape: self.tape, id }
    }

    pub fn scale(&self, k: f64) -> Var<'t> {
        let v = k * self.value();
        self.wrap(self.tape.unary(Op::Scale(k), self.id, v, k))
    }

    pub fn square(&self) -> Var<'t> {
        let x = self.value();
        self.wrap(self.tape.unary(Op::Square, self.id, x * x, 2.0 * x))
    }

    pub fn tanh(&self) -> Var<'t> {
        let t = super::scalar::tanh(self.value());
        self.wrap(self.tape.unary(Op::Tanh, self.id, t, 1.0 - t * t))
    }

    pub fn sin(&self) -> Var<'t> {
        let x = self.value();
        self.wrap(self.tape.unary(Op::Sin, self.id, x.sin(), x.cos()))
    }

    pub fn exp(&self) -> Var<'t> {
        let e = self.value().exp();
        self.wrap(self.tape.unary(Op::Exp, self.id, e, e))
    }

    pub fn recip(&self) -> Var<'t> {
        let x = self.value();
        let r = 1.0 / x;
        self.wrap(self.tape.unary(Op::Reciprocal, self.id, r, -r * r))
    }

    pub fn backward(&self) -> Result<Vec<f64>> {
        self.tape.backward(self.id)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.value() + rhs.value();
        self.wrap(self.tape.binary(Op::Add, self.id, rhs.id, v, 1.0, 1.0))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.value() - rhs.value();
        self.wrap(self.tape.binary(Op::Sub, self.id, rhs.id, v, 1.0, -1.0))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        self.wrap(self.tape.binary(Op::Mul, self.id, rhs.id, a * b, b, a))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        let v = -self.value();
        self.wrap(self.tape.unary(Op::Neg, self.id, v, -1.0))
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self + self.tape.constant(rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self - self.tape.constant(rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let th = tape.parameter(3.0, 0);
        let f = th.square();
        assert_eq!(f.backward().unwrap(), vec![6.0]);
    }

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let a = tape.parameter(2.0, 0);
        let b = tape.parameter(5.0, 1);
        let f = a * b;
        assert_eq!(f.backward().unwrap(), vec![5.0, 2.0]);
    }

    #[test]
    fn unknown_root_is_structural_error() {
        let tape = Tape::new();
        tape.parameter(1.0, 0);
        assert!(matches!(tape.backward(NodeId(7)), Err(Error::UnknownNode(7))));
    }

    #[test]
    fn non_finite_reports_node() {
        let tape = Tape::new();
        let a = tape.parameter(0.0, 0);
        let r = a.recip();
        let f = r * 2.0;
        match f.backward() {
            Err(Error::NonFiniteNode { node, .. }) => assert!(node >= r.id().0),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn parents_precede_children_and_replay_is_exact() {
        let tape = Tape::new();
        let x = tape.parameter(0.3, 0);
        let y = tape.parameter(-1.7, 1);
        let z = (x * y).tanh() + (x.sin() - y.exp()).square() + x.recip().scale(0.5);
        let m = tape.mean(&[z, x, -y]);
        let _ = tape.sum(&[m, z]);
        for i in 0..tape.len() {
            let n = tape.node(NodeId(i)).unwrap();
            assert!(n.parents.iter().all(|p| p.0 < i));
        }
        assert!(tape.replay_mismatches().is_empty());
    }

    #[test]
    fn mean_and_sum_partials() {
        let tape = Tape::new();
        let a = tape.parameter(1.0, 0);
        let b = tape.parameter(4.0, 1);
        let m = tape.mean(&[a, b, a]);
        assert_eq!(m.value(), 2.0);
        let g = m.backward().unwrap();
        assert!((g[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((g[1] - 1.0 / 3.0).abs() < 1e-15);
    }
}
