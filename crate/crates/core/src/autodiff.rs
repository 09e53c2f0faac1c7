//! Define-by-run reverse-mode differentiation over dense `f64` matrices.
//!
//! Every value on a [`Tape`] is a rank-2 array; scalars are `1 x 1` and bias
//! vectors are `1 x m`. Node ids are indices into the tape, so creation order
//! is a valid topological order and a single reverse sweep suffices.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis as NdAxis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Square,
    Negate,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(alpha) => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Exp => x.exp(),
            Activation::Log => x.ln(),
            Activation::Square => x * x,
            Activation::Negate => -x,
        }
    }

    /// Local derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(alpha) => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Exp => y,
            Activation::Log => 1.0 / x,
            Activation::Square => 2.0 * x,
            Activation::Negate => -1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// Which extent a reduction collapses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Everything, giving `1 x 1`.
    All,
    /// Collapse rows (`n x m -> 1 x m`).
    Rows,
    /// Collapse columns (`n x m -> n x 1`).
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Activation { x: NodeId, kind: Activation },
    Reduce { x: NodeId, kind: Reduction, axis: Axis },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    grad: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    swept: bool,
}

fn shape(m: &Matrix) -> (usize, usize) {
    m.dim()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        let grad = Matrix::zeros(value.raw_dim());
        self.nodes.push(Node {
            value,
            grad,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant: no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> NodeId {
        self.constant(Matrix::from_elem((1, 1), value))
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    pub fn grad(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].grad
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Copy of a node's value with no link back into the graph.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let value = self.nodes[id.0].value.clone();
        self.constant(value)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xs, ws, bs) = (
            shape(self.value(x)),
            shape(self.value(w)),
            shape(self.value(b)),
        );
        if xs.1 != ws.0 {
            return Err(Error::Dimension {
                op: "affine",
                left: xs,
                right: ws,
            });
        }
        if bs != (1, ws.1) {
            return Err(Error::Dimension {
                op: "affine bias",
                left: ws,
                right: bs,
            });
        }
        let mut out = self.value(x).dot(self.value(w));
        out += self.value(b);
        let rg = self.requires_grad(x) || self.requires_grad(w) || self.requires_grad(b);
        Ok(self.push(out, Op::Affine { x, w, b }, rg))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> Result<NodeId> {
        let input = self.value(x);
        if kind == Activation::Log {
            if let Some(((r, c), &v)) = input.indexed_iter().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::Domain {
                    op: "log",
                    index: (r, c),
                    value: v,
                });
            }
        }
        let out = input.mapv(|v| kind.apply(v));
        let rg = self.requires_grad(x);
        Ok(self.push(out, Op::Activation { x, kind }, rg))
    }

    pub fn reduce(&mut self, x: NodeId, kind: Reduction, axis: Axis) -> NodeId {
        let input = self.value(x);
        let (rows, cols) = input.dim();
        let mut out = match axis {
            Axis::All => Matrix::from_elem((1, 1), input.sum()),
            Axis::Rows => input.sum_axis(NdAxis(0)).insert_axis(NdAxis(0)),
            Axis::Cols => input.sum_axis(NdAxis(1)).insert_axis(NdAxis(1)),
        };
        if kind == Reduction::Mean {
            let count = match axis {
                Axis::All => rows * cols,
                Axis::Rows => rows,
                Axis::Cols => cols,
            };
            out.mapv_inplace(|v| v / count as f64);
        }
        let rg = self.requires_grad(x);
        self.push(out, Op::Reduce { x, kind, axis }, rg)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.reduce(x, Reduction::Sum, Axis::All)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.reduce(x, Reduction::Mean, Axis::All)
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (shape(self.value(a)), shape(self.value(b)));
        if sa != sb {
            return Err(Error::Dimension {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let out = self.value(x) * factor;
        let rg = self.requires_grad(x);
        self.push(out, Op::Scale(x, factor), rg)
    }

    /// Adds a constant to every entry.
    pub fn offset(&mut self, x: NodeId, shift: f64) -> NodeId {
        let out = self.value(x) + shift;
        let rg = self.requires_grad(x);
        self.push(out, Op::Offset(x), rg)
    }

    /// Clamps into `[lo, hi]`; entries outside the interval get zero gradient.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.value(x).mapv(|v| v.clamp(lo, hi));
        let rg = self.requires_grad(x);
        self.push(out, Op::Clamp { x, lo, hi }, rg)
    }

    /// Zeroes every gradient and re-arms [`Tape::backward`].
    pub fn reset_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
        self.swept = false;
    }

    fn accumulate(&mut self, id: NodeId, contribution: &Matrix) {
        let node = &mut self.nodes[id.0];
        if node.requires_grad {
            node.grad += contribution;
        }
    }

    /// Reverse sweep from a scalar root. Returns the gradient of every tracked
    /// leaf, keyed by node id.
    pub fn backward(&mut self, root: NodeId) -> Result<BTreeMap<NodeId, Matrix>> {
        if self.swept {
            return Err(Error::State(
                "backward already ran on this tape; reset_grads first".into(),
            ));
        }
        let root_shape = shape(self.value(root));
        if root_shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward root must be 1 x 1, got {root_shape:?}"
            )));
        }
        self.swept = true;
        self.nodes[root.0].grad.fill(1.0);

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            if matches!(op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut self.nodes[i].grad);
            self.propagate(i, &op, &g);
            self.nodes[i].grad = g;
        }

        Ok(self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.requires_grad && matches!(n.op, Op::Leaf))
            .map(|(i, n)| (NodeId(i), n.grad.clone()))
            .collect())
    }

    fn propagate(&mut self, i: usize, op: &Op, g: &Matrix) {
        match *op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                if self.requires_grad(x) {
                    let dx = g.dot(&self.value(w).t());
                    self.accumulate(x, &dx);
                }
                if self.requires_grad(w) {
                    let dw = self.value(x).t().dot(g);
                    self.accumulate(w, &dw);
                }
                if self.requires_grad(b) {
                    let db = g.sum_axis(NdAxis(0)).insert_axis(NdAxis(0));
                    self.accumulate(b, &db);
                }
            }
            Op::Activation { x, kind } => {
                if !self.requires_grad(x) {
                    return;
                }
                let mut dx = Matrix::zeros(g.raw_dim());
                Zip::from(&mut dx)
                    .and(g)
                    .and(self.value(x))
                    .and(&self.nodes[i].value)
                    .for_each(|d, &g, &x, &y| *d = g * kind.derivative(x, y));
                self.accumulate(x, &dx);
            }
            Op::Reduce { x, kind, axis } => {
                if !self.requires_grad(x) {
                    return;
                }
                let dim = self.value(x).raw_dim();
                let (rows, cols) = self.value(x).dim();
                let count = match axis {
                    Axis::All => rows * cols,
                    Axis::Rows => rows,
                    Axis::Cols => cols,
                };
                let factor = match kind {
                    Reduction::Sum => 1.0,
                    Reduction::Mean => 1.0 / count as f64,
                };
                let dx = match g.broadcast(dim) {
                    Some(view) => view.mapv(|v| v * factor),
                    None => unreachable!("reduction output always broadcasts to its input"),
                };
                self.accumulate(x, &dx);
            }
            Op::Add(a, b) => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g);
                if self.requires_grad(b) {
                    let neg = -g;
                    self.accumulate(b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.requires_grad(a) {
                    let da = g * self.value(b);
                    self.accumulate(a, &da);
                }
                if self.requires_grad(b) {
                    let db = g * self.value(a);
                    self.accumulate(b, &db);
                }
            }
            Op::Scale(x, factor) => {
                let dx = g * factor;
                self.accumulate(x, &dx);
            }
            Op::Offset(x) => self.accumulate(x, g),
            Op::Clamp { x, lo, hi } => {
                if !self.requires_grad(x) {
                    return;
                }
                let mut dx = g.clone();
                Zip::from(&mut dx)
                    .and(self.value(x))
                    .for_each(|d, &v| {
                        if v < lo || v > hi {
                            *d = 0.0;
                        }
                    });
                self.accumulate(x, &dx);
            }
        }
    }
}

/// Compares reverse-mode gradients against central differences.
///
/// `build` records a scalar function of the given parameter leaves onto a
/// fresh tape. Returns the maximum over all parameter entries of
/// `|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)`.
pub fn finite_difference_check<F>(params: &[Matrix], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(eps > 0.0) {
        return Err(Error::Contract(format!("eps must be positive, got {eps}")));
    }
    let evaluate = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let root = build(&mut tape, &ids)?;
        Ok(tape.scalar(root))
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|v| tape.variable(v.clone())).collect();
    let root = build(&mut tape, &ids)?;
    let grads = tape.backward(root)?;

    let mut perturbed = params.to_vec();
    let mut worst = 0.0f64;
    for (k, id) in ids.iter().enumerate() {
        let analytic = &grads[id];
        for idx in 0..params[k].len() {
            let (r, c) = (idx / params[k].ncols(), idx % params[k].ncols());
            let original = params[k][[r, c]];
            perturbed[k][[r, c]] = original + eps;
            let up = evaluate(&perturbed)?;
            perturbed[k][[r, c]] = original - eps;
            let down = evaluate(&perturbed)?;
            perturbed[k][[r, c]] = original;

            let numeric = (up - down) / (2.0 * eps);
            let ad = analytic[[r, c]];
            let denom = ad.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((ad - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
