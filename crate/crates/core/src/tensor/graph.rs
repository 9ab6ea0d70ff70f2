use std::collections::HashMap;
use std::sync::Arc;

use super::kernels::{self, axis_split, reduced_shape};
use super::{numel, GradientTape, ParamId, Result, Tensor, TensorError};

/// Index of a node inside its [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Minimum(NodeId, NodeId),
    Maximum(NodeId, NodeId),
    LessEqual,
    Matmul(NodeId, NodeId),
    AddScalar(NodeId),
    MulScalar(NodeId, f64),
    RSubScalar(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Softmax { x: NodeId, axis: usize },
    ReduceSum { x: NodeId, axis: usize },
    ReduceMean { x: NodeId, axis: usize },
    ReduceMax { x: NodeId, axis: usize },
    Concat { xs: Vec<NodeId>, axis: usize },
    Slice { x: NodeId, axis: usize, start: usize },
    BroadcastTo(NodeId),
    Reshape(NodeId),
    Permute { x: NodeId, axes: Vec<usize> },
    GatherRows { x: NodeId, indices: Arc<[usize]> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Minimum(..) => "minimum",
            Op::Maximum(..) => "maximum",
            Op::LessEqual => "less_equal",
            Op::Matmul(..) => "matmul",
            Op::AddScalar(_) => "add_scalar",
            Op::MulScalar(..) => "mul_scalar",
            Op::RSubScalar(_) => "rsub_scalar",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Clamp { .. } => "clamp",
            Op::Softmax { .. } => "softmax",
            Op::ReduceSum { .. } => "reduce_sum",
            Op::ReduceMean { .. } => "reduce_mean",
            Op::ReduceMax { .. } => "reduce_max",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::BroadcastTo(_) => "broadcast",
            Op::Reshape(_) => "reshape",
            Op::Permute { .. } => "permute",
            Op::GatherRows { .. } => "gather_rows",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only computational graph. Nodes are evaluated eagerly when
/// pushed, so a node's inputs always precede it.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Whether gradients can flow from this node to some parameter.
    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Values of the requested nodes.
    pub fn forward(&self, outputs: &[NodeId]) -> Result<Vec<Tensor>> {
        outputs
            .iter()
            .map(|&id| {
                self.nodes
                    .get(id.0)
                    .map(|n| n.value.clone())
                    .ok_or(TensorError::UnknownNode(id.0))
            })
            .collect()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let requires_grad = match &op {
            Op::Constant | Op::LessEqual => false,
            Op::Param(_) => true,
            op => inputs_of(op).iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn next_id(&self) -> usize {
        self.nodes.len()
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::UnknownNode(id.0))
        }
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    /// Leaf for a parameter. Inserting the same id twice returns the
    /// existing node, so gradients from every use land in one entry.
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> NodeId {
        if let Some(&node) = self.params.get(&id) {
            return node;
        }
        let node = self.push(Op::Param(id), value.clone());
        self.params.insert(id, node);
        node
    }

    fn broadcast_pair(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        self.check(a)?;
        self.check(b)?;
        kernels::broadcast_shape(self.shape(a), self.shape(b)).ok_or_else(|| TensorError::Broadcast {
            node: self.next_id(),
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        })
    }

    fn binary(
        &mut self,
        op: Op,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        let shape = self.broadcast_pair(op.name(), a, b)?;
        let value = kernels::binary_broadcast(self.value(a), self.value(b), &shape, f);
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Div(a, b), a, b, |x, y| x / y)
    }

    /// Elementwise minimum; on ties the gradient goes to `a`.
    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Minimum(a, b), a, b, |x, y| if x <= y { x } else { y })
    }

    /// Elementwise maximum; on ties the gradient goes to `a`.
    pub fn maximum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Maximum(a, b), a, b, |x, y| if x >= y { x } else { y })
    }

    /// `1.0` where `a <= b`, else `0.0`. Not differentiable: the result is
    /// treated as a constant.
    pub fn less_equal(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.broadcast_pair("less_equal", a, b)?;
        let value = kernels::binary_broadcast(self.value(a), self.value(b), &shape, |x, y| {
            if x <= y {
                1.0
            } else {
                0.0
            }
        });
        Ok(self.push(Op::LessEqual, value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            let expected = match (sa.len(), sb.len()) {
                (2, 2) => vec![sa[1], sb[1]],
                _ => vec![sa.last().copied().unwrap_or(0), 0],
            };
            return Err(TensorError::ShapeMismatch {
                node: self.next_id(),
                op: "matmul",
                expected,
                actual: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Op::Matmul(a, b), Tensor::from_parts(vec![m, n], data)))
    }

    fn unary(&mut self, op: Op, x: NodeId, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        self.check(x)?;
        let value = self.value(x).map(f);
        Ok(self.push(op, value))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary(Op::AddScalar(x), x, |v| v + c)
    }

    pub fn mul_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary(Op::MulScalar(x, c), x, |v| v * c)
    }

    /// `c - x`.
    pub fn rsub_scalar(&mut self, c: f64, x: NodeId) -> Result<NodeId> {
        self.unary(Op::RSubScalar(x), x, |v| c - v)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Sigmoid(x), x, sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Tanh(x), x, f64::tanh)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Relu(x), x, |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Exp(x), x, f64::exp)
    }

    /// Natural log. Inputs are not clamped; see [`Graph::clamp`].
    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Log(x), x, f64::ln)
    }

    /// Clamps into `[lo, hi]`. The gradient passes wherever the input lies
    /// inside the closed interval.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.unary(Op::Clamp { x, lo, hi }, x, |v| v.max(lo).min(hi))
    }

    fn check_axis(&self, op: &'static str, x: NodeId, axis: usize) -> Result<()> {
        self.check(x)?;
        let rank = self.shape(x).len();
        if axis >= rank {
            return Err(TensorError::AxisOutOfRange {
                node: self.next_id(),
                op,
                axis,
                rank,
            });
        }
        Ok(())
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_axis("softmax", x, axis)?;
        let t = self.value(x);
        let data = kernels::softmax_axis(t.data(), axis_split(t.shape(), axis));
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(Op::Softmax { x, axis }, value))
    }

    pub fn reduce_sum(&mut self, x: NodeId, axis: usize, keepdim: bool) -> Result<NodeId> {
        self.check_axis("reduce_sum", x, axis)?;
        let t = self.value(x);
        let data = kernels::reduce_sum(t.data(), axis_split(t.shape(), axis));
        let value = Tensor::from_parts(reduced_shape(t.shape(), axis, keepdim), data);
        Ok(self.push(Op::ReduceSum { x, axis }, value))
    }

    /// Arithmetic mean along `axis`. An empty axis yields NaN.
    pub fn reduce_mean(&mut self, x: NodeId, axis: usize, keepdim: bool) -> Result<NodeId> {
        self.check_axis("reduce_mean", x, axis)?;
        let t = self.value(x);
        let split = axis_split(t.shape(), axis);
        let n = split.1 as f64;
        let data = kernels::reduce_sum(t.data(), split).into_iter().map(|s| s / n).collect();
        let value = Tensor::from_parts(reduced_shape(t.shape(), axis, keepdim), data);
        Ok(self.push(Op::ReduceMean { x, axis }, value))
    }

    /// Maximum along `axis`; the gradient is routed to the lowest-index
    /// maximum. The axis must be non-empty.
    pub fn reduce_max(&mut self, x: NodeId, axis: usize, keepdim: bool) -> Result<NodeId> {
        self.check_axis("reduce_max", x, axis)?;
        let t = self.value(x);
        let split = axis_split(t.shape(), axis);
        if split.1 == 0 {
            return Err(TensorError::IndexOutOfRange {
                node: self.next_id(),
                op: "reduce_max",
                index: 0,
                len: 0,
            });
        }
        let (_, len, inner) = split;
        let arg = kernels::argmax_axis(t.data(), split);
        let data = arg
            .iter()
            .enumerate()
            .map(|(slot, &j)| {
                let (o, i) = (slot / inner, slot % inner);
                t.data()[(o * len + j) * inner + i]
            })
            .collect();
        let value = Tensor::from_parts(reduced_shape(t.shape(), axis, keepdim), data);
        Ok(self.push(Op::ReduceMax { x, axis }, value))
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let flat = self.reshape(x, &[self.value(x).numel()])?;
        self.reduce_sum(flat, 0, false)
    }

    /// Mean of every element, as a rank-0 tensor.
    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let flat = self.reshape(x, &[self.value(x).numel()])?;
        self.reduce_mean(flat, 0, false)
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId> {
        let Some(&first) = xs.first() else {
            return Err(TensorError::ShapeMismatch {
                node: self.next_id(),
                op: "concat",
                expected: vec![1],
                actual: vec![0],
            });
        };
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &x in xs {
            self.check(x)?;
            let s = self.shape(x);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                let mut expected = base.clone();
                expected[axis] = s.get(axis).copied().unwrap_or(0);
                return Err(TensorError::ShapeMismatch {
                    node: self.next_id(),
                    op: "concat",
                    expected,
                    actual: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base;
        shape[axis] = total;
        let mut data = vec![0.0; numel(&shape)];
        let mut start = 0;
        for &x in xs {
            let t = self.value(x);
            let split = axis_split(t.shape(), axis);
            kernels::place_along_axis(&mut data, t.data(), split, start, total);
            start += split.1;
        }
        let value = Tensor::from_parts(shape, data);
        Ok(self.push(Op::Concat { xs: xs.to_vec(), axis }, value))
    }

    /// Keeps `len` entries of `axis` starting at `start`; the axis is kept.
    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        self.check_axis("slice", x, axis)?;
        let t = self.value(x);
        let dim = t.shape()[axis];
        if start + len > dim {
            return Err(TensorError::IndexOutOfRange {
                node: self.next_id(),
                op: "slice",
                index: start + len,
                len: dim,
            });
        }
        let data = kernels::take_along_axis(t.data(), axis_split(t.shape(), axis), start, len);
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::from_parts(shape, data);
        Ok(self.push(Op::Slice { x, axis, start }, value))
    }

    pub fn broadcast_to(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check(x)?;
        let src = self.shape(x).to_vec();
        match kernels::broadcast_shape(&src, shape) {
            Some(s) if s == shape => {}
            _ => {
                return Err(TensorError::Broadcast {
                    node: self.next_id(),
                    op: "broadcast",
                    lhs: src,
                    rhs: shape.to_vec(),
                })
            }
        }
        let zeros = Tensor::zeros(&[]);
        let value = kernels::binary_broadcast(self.value(x), &zeros, shape, |v, _| v);
        Ok(self.push(Op::BroadcastTo(x), value))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check(x)?;
        let t = self.value(x);
        if numel(shape) != t.numel() {
            return Err(TensorError::ShapeMismatch {
                node: self.next_id(),
                op: "reshape",
                expected: shape.to_vec(),
                actual: t.shape().to_vec(),
            });
        }
        let value = Tensor::from_parts(shape.to_vec(), t.data().to_vec());
        Ok(self.push(Op::Reshape(x), value))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: NodeId, axes: &[usize]) -> Result<NodeId> {
        self.check(x)?;
        let rank = self.shape(x).len();
        let mut seen = vec![false; rank];
        for &a in axes {
            if a >= rank || seen[a] {
                return Err(TensorError::AxisOutOfRange {
                    node: self.next_id(),
                    op: "permute",
                    axis: a,
                    rank,
                });
            }
            seen[a] = true;
        }
        if axes.len() != rank {
            return Err(TensorError::ShapeMismatch {
                node: self.next_id(),
                op: "permute",
                expected: vec![rank],
                actual: vec![axes.len()],
            });
        }
        let value = kernels::permute(self.value(x), axes);
        Ok(self.push(Op::Permute { x, axes: axes.to_vec() }, value))
    }

    /// Selects rows (entries of axis 0) by index; indices may repeat.
    pub fn gather_rows(&mut self, x: NodeId, indices: impl Into<Arc<[usize]>>) -> Result<NodeId> {
        self.check(x)?;
        let indices: Arc<[usize]> = indices.into();
        let t = self.value(x);
        if t.rank() == 0 {
            return Err(TensorError::AxisOutOfRange {
                node: self.next_id(),
                op: "gather_rows",
                axis: 0,
                rank: 0,
            });
        }
        let rows = t.shape()[0];
        let width = t.numel() / rows.max(1);
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices.iter() {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange {
                    node: self.next_id(),
                    op: "gather_rows",
                    index: i,
                    len: rows,
                });
            }
            data.extend_from_slice(&t.data()[i * width..(i + 1) * width]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = indices.len();
        let value = Tensor::from_parts(shape, data);
        Ok(self.push(Op::GatherRows { x, indices }, value))
    }

    /// Reverse-mode gradients of a scalar node with respect to every
    /// parameter leaf in the graph. Leaves the output does not depend on
    /// get zero gradients.
    pub fn backward(&self, output: NodeId) -> Result<GradientTape> {
        self.check(output)?;
        let out_shape = self.shape(output);
        let scalar = out_shape.is_empty() || out_shape == [1];
        if !scalar {
            return Err(TensorError::NonScalarOutput {
                node: output.0,
                shape: out_shape.to_vec(),
            });
        }
        let mut tape = GradientTape::new();
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        if self.nodes[output.0].requires_grad {
            grads[output.0] = Some(Tensor::ones(out_shape));
        }
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            self.propagate(node, g, &mut grads, &mut tape);
        }
        for (&id, &node) in &self.params {
            tape.ensure(id, self.shape(node));
        }
        Ok(tape)
    }

    fn propagate(
        &self,
        node: &Node,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        tape: &mut GradientTape,
    ) {
        let val = |id: NodeId| &self.nodes[id.0].value;
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        let mut send = |id: NodeId, t: Tensor| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(t),
            }
        };
        let out = &node.value;
        match &node.op {
            Op::Constant | Op::LessEqual => {}
            Op::Param(id) => tape.accumulate(*id, g),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let neg = matches!(node.op, Op::Sub(..));
                let gb = wants(*b).then(|| if neg { g.map(|x| -x) } else { g.clone() });
                if wants(*a) {
                    send(*a, kernels::unbroadcast(g, val(*a).shape()));
                }
                if let Some(gb) = gb {
                    send(*b, kernels::unbroadcast(gb, val(*b).shape()));
                }
            }
            Op::Mul(a, b) => {
                let shape = out.shape();
                if wants(*a) {
                    let ga = kernels::binary_broadcast(&g, val(*b), shape, |g, y| g * y);
                    send(*a, kernels::unbroadcast(ga, val(*a).shape()));
                }
                if wants(*b) {
                    let gb = kernels::binary_broadcast(&g, val(*a), shape, |g, x| g * x);
                    send(*b, kernels::unbroadcast(gb, val(*b).shape()));
                }
            }
            Op::Div(a, b) => {
                let shape = out.shape();
                if wants(*a) {
                    let ga = kernels::binary_broadcast(&g, val(*b), shape, |g, y| g / y);
                    send(*a, kernels::unbroadcast(ga, val(*a).shape()));
                }
                if wants(*b) {
                    // d(a/b)/db = -(a/b)/b
                    let gb = kernels::ternary_broadcast(&g, out, val(*b), |g, q, y| -g * q / y);
                    send(*b, kernels::unbroadcast(gb, val(*b).shape()));
                }
            }
            Op::Minimum(a, b) | Op::Maximum(a, b) => {
                let is_min = matches!(node.op, Op::Minimum(..));
                let first = move |x: f64, y: f64| if is_min { x <= y } else { x >= y };
                let (va, vb) = (val(*a), val(*b));
                if wants(*a) {
                    let ga = kernels::ternary_broadcast(&g, va, vb, |g, x, y| if first(x, y) { g } else { 0.0 });
                    send(*a, kernels::unbroadcast(ga, va.shape()));
                }
                if wants(*b) {
                    let gb = kernels::ternary_broadcast(&g, va, vb, |g, x, y| if first(x, y) { 0.0 } else { g });
                    send(*b, kernels::unbroadcast(gb, vb.shape()));
                }
            }
            Op::Matmul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                if wants(*a) {
                    let ga = kernels::matmul_a_bt(g.data(), val(*b).data(), m, n, k);
                    send(*a, Tensor::from_parts(vec![m, k], ga));
                }
                if wants(*b) {
                    let gb = kernels::matmul_at_b(val(*a).data(), g.data(), m, k, n);
                    send(*b, Tensor::from_parts(vec![k, n], gb));
                }
            }
            Op::AddScalar(x) => send(*x, g),
            Op::MulScalar(x, c) => send(*x, g.map(|v| v * c)),
            Op::RSubScalar(x) => send(*x, g.map(|v| -v)),
            Op::Sigmoid(x) => send(*x, zip(&g, out, |g, y| g * y * (1.0 - y))),
            Op::Tanh(x) => send(*x, zip(&g, out, |g, y| g * (1.0 - y * y))),
            Op::Relu(x) => send(*x, zip(&g, val(*x), |g, v| if v > 0.0 { g } else { 0.0 })),
            Op::Exp(x) => send(*x, zip(&g, out, |g, y| g * y)),
            Op::Log(x) => send(*x, zip(&g, val(*x), |g, v| g / v)),
            Op::Clamp { x, lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                send(
                    *x,
                    zip(&g, val(*x), |g, v| if v >= lo && v <= hi { g } else { 0.0 }),
                )
            }
            Op::Softmax { x, axis } => {
                let split = axis_split(out.shape(), *axis);
                let data = kernels::softmax_backward(out.data(), g.data(), split);
                send(*x, Tensor::from_parts(out.shape().to_vec(), data));
            }
            Op::ReduceSum { x, axis } | Op::ReduceMean { x, axis } => {
                let input = val(*x);
                let (outer, len, inner) = axis_split(input.shape(), *axis);
                let scale = if matches!(node.op, Op::ReduceMean { .. }) {
                    1.0 / len as f64
                } else {
                    1.0
                };
                let mut data = vec![0.0; input.numel()];
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            data[(o * len + j) * inner + i] = g.data()[o * inner + i] * scale;
                        }
                    }
                }
                send(*x, Tensor::from_parts(input.shape().to_vec(), data));
            }
            Op::ReduceMax { x, axis } => {
                let input = val(*x);
                let split = axis_split(input.shape(), *axis);
                let (_, len, inner) = split;
                let arg = kernels::argmax_axis(input.data(), split);
                let mut data = vec![0.0; input.numel()];
                for (slot, &j) in arg.iter().enumerate() {
                    let (o, i) = (slot / inner, slot % inner);
                    data[(o * len + j) * inner + i] = g.data()[slot];
                }
                send(*x, Tensor::from_parts(input.shape().to_vec(), data));
            }
            Op::Concat { xs, axis } => {
                let total = out.shape()[*axis];
                let mut start = 0;
                for &x in xs {
                    let shape = val(x).shape().to_vec();
                    let len = shape[*axis];
                    if wants(x) {
                        let split = axis_split(out.shape(), *axis);
                        let part = kernels::take_along_axis(g.data(), split, start, len);
                        send(x, Tensor::from_parts(shape, part));
                    }
                    debug_assert!(start + len <= total);
                    start += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let input = val(*x);
                let split = axis_split(out.shape(), *axis);
                let total = input.shape()[*axis];
                let mut data = vec![0.0; input.numel()];
                kernels::place_along_axis(&mut data, g.data(), split, *start, total);
                send(*x, Tensor::from_parts(input.shape().to_vec(), data));
            }
            Op::BroadcastTo(x) => send(*x, kernels::unbroadcast(g, val(*x).shape())),
            Op::Reshape(x) => send(*x, Tensor::from_parts(val(*x).shape().to_vec(), g.into_data())),
            Op::Permute { x, axes } => {
                let inv = kernels::inverse_permutation(axes);
                send(*x, kernels::permute(&g, &inv));
            }
            Op::GatherRows { x, indices } => {
                let input = val(*x);
                let rows = input.shape()[0];
                let width = input.numel() / rows.max(1);
                let mut data = vec![0.0; input.numel()];
                for (r, &i) in indices.iter().enumerate() {
                    let src = &g.data()[r * width..(r + 1) * width];
                    for (d, s) in data[i * width..(i + 1) * width].iter_mut().zip(src) {
                        *d += s;
                    }
                }
                send(*x, Tensor::from_parts(input.shape().to_vec(), data));
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn inputs_of(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Constant | Op::Param(_) | Op::LessEqual => vec![],
        Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::Div(a, b)
        | Op::Minimum(a, b)
        | Op::Maximum(a, b)
        | Op::Matmul(a, b) => vec![*a, *b],
        Op::AddScalar(x)
        | Op::MulScalar(x, _)
        | Op::RSubScalar(x)
        | Op::Sigmoid(x)
        | Op::Tanh(x)
        | Op::Relu(x)
        | Op::Exp(x)
        | Op::Log(x)
        | Op::BroadcastTo(x)
        | Op::Reshape(x) => vec![*x],
        Op::Clamp { x, .. }
        | Op::Softmax { x, .. }
        | Op::ReduceSum { x, .. }
        | Op::ReduceMean { x, .. }
        | Op::ReduceMax { x, .. }
        | Op::Slice { x, .. }
        | Op::Permute { x, .. }
        | Op::GatherRows { x, .. } => vec![*x],
        Op::Concat { xs, .. } => xs.clone(),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamKind, ParamStore};

    fn vec_node(g: &mut Graph, v: &[f64]) -> NodeId {
        g.constant(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn elementwise_add() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[1.0, 2.0]);
        let b = vec_node(&mut g, &[3.0, 4.0]);
        let c = g.add(a, b).unwrap();
        assert_eq!(g.forward(&[c]).unwrap()[0].data(), &[4.0, 6.0]);
    }

    #[test]
    fn matmul_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
        let b = g.constant(Tensor::matrix(3, 2, vec![1.0; 6]).unwrap());
        let m = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(m), &[2, 2]);
        assert_eq!(g.value(m).data(), &[3.0; 4]);
        let err = g.matmul(a, a).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { op: "matmul", .. }), "{err}");
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.scalar(0.0);
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y).item(), Some(0.5));
    }

    #[test]
    fn linear_derivative() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Free, Tensor::scalar(2.0)).unwrap();
        let mut g = Graph::new();
        let wn = g.param(w, store.get(w));
        let x = g.scalar(3.0);
        let y = g.mul(wn, x).unwrap();
        let tape = g.backward(y).unwrap();
        assert_eq!(tape.get(w).unwrap().item(), Some(3.0));
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Free, Tensor::scalar(0.0)).unwrap();
        let mut g = Graph::new();
        let wn = g.param(w, store.get(w));
        let y = g.sigmoid(wn).unwrap();
        let tape = g.backward(y).unwrap();
        assert_eq!(tape.get(w).unwrap().item(), Some(0.25));
    }

    #[test]
    fn reductions() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Free, Tensor::vector(vec![0.2, 0.4, 0.6])).unwrap();
        let mut g = Graph::new();
        let x = g.param(w, store.get(w));
        let mean = g.reduce_mean(x, 0, false).unwrap();
        assert!((g.value(mean).item().unwrap() - 0.4).abs() < 1e-15);
        let max = g.reduce_max(x, 0, false).unwrap();
        assert_eq!(g.value(max).item(), Some(0.6));
        let tape = g.backward(max).unwrap();
        assert_eq!(tape.get(w).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn reduce_max_ties_go_to_lowest_index() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Free, Tensor::vector(vec![0.1, 0.7, 0.7])).unwrap();
        let mut g = Graph::new();
        let x = g.param(w, store.get(w));
        let max = g.reduce_max(x, 0, false).unwrap();
        let tape = g.backward(max).unwrap();
        assert_eq!(tape.get(w).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let mut g = Graph::new();
        let x = vec_node(&mut g, &[0.0, 0.0]);
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Free, Tensor::vector(vec![1.0, 2.0])).unwrap();
        let mut g = Graph::new();
        let x = g.param(w, store.get(w));
        let err = g.backward(x).unwrap_err();
        assert!(matches!(err, TensorError::NonScalarOutput { .. }));
    }

    #[test]
    fn axis_and_broadcast_errors() {
        let mut g = Graph::new();
        let a = vec_node(&mut g, &[1.0, 2.0]);
        let b = vec_node(&mut g, &[1.0, 2.0, 3.0]);
        assert!(matches!(g.add(a, b), Err(TensorError::Broadcast { .. })));
        assert!(matches!(g.reduce_sum(a, 1, false), Err(TensorError::AxisOutOfRange { .. })));
    }

    #[test]
    fn untouched_params_get_zero_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Free, Tensor::scalar(1.0)).unwrap();
        let v = store.add("v", ParamKind::Free, Tensor::vector(vec![1.0, 1.0])).unwrap();
        let mut g = Graph::new();
        let wn = g.param(w, store.get(w));
        g.param(v, store.get(v));
        let y = g.mul_scalar(wn, 4.0).unwrap();
        let tape = g.backward(y).unwrap();
        assert_eq!(tape.get(v).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(tape.get(w).unwrap().item(), Some(4.0));
    }

    #[test]
    fn broadcasting_gradient_sums_back() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamKind::Free, Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let col = g.param(w, store.get(w));
        let row = g.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        let prod = g.mul(col, row).unwrap();
        assert_eq!(g.shape(prod), &[2, 3]);
        let s = g.sum_all(prod).unwrap();
        let tape = g.backward(s).unwrap();
        assert_eq!(tape.get(w).unwrap().data(), &[6.0, 6.0]);
    }

    #[test]
    fn mean_times_count_is_sum() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 3, vec![0.1, 0.5, 0.9, 1.3, -2.0, 7.25]).unwrap());
        let mean = g.reduce_mean(x, 1, false).unwrap();
        let scaled = g.mul_scalar(mean, 3.0).unwrap();
        let sum = g.reduce_sum(x, 1, false).unwrap();
        assert!(g.value(scaled).max_abs_diff(g.value(sum)) < 1e-9);
    }
}
