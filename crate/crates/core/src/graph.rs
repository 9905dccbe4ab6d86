//! Eager tape for reverse-mode differentiation.
//!
//! Every op evaluates immediately and appends a node to the tape. Inputs of a
//! node always precede it, so reverse append order is a valid topological
//! order for the backward sweep.

use std::fmt;

use crate::error::{shape_err, Error, Result};
use crate::ops::activation::Activation;
use crate::ops::conv::ConvGeom;
use crate::ops::elementwise::BinaryKind;
use crate::ops::linalg::MatmulPlan;
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// A user-supplied differentiable operation.
///
/// The forward value is computed by the caller and passed to
/// [`Graph::custom`]; the tape only needs the vector-Jacobian product.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &str;

    /// Returns one gradient buffer per input (`None` for inputs that get no gradient).
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &[f64]) -> Vec<Option<Vec<f64>>>;
}

pub(crate) enum Op {
    Leaf,
    Activation { x: Var, kind: Activation },
    Softplus { x: Var },
    Scale { x: Var, factor: f64 },
    Binary { a: Var, b: Var, kind: BinaryKind },
    Expand { x: Var },
    Matmul { a: Var, b: Var, plan: MatmulPlan },
    Conv2d { x: Var, w: Var, bias: Option<Var>, geom: ConvGeom, cols: Vec<f64> },
    Depthwise { x: Var, w: Var, bias: Option<Var>, geom: ConvGeom },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Reshape { x: Var },
    Permute { x: Var, axes: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Reduce { x: Var, axis: Option<usize>, mean: bool },
    Upsample { x: Var, scale: usize },
    Embedding { table: Var, ids: Vec<usize> },
    Rope { x: Var, cos: Vec<f64>, sin: Vec<f64> },
    SsmScan { x: Var, params: [Var; 5], reverse: bool, states: Vec<f64> },
    BceWithLogits { logits: Var, target: Vec<f64>, pos_weight: f64 },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

/// Names of every differentiable op kind the tape knows, excluding
/// user-supplied custom ops.
pub const OP_KINDS: &[&str] = &[
    "activation",
    "softplus",
    "scale",
    "binary",
    "expand",
    "matmul",
    "conv2d",
    "depthwise_conv2d",
    "layer_norm",
    "reshape",
    "permute",
    "concat",
    "slice",
    "reduce",
    "upsample_bilinear",
    "embedding",
    "rope",
    "ssm_scan",
    "bce_with_logits",
];

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Activation { .. } => "activation",
            Op::Softplus { .. } => "softplus",
            Op::Scale { .. } => "scale",
            Op::Binary { .. } => "binary",
            Op::Expand { .. } => "expand",
            Op::Matmul { .. } => "matmul",
            Op::Conv2d { .. } => "conv2d",
            Op::Depthwise { .. } => "depthwise_conv2d",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Reshape { .. } => "reshape",
            Op::Permute { .. } => "permute",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reduce { .. } => "reduce",
            Op::Upsample { .. } => "upsample_bilinear",
            Op::Embedding { .. } => "embedding",
            Op::Rope { .. } => "rope",
            Op::SsmScan { .. } => "ssm_scan",
            Op::BceWithLogits { .. } => "bce_with_logits",
            Op::Custom { .. } => "custom",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Activation { x, .. }
            | Op::Softplus { x }
            | Op::Scale { x, .. }
            | Op::Expand { x }
            | Op::Reshape { x }
            | Op::Permute { x, .. }
            | Op::Slice { x, .. }
            | Op::Reduce { x, .. }
            | Op::Upsample { x, .. }
            | Op::Rope { x, .. } => vec![*x],
            Op::Binary { a, b, .. } | Op::Matmul { a, b, .. } => vec![*a, *b],
            Op::Conv2d { x, w, bias, .. } | Op::Depthwise { x, w, bias, .. } => {
                let mut v = vec![*x, *w];
                v.extend(bias);
                v
            }
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Concat { inputs, .. } | Op::Custom { inputs, .. } => inputs.clone(),
            Op::Embedding { table, .. } => vec![*table],
            Op::SsmScan { x, params, .. } => {
                let mut v = vec![*x];
                v.extend_from_slice(params);
                v
            }
            Op::BceWithLogits { logits, .. } => vec![*logits],
        }
    }
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Destination for gradient contributions during the backward sweep.
pub(crate) struct GradSink<'a> {
    nodes: &'a [Node],
    grads: &'a mut [Option<Vec<f64>>],
}

impl GradSink<'_> {
    pub(crate) fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulates into the gradient buffer of `v`, allocating zeros first if needed.
    pub(crate) fn with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let n = self.nodes[v.0].value.numel();
        let buf = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(buf);
    }

    pub(crate) fn add(&mut self, v: Var, g: Vec<f64>) {
        if !self.needs(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(buf) => buf.iter_mut().zip(&g).for_each(|(b, x)| *b += x),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Append-only record of a forward computation.
///
/// A graph is single-owner: build one per forward pass, call
/// [`Graph::backward`] once, then read leaf gradients with [`Graph::grad`].
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.nodes.len()).finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Records a leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest element count of any recorded value.
    pub fn max_node_numel(&self) -> usize {
        self.nodes.iter().map(|n| n.value.numel()).max().unwrap_or(0)
    }

    /// Name of the op that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Gradient of the last backward sweep with respect to leaf `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// First node whose value is not finite, if any.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        let name = op.name();
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite {
                op: name,
                node: self.nodes.len(),
            });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an op whose forward value was computed outside the tape.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Result<Var> {
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
        )
    }

    /// Back-propagates from the scalar `loss`, filling gradients of every
    /// leaf that requires them. Gradients of a previous sweep are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut leaf_grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            self.grads = leaf_grads;
            return Ok(());
        }
        grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                leaf_grads[i] = Some(Tensor::new(node.value.shape().to_vec(), gout)?);
                continue;
            }
            let mut sink = GradSink {
                nodes,
                grads: &mut grads,
            };
            backward_node(nodes, node, &gout, &mut sink)?;
        }
        self.grads = leaf_grads;
        Ok(())
    }
}

fn backward_node(nodes: &[Node], node: &Node, gout: &[f64], sink: &mut GradSink<'_>) -> Result<()> {
    use crate::ops::*;
    let val = |v: &Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::Activation { x, kind } => {
            let g = activation::backward(*kind, val(x).data(), node.value.data(), gout);
            sink.add(*x, g);
        }
        Op::Softplus { x } => sink.add(*x, activation::softplus_backward(val(x).data(), gout)),
        Op::Scale { x, factor } => sink.add(*x, gout.iter().map(|g| g * factor).collect()),
        Op::Binary { a, b, kind } => elementwise::binary_backward(*kind, *a, *b, val(a), val(b), node.value.shape(), gout, sink),
        Op::Expand { x } => {
            let g = elementwise::reduce_to(gout, node.value.shape(), val(x).shape());
            sink.add(*x, g);
        }
        Op::Matmul { a, b, plan } => linalg::matmul_backward(plan, *a, *b, val(a), val(b), gout, sink),
        Op::Conv2d { x, w, bias, geom, cols } => conv::conv2d_backward(geom, *x, *w, *bias, val(w), cols, gout, sink),
        Op::Depthwise { x, w, bias, geom } => conv::depthwise_backward(geom, *x, *w, *bias, val(x), val(w), gout, sink),
        Op::LayerNorm { x, gamma, beta, xhat, rstd } => norm::layer_norm_backward(*x, *gamma, *beta, val(gamma), xhat, rstd, gout, sink),
        Op::Reshape { x } => sink.add(*x, gout.to_vec()),
        Op::Permute { x, axes } => {
            let g = shape::permute_backward(val(x).shape(), axes, gout);
            sink.add(*x, g);
        }
        Op::Concat { inputs, axis } => {
            let shapes: Vec<&[usize]> = inputs.iter().map(|v| val(v).shape()).collect();
            for (v, g) in inputs.iter().zip(shape::concat_backward(&shapes, *axis, gout)) {
                sink.add(*v, g);
            }
        }
        Op::Slice { x, axis, start } => {
            let g = shape::slice_backward(val(x).shape(), *axis, *start, node.value.shape(), gout);
            sink.add(*x, g);
        }
        Op::Reduce { x, axis, mean } => {
            let g = shape::reduce_backward(val(x).shape(), *axis, *mean, gout);
            sink.add(*x, g);
        }
        Op::Upsample { x, scale } => {
            let g = shape::upsample_backward(val(x).shape(), *scale, gout);
            sink.add(*x, g);
        }
        Op::Embedding { table, ids } => {
            let d = val(table).shape()[1];
            sink.with(*table, |buf| {
                for (row, &id) in ids.iter().enumerate() {
                    let src = &gout[row * d..(row + 1) * d];
                    buf[id * d..(id + 1) * d].iter_mut().zip(src).for_each(|(b, g)| *b += g);
                }
            });
        }
        Op::Rope { x, cos, sin } => {
            let g = crate::attn::rope_backward(val(x).shape(), cos, sin, gout);
            sink.add(*x, g);
        }
        Op::SsmScan { x, params, reverse, states } => {
            let p: Vec<&Tensor> = params.iter().map(val).collect();
            let grads = crate::ssm::scan_backward(val(x), &p, *reverse, states, gout)?;
            let mut it = grads.into_iter();
            sink.add(*x, it.next().expect("x grad"));
            for (v, g) in params.iter().zip(it) {
                sink.add(*v, g);
            }
        }
        Op::BceWithLogits { logits, target, pos_weight } => {
            let g = loss::bce_backward(val(logits).data(), target, *pos_weight, gout[0]);
            sink.add(*logits, g);
        }
        Op::Custom { inputs, op } => {
            let ins: Vec<&Tensor> = inputs.iter().map(val).collect();
            let grads = op.backward(&ins, &node.value, gout);
            if grads.len() != inputs.len() {
                return Err(shape_err(
                    "custom",
                    format!("`{}` returned {} gradients for {} inputs", op.name(), grads.len(), inputs.len()),
                ));
            }
            for (v, g) in inputs.iter().zip(grads) {
                if let Some(g) = g {
                    sink.add(*v, g);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new([2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap());
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn half_square_gradient_is_identity() {
        let mut g = Graph::new();
        let data = vec![1.0, -2.0, 3.0, 0.5];
        let x = g.param(Tensor::new([4], data.clone()).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let half = g.scale(s, 0.5).unwrap();
        g.backward(half).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), data.as_slice());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros([3]).unwrap());
        assert!(matches!(g.backward(x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::ones([3]).unwrap());
        let x = g.param(Tensor::ones([3]).unwrap());
        let y = g.mul(c, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert!(g.grad(x).is_some());
    }

    #[test]
    fn inputs_precede_outputs() {
        let mut g = Graph::new();
        let x = g.param(Tensor::ones([2, 2]).unwrap());
        let y = g.matmul(x, x).unwrap();
        let z = g.sum(y).unwrap();
        for (i, node) in g.nodes.iter().enumerate() {
            assert!(node.op.inputs().iter().all(|v| v.0 < i));
        }
        assert!(z.0 > y.0 && y.0 > x.0);
    }
}
