use crate::error::{shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::tensor::{numel, strides, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// Output shape when broadcasting two equal-rank shapes whose extents are
/// equal or 1.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(shape_err(op, format!("rank mismatch: {a:?} vs {b:?}")));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, y) => Ok(y),
            (x, 1) => Ok(x),
            _ => Err(shape_err(op, format!("cannot broadcast {a:?} with {b:?}"))),
        })
        .collect()
}

/// Strides of `shape` laid out against `out`, zero along broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let s = strides(shape);
    shape
        .iter()
        .zip(out)
        .zip(s)
        .map(|((&e, &o), s)| if e == 1 && o != 1 { 0 } else { s })
        .collect()
}

/// Calls `f(out_index, a_offset, b_offset)` for every element of `out`.
fn for_each_pair(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = out.len();
    let inner = out[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let outer = numel(out) / inner;
    let mut idx = vec![0usize; rank - 1];
    let (mut oa, mut ob) = (0usize, 0usize);
    for o in 0..outer {
        for j in 0..inner {
            f(o * inner + j, oa + j * ia, ob + j * ib);
        }
        for ax in (0..rank - 1).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

/// Sums `g` (shaped `from`) down to the broadcast-compatible shape `to`.
pub(crate) fn reduce_to(g: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    if from == to {
        return g.to_vec();
    }
    let mut out = vec![0.0; numel(to)];
    let st = broadcast_strides(to, from);
    let zeros = vec![0; from.len()];
    for_each_pair(from, &st, &zeros, |i, o, _| out[o] += g[i]);
    out
}

impl Graph {
    fn binary(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        let (ta, tb) = (self.value(a), self.value(b));
        let out_shape = broadcast_shape(name, ta.shape(), tb.shape())?;
        let f = |x: f64, y: f64| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let data = if ta.shape() == tb.shape() {
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let mut data = vec![0.0; numel(&out_shape)];
            let sa = broadcast_strides(ta.shape(), &out_shape);
            let sb = broadcast_strides(tb.shape(), &out_shape);
            let (da, db) = (ta.data(), tb.data());
            for_each_pair(&out_shape, &sa, &sb, |i, oa, ob| data[i] = f(da[oa], db[ob]));
            data
        };
        let out = Tensor::new(out_shape, data)?;
        self.push(out, Op::Binary { a, b, kind })
    }

    /// Elementwise sum with broadcasting over size-1 axes of equal-rank operands.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Sub)
    }

    /// Elementwise product with broadcasting over size-1 axes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Mul)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|v| v * factor).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        self.push(out, Op::Scale { x, factor })
    }

    /// Repeats `x` along its size-1 axes to reach `shape`.
    pub fn expand(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let src = self.value(x);
        let out_shape = broadcast_shape("expand", src.shape(), shape)?;
        if out_shape != shape {
            return Err(shape_err("expand", format!("{:?} cannot expand to {shape:?}", src.shape())));
        }
        let mut data = vec![0.0; numel(shape)];
        let sx = broadcast_strides(src.shape(), shape);
        let zeros = vec![0; shape.len()];
        let d = src.data();
        for_each_pair(shape, &sx, &zeros, |i, o, _| data[i] = d[o]);
        let out = Tensor::new(shape.to_vec(), data)?;
        self.push(out, Op::Expand { x })
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        let d = self.shape(bias).iter().product::<usize>();
        let mut bshape = vec![1; rank];
        bshape[rank - 1] = d;
        let b = self.reshape(bias, &bshape)?;
        self.add(x, b)
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn binary_backward(
    kind: BinaryKind,
    a: Var,
    b: Var,
    ta: &Tensor,
    tb: &Tensor,
    out_shape: &[usize],
    gout: &[f64],
    sink: &mut GradSink<'_>,
) {
    match kind {
        BinaryKind::Add => {
            if sink.needs(a) {
                sink.add(a, reduce_to(gout, out_shape, ta.shape()));
            }
            if sink.needs(b) {
                sink.add(b, reduce_to(gout, out_shape, tb.shape()));
            }
        }
        BinaryKind::Sub => {
            if sink.needs(a) {
                sink.add(a, reduce_to(gout, out_shape, ta.shape()));
            }
            if sink.needs(b) {
                let neg: Vec<f64> = gout.iter().map(|g| -g).collect();
                sink.add(b, reduce_to(&neg, out_shape, tb.shape()));
            }
        }
        BinaryKind::Mul => {
            let sa = broadcast_strides(ta.shape(), out_shape);
            let sb = broadcast_strides(tb.shape(), out_shape);
            let (da, db) = (ta.data(), tb.data());
            if sink.needs(a) {
                let mut ga = vec![0.0; ta.numel()];
                for_each_pair(out_shape, &sa, &sb, |i, oa, ob| ga[oa] += gout[i] * db[ob]);
                sink.add(a, ga);
            }
            if sink.needs(b) {
                let mut gb = vec![0.0; tb.numel()];
                for_each_pair(out_shape, &sa, &sb, |i, oa, ob| gb[ob] += gout[i] * da[oa]);
                sink.add(b, gb);
            }
        }
    }
}
