use crate::error::{shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::tensor::{numel, strides, Tensor};

/// Strided matrix view: `(data, row_stride, col_stride)`.
pub(crate) type View<'a> = (&'a [f64], usize, usize);

/// `C = A·B + beta·C` for an `m×k` A and `k×n` B with arbitrary strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>, c: &mut [f64], rsc: usize, csc: usize, beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: C out of bounds");
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(last(m, k, a.1, a.2) < a.0.len(), "gemm: A out of bounds");
    assert!(last(k, n, b.1, b.2) < b.0.len(), "gemm: B out of bounds");
    // SAFETY: every index touched by dgemm is bounded by the asserts above,
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Offsets into A, B and C for each (broadcast) batch entry.
#[derive(Clone, Debug)]
pub(crate) struct MatmulPlan {
    m: usize,
    k: usize,
    n: usize,
    offsets: Vec<(usize, usize, usize)>,
}

fn plan(a: &[usize], b: &[usize]) -> Result<(MatmulPlan, Vec<usize>)> {
    let err = || shape_err("matmul", format!("cannot contract {a:?} with {b:?}"));
    if a.len() < 2 || b.len() < 2 {
        return Err(err());
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(err());
    }
    let (ba, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
    if bb.is_empty() {
        // Shared right operand: fold the batch of A into its rows.
        let rows = numel(ba) * m;
        let mut shape = ba.to_vec();
        shape.extend([m, n]);
        return Ok((MatmulPlan { m: rows, k, n, offsets: vec![(0, 0, 0)] }, shape));
    }
    let rank = ba.len().max(bb.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(ba), pad(bb));
    let mut batch = Vec::with_capacity(rank);
    for (&x, &y) in pa.iter().zip(&pb) {
        batch.push(match (x, y) {
            _ if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(err()),
        });
    }
    let (sa, sb, sc) = (strides(&pa), strides(&pb), strides(&batch));
    let count = numel(&batch);
    let mut offsets = Vec::with_capacity(count);
    for i in 0..count {
        let (mut oa, mut ob) = (0, 0);
        for ax in 0..rank {
            let idx = (i / sc[ax]) % batch[ax];
            if pa[ax] != 1 {
                oa += idx * sa[ax];
            }
            if pb[ax] != 1 {
                ob += idx * sb[ax];
            }
        }
        offsets.push((oa * m * k, ob * k * n, i * m * n));
    }
    let mut shape = batch;
    shape.extend([m, n]);
    Ok((MatmulPlan { m, k, n, offsets }, shape))
}

impl Graph {
    /// Batched matrix product `[.., m, k] · [.., k, n]`; batch axes broadcast,
    /// and a rank-2 right operand is shared across the whole batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (plan, shape) = plan(ta.shape(), tb.shape())?;
        let mut out = vec![0.0; numel(&shape)];
        let MatmulPlan { m, k, n, .. } = plan;
        for &(oa, ob, oc) in &plan.offsets {
            gemm(
                m,
                k,
                n,
                (&ta.data()[oa..], k, 1),
                (&tb.data()[ob..], n, 1),
                &mut out[oc..],
                n,
                1,
                0.0,
            );
        }
        let out = Tensor::new(shape, out)?;
        self.push(out, Op::Matmul { a, b, plan })
    }

    /// `x·w + bias` over the last axis.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }
}

pub(crate) fn matmul_backward(
    plan: &MatmulPlan,
    a: Var,
    b: Var,
    ta: &Tensor,
    tb: &Tensor,
    gout: &[f64],
    sink: &mut GradSink<'_>,
) {
    let MatmulPlan { m, k, n, .. } = *plan;
    if sink.needs(a) {
        sink.with(a, |ga| {
            for &(oa, ob, oc) in &plan.offsets {
                // dA = dY · Bᵀ
                gemm(m, n, k, (&gout[oc..], n, 1), (&tb.data()[ob..], 1, n), &mut ga[oa..], k, 1, 1.0);
            }
        });
    }
    if sink.needs(b) {
        sink.with(b, |gb| {
            for &(oa, ob, oc) in &plan.offsets {
                // dB = Aᵀ · dY
                gemm(k, m, n, (&ta.data()[oa..], 1, k), (&gout[oc..], n, 1), &mut gb[ob..], n, 1, 1.0);
            }
        });
    }
}
