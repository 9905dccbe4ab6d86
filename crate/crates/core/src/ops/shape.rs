use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::{numel, strides, Tensor};

/// Maps every flat index of the permuted tensor to the flat index of its source.
fn permute_index(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mapped: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
    let total = numel(shape);
    let mut map = Vec::with_capacity(total);
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..total {
        map.push(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += mapped[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= mapped[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    map
}

pub(crate) fn permute_backward(in_shape: &[usize], axes: &[usize], gout: &[f64]) -> Vec<f64> {
    let map = permute_index(in_shape, axes);
    let mut g = vec![0.0; gout.len()];
    for (o, &s) in map.iter().enumerate() {
        g[s] = gout[o];
    }
    g
}

/// Splits into (outer, axis extent, inner) block sizes around `axis`.
fn blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn concat_backward(shapes: &[&[usize]], axis: usize, gout: &[f64]) -> Vec<Vec<f64>> {
    let total: usize = shapes.iter().map(|s| s[axis]).sum();
    let (outer, _, inner) = blocks(shapes[0], axis);
    let mut start = 0;
    shapes
        .iter()
        .map(|s| {
            let len = s[axis];
            let mut g = Vec::with_capacity(numel(s));
            for o in 0..outer {
                let base = (o * total + start) * inner;
                g.extend_from_slice(&gout[base..base + len * inner]);
            }
            start += len;
            g
        })
        .collect()
}

pub(crate) fn slice_backward(in_shape: &[usize], axis: usize, start: usize, out_shape: &[usize], gout: &[f64]) -> Vec<f64> {
    let (outer, extent, inner) = blocks(in_shape, axis);
    let len = out_shape[axis];
    let mut g = vec![0.0; numel(in_shape)];
    for o in 0..outer {
        let dst = (o * extent + start) * inner;
        g[dst..dst + len * inner].copy_from_slice(&gout[o * len * inner..(o + 1) * len * inner]);
    }
    g
}

pub(crate) fn reduce_backward(in_shape: &[usize], axis: Option<usize>, mean: bool, gout: &[f64]) -> Vec<f64> {
    match axis {
        None => {
            let n = numel(in_shape);
            let v = if mean { gout[0] / n as f64 } else { gout[0] };
            vec![v; n]
        }
        Some(axis) => {
            let (outer, extent, inner) = blocks(in_shape, axis);
            let f = if mean { 1.0 / extent as f64 } else { 1.0 };
            let mut g = vec![0.0; numel(in_shape)];
            for o in 0..outer {
                for e in 0..extent {
                    for i in 0..inner {
                        g[(o * extent + e) * inner + i] = gout[o * inner + i] * f;
                    }
                }
            }
            g
        }
    }
}

/// Source taps `(i0, i1, w1)` for half-pixel-centred bilinear resampling by `scale`.
fn bilinear_taps(extent: usize, scale: usize) -> Vec<(usize, usize, f64)> {
    (0..extent * scale)
        .map(|o| {
            let s = ((o as f64 + 0.5) / scale as f64 - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(extent - 1);
            let i1 = (i0 + 1).min(extent - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

pub(crate) fn upsample_backward(in_shape: &[usize], scale: usize, gout: &[f64]) -> Vec<f64> {
    let (h, w) = (in_shape[2], in_shape[3]);
    let (ty, tx) = (bilinear_taps(h, scale), bilinear_taps(w, scale));
    let (oh, ow) = (h * scale, w * scale);
    let mut g = vec![0.0; numel(in_shape)];
    for (p, gp) in g.chunks_mut(h * w).enumerate() {
        let go = &gout[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let v = go[oy * ow + ox];
                gp[y0 * w + x0] += v * (1.0 - wy) * (1.0 - wx);
                gp[y0 * w + x1] += v * (1.0 - wy) * wx;
                gp[y1 * w + x0] += v * wy * (1.0 - wx);
                gp[y1 * w + x1] += v * wy * wx;
            }
        }
    }
    g
}

impl Graph {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let src = self.value(x);
        if numel(shape) != src.numel() {
            return Err(shape_err(
                "reshape",
                format!("{:?} ({} elements) cannot become {shape:?}", src.shape(), src.numel()),
            ));
        }
        let out = Tensor::new(shape.to_vec(), src.data().to_vec())?;
        self.push(out, Op::Reshape { x })
    }

    /// Reorders axes so output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(shape_err("permute", format!("{axes:?} is not a permutation of the axes of {shape:?}")));
        }
        let map = permute_index(&shape, axes);
        let d = self.value(x).data();
        let data = map.iter().map(|&s| d[s]).collect();
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let out = Tensor::new(out_shape, data)?;
        self.push(out, Op::Permute { x, axes: axes.to_vec() })
    }

    pub fn transpose(&mut self, x: Var, a: usize, b: usize) -> Result<Var> {
        let mut axes: Vec<usize> = (0..self.shape(x).len()).collect();
        if a >= axes.len() || b >= axes.len() {
            return Err(shape_err("transpose", format!("axes ({a}, {b}) out of range for {:?}", self.shape(x))));
        }
        axes.swap(a, b);
        self.permute(x, &axes)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", format!("{s:?} incompatible with {base:?} along axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = blocks(&base, axis);
        let mut out_shape = base;
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let len = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
            }
        }
        let out = Tensor::new(out_shape, data)?;
        self.push(out, Op::Concat { inputs: inputs.to_vec(), axis })
    }

    /// Takes `len` entries along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(shape_err("slice", format!("[{start}, {}) along axis {axis} of {shape:?}", start + len)));
        }
        let (outer, extent, inner) = blocks(&shape, axis);
        let d = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            data.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, data)?;
        self.push(out, Op::Slice { x, axis, start })
    }

    /// Splits along `axis` into pieces of the given sizes.
    pub fn split(&mut self, x: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in sizes {
            out.push(self.slice(x, axis, start, s)?);
            start += s;
        }
        if start != self.shape(x).get(axis).copied().unwrap_or(0) {
            return Err(shape_err("split", format!("sizes {sizes:?} do not cover axis {axis} of {:?}", self.shape(x))));
        }
        Ok(out)
    }

    fn reduce(&mut self, x: Var, axis: Option<usize>, mean: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = self.value(x).data();
        let out = match axis {
            None => {
                let s: f64 = d.iter().sum();
                Tensor::scalar(if mean { s / d.len() as f64 } else { s })
            }
            Some(axis) => {
                if axis >= shape.len() {
                    return Err(shape_err("reduce", format!("axis {axis} out of range for {shape:?}")));
                }
                let (outer, extent, inner) = blocks(&shape, axis);
                let mut data = vec![0.0; outer * inner];
                for o in 0..outer {
                    for e in 0..extent {
                        let row = &d[(o * extent + e) * inner..][..inner];
                        data[o * inner..(o + 1) * inner].iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                }
                if mean {
                    data.iter_mut().for_each(|v| *v /= extent as f64);
                }
                let mut out_shape = shape;
                out_shape[axis] = 1;
                Tensor::new(out_shape, data)?
            }
        };
        self.push(out, Op::Reduce { x, axis, mean })
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, None, false)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, None, true)
    }

    /// Sum along `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, Some(axis), false)
    }

    /// Mean along `axis`, keeping it with extent 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, Some(axis), true)
    }

    /// Bilinear upsampling of `[b, c, h, w]` by an integer factor
    /// (half-pixel centres, edge clamped).
    pub fn upsample_bilinear(&mut self, x: Var, scale: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 || scale == 0 {
            return Err(shape_err("upsample_bilinear", format!("need [b, c, h, w] and scale >= 1, got {shape:?} x{scale}")));
        }
        let (h, w) = (shape[2], shape[3]);
        let (ty, tx) = (bilinear_taps(h, scale), bilinear_taps(w, scale));
        let (oh, ow) = (h * scale, w * scale);
        let d = self.value(x).data();
        let mut data = vec![0.0; shape[0] * shape[1] * oh * ow];
        for (p, dst) in data.chunks_mut(oh * ow).enumerate() {
            let s = &d[p * h * w..(p + 1) * h * w];
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let top = s[y0 * w + x0] * (1.0 - wx) + s[y0 * w + x1] * wx;
                    let bot = s[y1 * w + x0] * (1.0 - wx) + s[y1 * w + x1] * wx;
                    dst[oy * ow + ox] = top * (1.0 - wy) + bot * wy;
                }
            }
        }
        let out = Tensor::new(vec![shape[0], shape[1], oh, ow], data)?;
        self.push(out, Op::Upsample { x, scale })
    }

    /// Gathers rows of `table: [vocab, d]`; the result has shape `ids_shape ++ [d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], ids_shape: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 || numel(ids_shape) != ids.len() {
            return Err(shape_err("embedding", format!("table {ts:?}, {} ids for shape {ids_shape:?}", ids.len())));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= ts[0]) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of {}", ts[0])));
        }
        let d = ts[1];
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let mut shape = ids_shape.to_vec();
        shape.push(d);
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::Embedding { table, ids: ids.to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_roundtrip_is_identity() {
        let mut g = Graph::new();
        let t = Tensor::from_fn([2, 8, 4, 4], |i| i as f64).unwrap();
        let x = g.constant(t.clone());
        let a = g.reshape(x, &[2, 8, 16]).unwrap();
        let b = g.transpose(a, 1, 2).unwrap();
        assert_eq!(g.shape(b), &[2, 16, 8]);
        let c = g.transpose(b, 1, 2).unwrap();
        let d = g.reshape(c, &[2, 8, 4, 4]).unwrap();
        assert_eq!(g.value(d), &t);
    }

    #[test]
    fn concat_then_split_restores_inputs() {
        let mut g = Graph::new();
        let a = Tensor::from_fn([2, 3], |i| i as f64 + 0.1).unwrap();
        let b = Tensor::from_fn([2, 5], |i| -(i as f64) * 0.7).unwrap();
        let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
        let c = g.concat(&[va, vb], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 8]);
        let parts = g.split(c, 1, &[3, 5]).unwrap();
        assert_eq!(g.value(parts[0]), &a);
        assert_eq!(g.value(parts[1]), &b);
    }

    #[test]
    fn upsampling_a_constant_is_constant() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full([1, 2, 3, 5], 0.37).unwrap());
        let y = g.upsample_bilinear(x, 4).unwrap();
        assert_eq!(g.shape(y), &[1, 2, 12, 20]);
        assert!(g.value(y).data().iter().all(|&v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn reshape_count_mismatch_errors() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros([2, 3]).unwrap());
        assert!(g.reshape(x, &[4, 2]).is_err());
    }

    #[test]
    fn mean_axis_keeps_dim() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn([2, 3, 2], |i| i as f64).unwrap());
        let m = g.mean_axis(x, 1).unwrap();
        assert_eq!(g.shape(m), &[2, 1, 2]);
        assert_eq!(g.value(m).data(), &[2.0, 3.0, 8.0, 9.0]);
    }
}
