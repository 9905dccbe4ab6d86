use crate::error::{shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::ops::linalg::gemm;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }
}

fn geometry(op: &'static str, x: &[usize], w: &[usize], stride: usize, pad: usize, depthwise: bool) -> Result<ConvGeom> {
    if x.len() != 4 || w.len() != 4 {
        return Err(shape_err(op, format!("expected rank-4 input and weight, got {x:?} and {w:?}")));
    }
    let (batch, cin, h, wd) = (x[0], x[1], x[2], x[3]);
    let (cout, wcin, kh, kw) = (w[0], w[1], w[2], w[3]);
    if depthwise {
        if cout != cin || wcin != 1 {
            return Err(shape_err(op, format!("depthwise weight {w:?} does not match {cin} input channels")));
        }
    } else if wcin != cin {
        return Err(shape_err(op, format!("weight {w:?} expects {wcin} input channels, input {x:?} has {cin}")));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(shape_err(op, format!("kernel extents must be odd, got {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(shape_err(op, "stride must be positive"));
    }
    if kh > h + 2 * pad || kw > wd + 2 * pad {
        return Err(shape_err(
            op,
            format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * pad, wd + 2 * pad),
        ));
    }
    Ok(ConvGeom {
        batch,
        cin,
        h,
        w: wd,
        cout,
        kh,
        kw,
        stride,
        pad,
        oh: (h + 2 * pad - kh) / stride + 1,
        ow: (wd + 2 * pad - kw) / stride + 1,
    })
}

/// Input coordinate for output coordinate `o` and kernel tap `t`, if inside the image.
#[inline]
fn src(o: usize, t: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let i = (o * stride + t).checked_sub(pad)?;
    (i < extent).then_some(i)
}

fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let p = g.p();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &mut cols[((ci * g.kh + ky) * g.kw + kx) * p..][..p];
                for oy in 0..g.oh {
                    let dst = &mut row[oy * g.ow..(oy + 1) * g.ow];
                    match src(oy, ky, g.stride, g.pad, g.h) {
                        None => dst.fill(0.0),
                        Some(iy) => {
                            let line = &plane[iy * g.w..(iy + 1) * g.w];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = src(ox, kx, g.stride, g.pad, g.w).map_or(0.0, |ix| line[ix]);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let p = g.p();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &cols[((ci * g.kh + ky) * g.kw + kx) * p..][..p];
                for oy in 0..g.oh {
                    let Some(iy) = src(oy, ky, g.stride, g.pad, g.h) else {
                        continue;
                    };
                    for ox in 0..g.ow {
                        if let Some(ix) = src(ox, kx, g.stride, g.pad, g.w) {
                            plane[iy * g.w + ix] += row[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    /// 2-D cross-correlation of `x: [b, c_in, h, w]` with `weight: [c_out, c_in, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let geom = geometry("conv2d", self.shape(x), self.shape(weight), stride, padding, false)?;
        if let Some(b) = bias {
            if self.value(b).numel() != geom.cout {
                return Err(shape_err("conv2d", format!("bias {:?} for {} output channels", self.shape(b), geom.cout)));
            }
        }
        let (k, p) = (geom.k(), geom.p());
        let xin = self.value(x).data();
        let wd = self.value(weight).data();
        let mut cols = vec![0.0; geom.batch * k * p];
        let mut out = vec![0.0; geom.batch * geom.cout * p];
        let in_plane = geom.cin * geom.h * geom.w;
        for bi in 0..geom.batch {
            let c = &mut cols[bi * k * p..(bi + 1) * k * p];
            im2col(&geom, &xin[bi * in_plane..(bi + 1) * in_plane], c);
            gemm(geom.cout, k, p, (wd, k, 1), (c, p, 1), &mut out[bi * geom.cout * p..], p, 1, 0.0);
        }
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for (i, chunk) in out.chunks_mut(p).enumerate() {
                let v = bd[i % geom.cout];
                chunk.iter_mut().for_each(|o| *o += v);
            }
        }
        let out = Tensor::new(vec![geom.batch, geom.cout, geom.oh, geom.ow], out)?;
        self.push(out, Op::Conv2d { x, w: weight, bias, geom, cols })
    }

    /// Per-channel "same" convolution with `weight: [c, 1, k, k]`, stride 1.
    pub fn depthwise_conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let ws = self.shape(weight);
        let pad = ws.get(2).copied().unwrap_or(1) / 2;
        let geom = geometry("depthwise_conv2d", self.shape(x), ws, 1, pad, true)?;
        if geom.kh != geom.kw {
            return Err(shape_err("depthwise_conv2d", format!("kernel must be square, got {ws:?}")));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != geom.cin {
                return Err(shape_err("depthwise_conv2d", format!("bias {:?} for {} channels", self.shape(b), geom.cin)));
            }
        }
        let xin = self.value(x).data();
        let wd = self.value(weight).data();
        let bias_d = bias.map(|b| self.value(b).data());
        let (h, w, k) = (geom.h, geom.w, geom.kh);
        let mut out = vec![0.0; xin.len()];
        for (plane_idx, (dst, srcp)) in out.chunks_mut(h * w).zip(xin.chunks(h * w)).enumerate() {
            let c = plane_idx % geom.cin;
            let kern = &wd[c * k * k..(c + 1) * k * k];
            let b0 = bias_d.map_or(0.0, |b| b[c]);
            for oy in 0..h {
                for ox in 0..w {
                    let mut s = b0;
                    for ky in 0..k {
                        let Some(iy) = src(oy, ky, 1, pad, h) else { continue };
                        for kx in 0..k {
                            if let Some(ix) = src(ox, kx, 1, pad, w) {
                                s += kern[ky * k + kx] * srcp[iy * w + ix];
                            }
                        }
                    }
                    dst[oy * w + ox] = s;
                }
            }
        }
        let out = Tensor::new(self.shape(x).to_vec(), out)?;
        self.push(out, Op::Depthwise { x, w: weight, bias, geom })
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    geom: &ConvGeom,
    x: Var,
    w: Var,
    bias: Option<Var>,
    tw: &Tensor,
    cols: &[f64],
    gout: &[f64],
    sink: &mut GradSink<'_>,
) {
    let (k, p, cout) = (geom.k(), geom.p(), geom.cout);
    if let Some(b) = bias {
        sink.with(b, |gb| {
            for (i, chunk) in gout.chunks(p).enumerate() {
                gb[i % cout] += chunk.iter().sum::<f64>();
            }
        });
    }
    sink.with(w, |gw| {
        for bi in 0..geom.batch {
            let dy = &gout[bi * cout * p..(bi + 1) * cout * p];
            let c = &cols[bi * k * p..(bi + 1) * k * p];
            gemm(cout, p, k, (dy, p, 1), (c, 1, p), gw, k, 1, 1.0);
        }
    });
    if sink.needs(x) {
        let in_plane = geom.cin * geom.h * geom.w;
        let mut dcols = vec![0.0; k * p];
        sink.with(x, |gx| {
            for bi in 0..geom.batch {
                let dy = &gout[bi * cout * p..(bi + 1) * cout * p];
                gemm(k, cout, p, (tw.data(), 1, k), (dy, p, 1), &mut dcols, p, 1, 0.0);
                col2im(geom, &dcols, &mut gx[bi * in_plane..(bi + 1) * in_plane]);
            }
        });
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn depthwise_backward(
    geom: &ConvGeom,
    x: Var,
    w: Var,
    bias: Option<Var>,
    tx: &Tensor,
    tw: &Tensor,
    gout: &[f64],
    sink: &mut GradSink<'_>,
) {
    let (h, wd, k, pad, c) = (geom.h, geom.w, geom.kh, geom.pad, geom.cin);
    let plane = h * wd;
    if let Some(b) = bias {
        sink.with(b, |gb| {
            for (i, chunk) in gout.chunks(plane).enumerate() {
                gb[i % c] += chunk.iter().sum::<f64>();
            }
        });
    }
    let need_x = sink.needs(x);
    let need_w = sink.needs(w);
    let mut gx = vec![0.0; if need_x { tx.numel() } else { 0 }];
    let mut gw = vec![0.0; if need_w { tw.numel() } else { 0 }];
    let (xd, wdat) = (tx.data(), tw.data());
    for pi in 0..geom.batch * c {
        let ch = pi % c;
        let go = &gout[pi * plane..(pi + 1) * plane];
        let xs = &xd[pi * plane..(pi + 1) * plane];
        for oy in 0..h {
            for ox in 0..wd {
                let g = go[oy * wd + ox];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..k {
                    let Some(iy) = src(oy, ky, 1, pad, h) else { continue };
                    for kx in 0..k {
                        let Some(ix) = src(ox, kx, 1, pad, wd) else { continue };
                        if need_x {
                            gx[pi * plane + iy * wd + ix] += wdat[(ch * k + ky) * k + kx] * g;
                        }
                        if need_w {
                            gw[(ch * k + ky) * k + kx] += xs[iy * wd + ix] * g;
                        }
                    }
                }
            }
        }
    }
    if need_x {
        sink.add(x, gx);
    }
    if need_w {
        sink.add(w, gw);
    }
}
