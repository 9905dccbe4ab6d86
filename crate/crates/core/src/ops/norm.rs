use crate::error::{shape_err, Error, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl Graph {
    /// Normalizes over the last axis, then applies `gamma ⊙ x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("layer_norm eps must be positive, got {eps}")));
        }
        let shape = self.shape(x).to_vec();
        let d = *shape.last().expect("rank >= 1");
        if self.value(gamma).numel() != d || self.value(beta).numel() != d {
            return Err(shape_err(
                "layer_norm",
                format!("gamma {:?} / beta {:?} for feature size {d}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let (xd, gd, bd) = (self.value(x).data(), self.value(gamma).data(), self.value(beta).data());
        let rows = xd.len() / d;
        let mut xhat = vec![0.0; xd.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mean) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = gd[j] * xh + bd[j];
            }
        }
        let out = Tensor::new(shape, out)?;
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd })
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward(
    x: Var,
    gamma: Var,
    beta: Var,
    tgamma: &Tensor,
    xhat: &[f64],
    rstd: &[f64],
    gout: &[f64],
    sink: &mut GradSink<'_>,
) {
    let d = tgamma.numel();
    let gd = tgamma.data();
    sink.with(gamma, |gg| {
        for (xr, gr) in xhat.chunks(d).zip(gout.chunks(d)) {
            for j in 0..d {
                gg[j] += gr[j] * xr[j];
            }
        }
    });
    sink.with(beta, |gb| {
        for gr in gout.chunks(d) {
            gb.iter_mut().zip(gr).for_each(|(b, g)| *b += g);
        }
    });
    if sink.needs(x) {
        let mut gx = vec![0.0; xhat.len()];
        let inv_d = 1.0 / d as f64;
        for (r, (xr, gr)) in xhat.chunks(d).zip(gout.chunks(d)).enumerate() {
            let mut mean_dxh = 0.0;
            let mut mean_dxh_xh = 0.0;
            for j in 0..d {
                let dxh = gr[j] * gd[j];
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xr[j];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            for j in 0..d {
                let dxh = gr[j] * gd[j];
                gx[r * d + j] = rstd[r] * (dxh - mean_dxh - xr[j] * mean_dxh_xh);
            }
        }
        sink.add(x, gx);
    }
}
