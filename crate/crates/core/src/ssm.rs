//! Diagonal linear state-space model with zero-order-hold discretization.
//!
//! Per channel the continuous system `h' = a·h + b·x, y = c·h + d_res·x` is
//! discretized with step `delta` into
//! `h_k = ā·h_{k-1} + b̄·x_k`, `y_k = c·h_k + d_res·x_k`, starting from `h_0 = 0`.

use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Op, Var};
use crate::param::{Init, ParamSource, ParamSpec};
use crate::tensor::Tensor;

/// Below this magnitude of `a` the input gain uses its `a -> 0` limit `delta·b`.
pub const A_LIMIT_THRESHOLD: f64 = 1e-8;

/// Initial step size.
pub const DELTA_INIT: f64 = 0.1;

/// Per-channel parameters of a diagonal SSM.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d_res: Vec<f64>,
    pub delta: Vec<f64>,
}

impl SsmParams {
    /// Channel count.
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.a.len();
        let fields = [("a", &self.a), ("b", &self.b), ("c", &self.c), ("d_res", &self.d_res), ("delta", &self.delta)];
        for (name, v) in fields {
            if v.len() != d || d == 0 {
                return Err(shape_err("ssm", format!("`{name}` has {} channels, `a` has {d}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("ssm parameter `{name}` is not finite")));
            }
        }
        if let Some(bad) = self.delta.iter().find(|&&x| x <= 0.0) {
            return Err(Error::InvalidArgument(format!("ssm step delta must be > 0, got {bad}")));
        }
        Ok(())
    }
}

/// Hidden state of a running scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanState {
    pub h: Vec<f64>,
    pub position: usize,
}

impl ScanState {
    pub fn new(d: usize) -> Self {
        Self { h: vec![0.0; d], position: 0 }
    }

    /// Advances by one token and returns its output.
    pub fn step(&mut self, a_bar: &[f64], b_bar: &[f64], c: &[f64], d_res: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            self.h[j] = a_bar[j] * self.h[j] + b_bar[j] * x[j];
            y.push(c[j] * self.h[j] + d_res[j] * x[j]);
        }
        self.position += 1;
        y
    }
}

fn discretize_channel(a: f64, b: f64, delta: f64) -> (f64, f64) {
    let z = delta * a;
    let a_bar = z.exp();
    let b_bar = if a.abs() > A_LIMIT_THRESHOLD { z.exp_m1() / a * b } else { delta * b };
    (a_bar, b_bar)
}

/// Zero-order-hold discretization: `ā = exp(delta·a)`, `b̄ = (exp(delta·a) - 1)/a · b`.
pub fn zoh_discretize(params: &SsmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let (a_bar, b_bar) = (0..params.dim())
        .map(|j| discretize_channel(params.a[j], params.b[j], params.delta[j]))
        .unzip();
    Ok((a_bar, b_bar))
}

fn check_input(x: &Tensor, d: usize) -> Result<(usize, usize)> {
    match *x.shape() {
        [b, l, dx] if dx == d => Ok((b, l)),
        _ => Err(shape_err("ssm_scan", format!("expected [batch, len, {d}], got {:?}", x.shape()))),
    }
}

/// Runs the recurrence over `[batch, len, d]` data, returning outputs and every hidden state.
#[allow(clippy::too_many_arguments)]
fn scan_kernel(
    x: &[f64],
    batch: usize,
    len: usize,
    a_bar: &[f64],
    b_bar: &[f64],
    c: &[f64],
    d_res: &[f64],
    reverse: bool,
) -> (Vec<f64>, Vec<f64>) {
    let d = a_bar.len();
    let mut y = vec![0.0; x.len()];
    let mut states = vec![0.0; x.len()];
    for bi in 0..batch {
        let base = bi * len * d;
        let mut h = vec![0.0; d];
        for step in 0..len {
            let k = if reverse { len - 1 - step } else { step };
            let off = base + k * d;
            for j in 0..d {
                let xv = x[off + j];
                h[j] = a_bar[j] * h[j] + b_bar[j] * xv;
                states[off + j] = h[j];
                y[off + j] = c[j] * h[j] + d_res[j] * xv;
            }
        }
    }
    (y, states)
}

/// Causal scan over the token axis of `x: [batch, len, d]`.
pub fn ssm_scan(params: &SsmParams, x: &Tensor) -> Result<Tensor> {
    scan_dir(params, x, false)
}

fn scan_dir(params: &SsmParams, x: &Tensor, reverse: bool) -> Result<Tensor> {
    let (a_bar, b_bar) = zoh_discretize(params)?;
    let (batch, len) = check_input(x, params.dim())?;
    let (y, _) = scan_kernel(x.data(), batch, len, &a_bar, &b_bar, &params.c, &params.d_res, reverse);
    Tensor::new(x.shape().to_vec(), y)
}

/// Forward scan plus a scan over the reversed token order, summed.
pub fn ssm_apply_bidirectional(fwd: &SsmParams, bwd: &SsmParams, x: &Tensor) -> Result<Tensor> {
    if fwd.dim() != bwd.dim() {
        return Err(shape_err("ssm_bidirectional", format!("{} vs {} channels", fwd.dim(), bwd.dim())));
    }
    let f = scan_dir(fwd, x, false)?;
    let b = scan_dir(bwd, x, true)?;
    let sum = f.data().iter().zip(b.data()).map(|(p, q)| p + q).collect();
    Tensor::new(x.shape().to_vec(), sum)
}

/// Tape handles for one direction's parameters. `delta` is the positive step
/// itself; models typically obtain it as `softplus(raw)`.
#[derive(Clone, Copy, Debug)]
pub struct SsmVars {
    pub a: Var,
    pub b: Var,
    pub c: Var,
    pub d_res: Var,
    pub delta: Var,
}

/// Raw (pre-softplus) step value whose softplus equals [`DELTA_INIT`].
pub fn delta_raw_init() -> f64 {
    DELTA_INIT.exp_m1().ln()
}

/// Declares one direction's parameters; the step is stored as `delta_raw`.
pub fn declare<T>(d: usize, src: &mut dyn ParamSource<T>) -> Result<[T; 5]> {
    Ok([
        src.get(ParamSpec::new("a", [d], Init::NegLogUniform))?,
        src.get(ParamSpec::new("b", [d], Init::Ones))?,
        src.get(ParamSpec::new("c", [d], Init::Ones))?,
        src.get(ParamSpec::new("d_res", [d], Init::Ones))?,
        src.get(ParamSpec::new("delta_raw", [d], Init::Const(delta_raw_init())))?,
    ])
}

impl Graph {
    /// Turns declared `[a, b, c, d_res, delta_raw]` handles into [`SsmVars`].
    pub fn ssm_vars(&mut self, raw: [Var; 5]) -> Result<SsmVars> {
        let [a, b, c, d_res, delta_raw] = raw;
        let delta = self.softplus(delta_raw)?;
        Ok(SsmVars { a, b, c, d_res, delta })
    }

    /// Differentiable scan of `x: [batch, len, d]`; `reverse` walks tokens from last to first.
    pub fn ssm_scan(&mut self, x: Var, p: SsmVars, reverse: bool) -> Result<Var> {
        let params = SsmParams {
            a: self.value(p.a).data().to_vec(),
            b: self.value(p.b).data().to_vec(),
            c: self.value(p.c).data().to_vec(),
            d_res: self.value(p.d_res).data().to_vec(),
            delta: self.value(p.delta).data().to_vec(),
        };
        let (a_bar, b_bar) = zoh_discretize(&params)?;
        let xt = self.value(x);
        let (batch, len) = check_input(xt, params.dim())?;
        let (y, states) = scan_kernel(xt.data(), batch, len, &a_bar, &b_bar, &params.c, &params.d_res, reverse);
        let out = Tensor::new(xt.shape().to_vec(), y)?;
        let params = [p.a, p.b, p.c, p.d_res, p.delta];
        self.push(out, Op::SsmScan { x, params, reverse, states })
    }

    /// Sum of a forward and a reversed scan.
    pub fn ssm_bidirectional(&mut self, x: Var, fwd: SsmVars, bwd: SsmVars) -> Result<Var> {
        let f = self.ssm_scan(x, fwd, false)?;
        let b = self.ssm_scan(x, bwd, true)?;
        self.add(f, b)
    }
}

/// `d/dz [expm1(z)/z]`, with a series near zero where the closed form cancels.
fn expm1_over_z_deriv(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0
    } else {
        (z * z.exp() - z.exp_m1()) / (z * z)
    }
}

/// Gradients of the scan for `[x, a, b, c, d_res, delta]`.
pub(crate) fn scan_backward(x: &Tensor, params: &[&Tensor], reverse: bool, states: &[f64], gout: &[f64]) -> Result<Vec<Vec<f64>>> {
    let [a, b, c, d_res, delta] = params else {
        return Err(shape_err("ssm_scan", "expected five parameter tensors"));
    };
    let (a, b, c, d_res, delta) = (a.data(), b.data(), c.data(), d_res.data(), delta.data());
    let d = a.len();
    let (batch, len) = check_input(x, d)?;
    let xd = x.data();
    let mut a_bar = vec![0.0; d];
    let mut b_bar = vec![0.0; d];
    for j in 0..d {
        (a_bar[j], b_bar[j]) = discretize_channel(a[j], b[j], delta[j]);
    }

    let mut gx = vec![0.0; xd.len()];
    let mut g_abar = vec![0.0; d];
    let mut g_bbar = vec![0.0; d];
    let mut gc = vec![0.0; d];
    let mut gd = vec![0.0; d];
    for bi in 0..batch {
        let base = bi * len * d;
        let mut carry = vec![0.0; d];
        // Walk the scan order backwards.
        for step in (0..len).rev() {
            let k = if reverse { len - 1 - step } else { step };
            let prev = match (reverse, step) {
                (_, 0) => None,
                (false, _) => Some(k - 1),
                (true, _) => Some(k + 1),
            };
            let off = base + k * d;
            for j in 0..d {
                let gy = gout[off + j];
                let h = states[off + j];
                let xv = xd[off + j];
                gc[j] += gy * h;
                gd[j] += gy * xv;
                let gh = c[j] * gy + carry[j];
                let h_prev = prev.map_or(0.0, |p| states[base + p * d + j]);
                g_abar[j] += gh * h_prev;
                g_bbar[j] += gh * xv;
                gx[off + j] = gh * b_bar[j] + d_res[j] * gy;
                carry[j] = a_bar[j] * gh;
            }
        }
    }

    let mut ga = vec![0.0; d];
    let mut gb = vec![0.0; d];
    let mut gdelta = vec![0.0; d];
    for j in 0..d {
        let (aj, dj) = (a[j], delta[j]);
        let z = dj * aj;
        // b̄ = b·phi with phi = delta·expm1(z)/z; dphi/ddelta = exp(z), dphi/da = delta²·E'(z).
        let phi = if aj.abs() > A_LIMIT_THRESHOLD { z.exp_m1() / aj } else { dj };
        ga[j] = g_abar[j] * dj * a_bar[j] + g_bbar[j] * b[j] * dj * dj * expm1_over_z_deriv(z);
        gb[j] = g_bbar[j] * phi;
        gdelta[j] = g_abar[j] * aj * a_bar[j] + g_bbar[j] * b[j] * a_bar[j];
    }
    Ok(vec![gx, ga, gb, gc, gd, gdelta])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_params(d: usize, a: f64, b: f64, c: f64, d_res: f64, delta: f64) -> SsmParams {
        SsmParams {
            a: vec![a; d],
            b: vec![b; d],
            c: vec![c; d],
            d_res: vec![d_res; d],
            delta: vec![delta; d],
        }
    }

    #[test]
    fn zero_a_uses_limit() {
        let (ab, bb) = zoh_discretize(&uniform_params(1, 0.0, 2.0, 1.0, 1.0, 0.1)).unwrap();
        assert_eq!(ab[0], 1.0);
        assert!((bb[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_delta_rejected() {
        let p = uniform_params(2, -1.0, 1.0, 1.0, 1.0, 0.0);
        assert!(matches!(zoh_discretize(&p), Err(Error::InvalidArgument(_))));
        let mut p = uniform_params(2, -1.0, 1.0, 1.0, 1.0, 0.1);
        p.b[1] = f64::NAN;
        assert!(matches!(zoh_discretize(&p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn pure_residual_is_identity() {
        let p = uniform_params(3, -0.7, 1.3, 0.0, 1.0, 0.4);
        let x = Tensor::from_fn([2, 5, 3], |i| (i as f64).sin()).unwrap();
        assert_eq!(ssm_scan(&p, &x).unwrap(), x);
    }

    #[test]
    fn state_step_matches_scan() {
        let p = uniform_params(2, -0.3, 0.8, 1.1, 0.2, 0.5);
        let x = Tensor::from_fn([1, 4, 2], |i| i as f64 - 1.5).unwrap();
        let y = ssm_scan(&p, &x).unwrap();
        let (ab, bb) = zoh_discretize(&p).unwrap();
        let mut st = ScanState::new(2);
        for k in 0..4 {
            let yk = st.step(&ab, &bb, &p.c, &p.d_res, &x.data()[k * 2..k * 2 + 2]);
            assert_eq!(&y.data()[k * 2..k * 2 + 2], yk.as_slice());
        }
        assert_eq!(st.position, 4);
    }

    #[test]
    fn series_derivative_is_continuous() {
        let lo = expm1_over_z_deriv(0.999e-3);
        let hi = expm1_over_z_deriv(1.001e-3);
        assert!((lo - hi).abs() < 1e-6);
        assert!((expm1_over_z_deriv(0.0) - 0.5).abs() < 1e-15);
    }
}
