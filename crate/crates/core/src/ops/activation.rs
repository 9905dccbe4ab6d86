use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Silu,
    /// `ELU(x) + 1`, strictly positive.
    EluPlusOne,
    Sigmoid,
    /// Tanh approximation of GELU.
    Gelu,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Relu,
        Activation::Silu,
        Activation::EluPlusOne,
        Activation::Sigmoid,
        Activation::Gelu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Silu => "silu",
            Activation::EluPlusOne => "elu_plus_one",
            Activation::Sigmoid => "sigmoid",
            Activation::Gelu => "gelu",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Silu => x * sigmoid(x),
            Activation::EluPlusOne => {
                if x > 0.0 {
                    x + 1.0
                } else {
                    x.exp().max(f64::MIN_POSITIVE)
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Gelu => 0.5 * x * (1.0 + gelu_inner(x).tanh()),
        }
    }

    /// Derivative at `x`, given `y = apply(x)`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::EluPlusOne => {
                if x > 0.0 {
                    1.0
                } else {
                    y
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Gelu => {
                let t = gelu_inner(x).tanh();
                let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown activation kind `{s}`")))
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu_inner(x: f64) -> f64 {
    debug_assert!((GELU_C - (2.0 / PI).sqrt()).abs() < 1e-15);
    GELU_C * (x + 0.044715 * x * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn backward(kind: Activation, x: &[f64], y: &[f64], gout: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(y)
        .zip(gout)
        .map(|((&x, &y), &g)| g * kind.derivative(x, y))
        .collect()
}

pub(crate) fn softplus_backward(x: &[f64], gout: &[f64]) -> Vec<f64> {
    x.iter().zip(gout).map(|(&x, &g)| g * sigmoid(x)).collect()
}

impl Graph {
    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| kind.apply(v)).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        self.push(out, Op::Activation { x, kind })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Silu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| softplus(v)).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        self.push(out, Op::Softplus { x })
    }
}
