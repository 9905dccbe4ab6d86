//! Parameter declarations shared by every layer.
//!
//! Layers describe their tensors as [`ParamSpec`]s and let the caller decide
//! what to produce for each one: a freshly initialized [`Tensor`] when
//! building a model, or a tape [`Var`](crate::Var) when binding stored values
//! for a forward pass.

use rand::Rng;

use crate::error::Result;
use crate::tensor::Tensor;

/// Initialization rule for one parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanIn(usize),
    Zeros,
    Ones,
    Const(f64),
    /// `N(0, std^2)`.
    Normal(f64),
    /// `-exp(u)` with `u ~ U(ln 0.5, ln 2)`: stable diagonal state coefficients.
    NegLogUniform,
}

impl Init {
    pub fn sample<R: Rng + ?Sized>(self, shape: &[usize], rng: &mut R) -> Result<Tensor> {
        match self {
            Init::FanIn(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                Tensor::uniform(shape.to_vec(), -bound, bound, rng)
            }
            Init::Zeros => Tensor::zeros(shape.to_vec()),
            Init::Ones => Tensor::ones(shape.to_vec()),
            Init::Const(v) => Tensor::full(shape.to_vec(), v),
            Init::Normal(std) => Tensor::randn(shape.to_vec(), std, rng),
            Init::NegLogUniform => {
                let (lo, hi) = (0.5f64.ln(), 2.0f64.ln());
                Tensor::from_fn(shape.to_vec(), |_| -rng.random_range(lo..hi).exp())
            }
        }
    }
}

/// A named parameter with its shape and initialization rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: impl Into<Vec<usize>>, init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.into(),
            init,
        }
    }

    /// `[fan_in, fan_out]` weight matrix.
    pub fn linear_weight(name: impl Into<String>, fan_in: usize, fan_out: usize) -> Self {
        Self::new(name, [fan_in, fan_out], Init::FanIn(fan_in))
    }

    pub fn bias(name: impl Into<String>, d: usize) -> Self {
        Self::new(name, [d], Init::Zeros)
    }
}

/// Callback that materializes a parameter from its spec.
pub trait ParamSource<T> {
    fn get(&mut self, spec: ParamSpec) -> Result<T>;
}

impl<T, F: FnMut(ParamSpec) -> Result<T>> ParamSource<T> for F {
    fn get(&mut self, spec: ParamSpec) -> Result<T> {
        self(spec)
    }
}

/// Prefixes every requested name with `prefix.` before forwarding.
pub struct Scoped<'a, T> {
    prefix: String,
    inner: &'a mut dyn ParamSource<T>,
}

impl<'a, T> Scoped<'a, T> {
    pub fn new(prefix: impl Into<String>, inner: &'a mut dyn ParamSource<T>) -> Self {
        Self {
            prefix: prefix.into(),
            inner,
        }
    }
}

impl<T> ParamSource<T> for Scoped<'_, T> {
    fn get(&mut self, mut spec: ParamSpec) -> Result<T> {
        spec.name = format!("{}.{}", self.prefix, spec.name);
        self.inner.get(spec)
    }
}
