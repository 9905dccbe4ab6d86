//! Parameter groups for the basic layers and their forward passes.

use crate::attn::{grid_to_tokens, tokens_to_grid};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::ops::activation::Activation;
use crate::ops::norm::LAYER_NORM_EPS;
use crate::param::{Init, ParamSource, ParamSpec, Scoped};

#[derive(Clone, Debug)]
pub struct Conv<T> {
    pub w: T,
    pub b: T,
}

impl<T> Conv<T> {
    pub fn declare(name: &str, cin: usize, cout: usize, k: usize, src: &mut dyn ParamSource<T>) -> Result<Self> {
        let mut s = Scoped::new(name, src);
        Ok(Self {
            w: s.get(ParamSpec::new("w", [cout, cin, k, k], Init::FanIn(cin * k * k)))?,
            b: s.get(ParamSpec::bias("b", cout))?,
        })
    }
}

impl Conv<Var> {
    pub fn forward(&self, g: &mut Graph, x: Var, stride: usize) -> Result<Var> {
        let k = g.shape(self.w)[2];
        g.conv2d(x, self.w, Some(self.b), stride, k / 2)
    }

    /// Same-padding convolution of tokens laid out on `grid`.
    pub fn on_tokens(&self, g: &mut Graph, x: Var, grid: (usize, usize)) -> Result<Var> {
        let t = tokens_to_grid(g, x, grid)?;
        let y = self.forward(g, t, 1)?;
        grid_to_tokens(g, y)
    }
}

#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub w: T,
    pub b: T,
}

impl<T> Linear<T> {
    pub fn declare(name: &str, fan_in: usize, fan_out: usize, src: &mut dyn ParamSource<T>) -> Result<Self> {
        let mut s = Scoped::new(name, src);
        Ok(Self {
            w: s.get(ParamSpec::linear_weight("w", fan_in, fan_out))?,
            b: s.get(ParamSpec::bias("b", fan_out))?,
        })
    }
}

impl Linear<Var> {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.linear(x, self.w, Some(self.b))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm<T> {
    pub gamma: T,
    pub beta: T,
}

impl<T> LayerNorm<T> {
    pub fn declare(name: &str, d: usize, src: &mut dyn ParamSource<T>) -> Result<Self> {
        let mut s = Scoped::new(name, src);
        Ok(Self {
            gamma: s.get(ParamSpec::new("gamma", [d], Init::Ones))?,
            beta: s.get(ParamSpec::new("beta", [d], Init::Zeros))?,
        })
    }
}

impl LayerNorm<Var> {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.layer_norm(x, self.gamma, self.beta, LAYER_NORM_EPS)
    }
}

/// Expansion factor of the MLP hidden layer.
pub const MLP_EXPANSION: usize = 4;

/// Two-layer perceptron `fc2(gelu(fc1(x)))`.
#[derive(Clone, Debug)]
pub struct Mlp<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl<T> Mlp<T> {
    pub fn declare(name: &str, d: usize, src: &mut dyn ParamSource<T>) -> Result<Self> {
        let mut s = Scoped::new(name, src);
        Ok(Self {
            fc1: Linear::declare("fc1", d, MLP_EXPANSION * d, &mut s)?,
            fc2: Linear::declare("fc2", MLP_EXPANSION * d, d, &mut s)?,
        })
    }
}

impl Mlp<Var> {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, x)?;
        let h = g.activation(h, Activation::Gelu)?;
        self.fc2.forward(g, h)
    }
}

/// Standalone MLP on raw handles, `w1: [d, 4d]`, `w2: [4d, d]`.
pub fn mlp(g: &mut Graph, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    Mlp {
        fc1: Linear { w: w1, b: b1 },
        fc2: Linear { w: w2, b: b2 },
    }
    .forward(g, x)
}
