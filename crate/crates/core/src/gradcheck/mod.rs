//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

mod suite;
pub use suite::{model_check, op_suite, OpCheck, SuiteOptions, COMPOSITES};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Check at most this many randomly chosen elements per input.
    pub max_elements_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            max_elements_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InputReport {
    pub index: usize,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Flat index of the worst element.
    pub worst_element: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub inputs: Vec<InputReport>,
    pub passed: bool,
    /// Set when the check could not be completed meaningfully, e.g. a non-finite gradient.
    pub failure: Option<String>,
}

/// `|a - n| / max(|a|, |n|, 1e-3·scale, 1e-10)`, where `scale` is the largest
/// numeric gradient magnitude of the whole check.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3 * scale).max(1e-10);
    (analytic - numeric).abs() / denom
}

fn failed(reason: String) -> GradCheckReport {
    GradCheckReport {
        max_rel_err: f64::INFINITY,
        inputs: Vec::new(),
        passed: false,
        failure: Some(reason),
    }
}

fn objective(out: &Tensor, weights: &[f64]) -> f64 {
    out.data().iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Compares the tape gradient of `sum(f(inputs) ⊙ R)` against central
/// differences, where `R` is a fixed random tensor (all ones for a
/// single-element output).
pub fn grad_check<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eval = |values: &[Tensor]| -> Result<Tensor> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).clone())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let out_shape = g.shape(out).to_vec();
    let weights = if g.value(out).numel() == 1 {
        Tensor::ones(out_shape)?
    } else {
        Tensor::uniform(out_shape, -1.0, 1.0, &mut rng)?
    };
    let r = g.constant(weights.clone());
    let weighted = g.mul(out, r)?;
    let loss = g.sum(weighted)?;
    g.backward(loss)?;

    let mut checked = Vec::with_capacity(inputs.len());
    let mut values: Vec<Tensor> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let n = inputs[i].numel();
        let analytic = match g.grad(*var) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; n],
        };
        if let Some(j) = analytic.iter().position(|v| !v.is_finite()) {
            return Ok(failed(format!("non-finite analytic gradient at input {i}, element {j}")));
        }
        let picks: Vec<usize> = match opts.max_elements_per_input {
            Some(k) if k < n => {
                let mut p = sample(&mut rng, n, k).into_vec();
                p.sort_unstable();
                p
            }
            _ => (0..n).collect(),
        };
        let mut numeric = Vec::with_capacity(picks.len());
        for &j in &picks {
            let orig = values[i].data()[j];
            values[i].data_mut()[j] = orig + opts.eps;
            let plus = objective(&eval(&values)?, weights.data());
            values[i].data_mut()[j] = orig - opts.eps;
            let minus = objective(&eval(&values)?, weights.data());
            values[i].data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * opts.eps));
        }
        if let Some(k) = numeric.iter().position(|v| !v.is_finite()) {
            return Ok(failed(format!("non-finite numeric gradient at input {i}, element {}", picks[k])));
        }
        checked.push((picks, analytic, numeric));
    }

    // Entries far below the overall gradient scale are compared against that
    // scale: central differences carry an absolute round-off floor there.
    let scale = checked
        .iter()
        .flat_map(|(_, _, n)| n.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut reports = Vec::with_capacity(inputs.len());
    let mut worst = 0.0f64;
    for (i, (picks, analytic, numeric)) in checked.into_iter().enumerate() {
        let mut rep = InputReport {
            index: i,
            checked: picks.len(),
            max_rel_err: 0.0,
            worst_element: picks.first().copied().unwrap_or(0),
        };
        for (&j, &num) in picks.iter().zip(&numeric) {
            let e = relative_error(analytic[j], num, scale);
            if e > rep.max_rel_err {
                rep.max_rel_err = e;
                rep.worst_element = j;
            }
        }
        worst = worst.max(rep.max_rel_err);
        reports.push(rep);
    }
    Ok(GradCheckReport {
        max_rel_err: worst,
        inputs: reports,
        passed: worst < opts.tol,
        failure: None,
    })
}
