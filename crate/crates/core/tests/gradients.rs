use integscan_core::gradcheck::{grad_check, model_check, op_suite, GradCheckOptions, SuiteOptions, COMPOSITES};
use integscan_core::model::{ModelConfig, SsmMode};
use integscan_core::{Activation, CustomOp, Graph, Tensor, Var, OP_KINDS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_check_config(mode: SsmMode) -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        depth: 2,
        in_channels: 3,
        input_h: 16,
        input_w: 16,
        prompt_len: 8,
        vocab_size: 64,
        ssm_mode: mode,
        ..ModelConfig::default()
    }
}

#[test]
fn every_op_and_composite_matches_central_differences() {
    let checks = op_suite(&SuiteOptions::default()).unwrap();
    for name in OP_KINDS.iter().chain(COMPOSITES) {
        let c = checks.iter().find(|c| c.name == *name).unwrap_or_else(|| panic!("{name} not covered"));
        assert!(c.report.passed, "{name}: {:?}", c.report);
        assert!(c.report.max_rel_err < 1e-4, "{name}: {}", c.report.max_rel_err);
    }
}

#[test]
fn end_to_end_model_gradients_attn() {
    let r = model_check(&tiny_check_config(SsmMode::Attn), 3, 4, &SuiteOptions::default()).unwrap();
    assert!(r.passed && r.max_rel_err < 1e-4, "{:?}", r.failure.or(Some(r.max_rel_err.to_string())));
}

#[test]
fn end_to_end_model_gradients_scan() {
    let r = model_check(&tiny_check_config(SsmMode::Scan), 3, 4, &SuiteOptions::default()).unwrap();
    assert!(r.passed && r.max_rel_err < 1e-4, "{:?}", r.failure.or(Some(r.max_rel_err.to_string())));
}

#[test]
fn composite_chain_leaf_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = vec![
        Tensor::uniform([2, 2, 5, 5], -1.0, 1.0, &mut rng).unwrap(),
        Tensor::uniform([3, 2, 3, 3], -0.5, 0.5, &mut rng).unwrap(),
        Tensor::uniform([3], 0.5, 1.5, &mut rng).unwrap(),
        Tensor::uniform([3], -0.2, 0.2, &mut rng).unwrap(),
        Tensor::uniform([3, 4], -1.0, 1.0, &mut rng).unwrap(),
    ];
    let r = grad_check(
        |g, v| {
            let y = g.conv2d(v[0], v[1], None, 1, 1)?;
            let y = g.permute(y, &[0, 2, 3, 1])?;
            let y = g.layer_norm(y, v[2], v[3], 1e-5)?;
            let y = g.silu(y)?;
            g.matmul(y, v[4])
        },
        &inputs,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(r.passed, "{r:?}");
}

struct NanGrad;

impl CustomOp for NanGrad {
    fn name(&self) -> &str {
        "nan_grad"
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(vec![f64::NAN; g.len()])]
    }
}

#[test]
fn non_finite_gradient_is_reported() {
    let x = Tensor::new([2], vec![0.0, 1.0]).unwrap();
    let r = grad_check(
        |g, v| {
            let out = g.value(v[0]).clone();
            g.custom(v, out, Box::new(NanGrad))
        },
        &[x],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(!r.passed);
    assert!(r.failure.unwrap().contains("non-finite"));
}

fn grads_of(x: &Tensor, build: impl Fn(&mut Graph, Var) -> Var) -> Vec<f64> {
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let loss = build(&mut g, v);
    g.backward(loss).unwrap();
    g.grad(v).unwrap().data().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backward_is_linear(data in prop::collection::vec(-2.0f64..2.0, 6), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let x = Tensor::new([2, 3], data).unwrap();
        let f = |g: &mut Graph, v| {
            let s = g.silu(v).unwrap();
            let w = g.mul(s, v).unwrap();
            g.sum(w).unwrap()
        };
        let h = |g: &mut Graph, v| {
            let t = g.activation(v, Activation::Gelu).unwrap();
            let t = g.permute(t, &[1, 0]).unwrap();
            g.mean(t).unwrap()
        };
        let gf = grads_of(&x, f);
        let gh = grads_of(&x, h);
        let combined = grads_of(&x, |g, v| {
            let a = f(g, v);
            let b = h(g, v);
            let a = g.scale(a, alpha).unwrap();
            let b = g.scale(b, beta).unwrap();
            g.add(a, b).unwrap()
        });
        for i in 0..6 {
            let want = alpha * gf[i] + beta * gh[i];
            prop_assert!((combined[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn elu_plus_one_is_strictly_positive(x in -1e300f64..1e300) {
        prop_assert!(Activation::EluPlusOne.apply(x) > 0.0);
        prop_assert!(Activation::EluPlusOne.apply(x / 1e298) > 0.0);
    }
}
