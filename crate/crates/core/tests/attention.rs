use std::time::{Duration, Instant};

use integscan_core::attn::{
    cross_attn, gated_qk_project, integ_attn, rope_encode, AttnOptions, AttnWeights, GateKind, RopeTable,
};
use integscan_core::param::{ParamSource, ParamSpec};
use integscan_core::{Error, Graph, Result, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Binds freshly sampled attention weights; `fixed` may pin individual tensors.
fn bind_weights(
    g: &mut Graph,
    d: usize,
    depthwise: bool,
    seed: u64,
    fixed: impl Fn(&str, &[usize]) -> Option<Tensor>,
) -> AttnWeights<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut src = |spec: ParamSpec| -> Result<Var> {
        let t = match fixed(&spec.name, &spec.shape) {
            Some(t) => t,
            None => spec.init.sample(&spec.shape, &mut rng)?,
        };
        Ok(g.param(t))
    };
    AttnWeights::declare(d, depthwise, &mut src as &mut dyn ParamSource<Var>).unwrap()
}

fn identity(d: usize) -> Tensor {
    Tensor::from_fn([d, d], |i| if i / d == i % d { 1.0 } else { 0.0 }).unwrap()
}

fn center_one(d: usize) -> Tensor {
    Tensor::from_fn([d, 1, 3, 3], |i| if i % 9 == 4 { 1.0 } else { 0.0 }).unwrap()
}

fn no_rope() -> AttnOptions {
    AttnOptions {
        use_rope: false,
        gate: GateKind::Channel,
    }
}

#[test]
fn rope_preserves_norm_and_fixes_position_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let table = RopeTable::new(64, 10).unwrap();
    let x = Tensor::uniform([3, 64, 10], -2.0, 2.0, &mut rng).unwrap();
    let y = rope_encode(&x, &table).unwrap();
    for (xt, yt) in x.data().chunks(10).zip(y.data().chunks(10)) {
        let nx: f64 = xt.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = yt.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nx - ny).abs() < 1e-12);
    }
    for b in 0..3 {
        let off = b * 64 * 10;
        assert_eq!(&x.data()[off..off + 10], &y.data()[off..off + 10]);
    }
}

#[test]
fn rope_inner_products_depend_on_offset_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = 8;
    let q = Tensor::uniform([d], -1.0, 1.0, &mut rng).unwrap();
    let k = Tensor::uniform([d], -1.0, 1.0, &mut rng).unwrap();
    let table = RopeTable::new(16, d).unwrap();
    let at = |v: &Tensor, p: usize| {
        let x = Tensor::from_fn([1, 16, d], |i| if i / d == p { v.data()[i % d] } else { 0.0 }).unwrap();
        rope_encode(&x, &table).unwrap().data()[p * d..(p + 1) * d].to_vec()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let near = dot(&at(&q, 3), &at(&k, 7));
    let far = dot(&at(&q, 10), &at(&k, 14));
    assert!((near - far).abs() < 1e-10, "{near} vs {far}");
}

#[test]
fn rope_capacity_and_dim_errors() {
    let table = RopeTable::new(8, 4).unwrap();
    assert!(matches!(rope_encode(&Tensor::zeros([1, 9, 4]).unwrap(), &table), Err(Error::Capacity(_))));
    assert!(matches!(rope_encode(&Tensor::zeros([1, 2, 6]).unwrap(), &table), Err(Error::Shape { .. })));
    assert!(RopeTable::new(8, 5).is_err());
}

#[test]
fn zero_projection_gives_unit_queries_and_keys() {
    let mut g = Graph::new();
    let w = bind_weights(&mut g, 6, false, 0, |_, s| Some(Tensor::zeros(s.to_vec()).unwrap()));
    let x = g.constant(Tensor::zeros([2, 5, 6]).unwrap());
    let (q, k, _) = gated_qk_project(&mut g, x, &w).unwrap();
    assert!(g.value(q).data().iter().all(|&v| v == 1.0));
    assert!(g.value(k).data().iter().all(|&v| v == 1.0));
}

#[test]
fn queries_and_keys_are_strictly_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = Graph::new();
    let w = bind_weights(&mut g, 10, false, 4, |name, s| {
        name.starts_with("w_").then(|| Tensor::randn(s.to_vec(), 3.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap())
    });
    let x = g.constant(Tensor::randn([10, 1000, 10], 5.0, &mut rng).unwrap());
    let (q, k, _) = gated_qk_project(&mut g, x, &w).unwrap();
    assert!(g.value(q).data().iter().all(|&v| v > 0.0));
    assert!(g.value(k).data().iter().all(|&v| v > 0.0));
}

#[test]
fn vanishing_value_and_kernel_give_zero_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (d, grid) = (4, (3, 5));
    let table = RopeTable::new(15, d).unwrap();
    let mut g = Graph::new();
    let w = bind_weights(&mut g, d, true, 5, |name, s| {
        matches!(name, "w_v" | "b_v" | "dw_kernel" | "dw_bias" | "b_out").then(|| Tensor::zeros(s.to_vec()).unwrap())
    });
    let x = g.constant(Tensor::uniform([2, 15, d], -1.0, 1.0, &mut rng).unwrap());
    let y = integ_attn(&mut g, x, &w, &table, grid, AttnOptions::default()).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn closed_form_with_frozen_gate() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (d, grid) = (6, (4, 4));
    let table = RopeTable::new(16, d).unwrap();
    let mut g = Graph::new();
    let w = bind_weights(&mut g, d, true, 6, |name, s| match name {
        "w_q" | "b_q" | "w_k" | "b_k" | "dw_bias" | "b_out" => Some(Tensor::zeros(s.to_vec()).unwrap()),
        "dw_kernel" => Some(center_one(d)),
        "w_out" => Some(identity(d)),
        _ => None,
    });
    let xt = Tensor::uniform([2, 16, d], -1.0, 1.0, &mut rng).unwrap();
    let x = g.constant(xt.clone());
    let y = integ_attn(&mut g, x, &w, &table, grid, no_rope()).unwrap();

    let (wv, bv) = (g.value(w.w_v).clone(), g.value(w.b_v).clone());
    let inv = 1.0 / (d as f64).sqrt();
    for (tok, out) in xt.data().chunks(d).zip(g.value(y).data().chunks(d)) {
        for j in 0..d {
            let v: f64 = (0..d).map(|i| tok[i] * wv.data()[i * d + j]).sum::<f64>() + bv.data()[j];
            assert!((out[j] - (inv * v + v)).abs() < 1e-12);
        }
    }
}

#[test]
fn grid_must_match_token_count() {
    let table = RopeTable::new(16, 4).unwrap();
    let mut g = Graph::new();
    let w = bind_weights(&mut g, 4, true, 0, |_, _| None);
    let x = g.constant(Tensor::zeros([1, 12, 4]).unwrap());
    assert!(matches!(
        integ_attn(&mut g, x, &w, &table, (3, 5), AttnOptions::default()),
        Err(Error::Shape { .. })
    ));
}

fn forward_time(n: usize, d: usize) -> (Duration, usize) {
    let side = (n as f64).sqrt() as usize;
    let table = RopeTable::new(n, d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let xt = Tensor::uniform([1, n, d], -1.0, 1.0, &mut rng).unwrap();
    let mut best = Duration::MAX;
    let mut peak = 0;
    for _ in 0..3 {
        let mut g = Graph::new();
        let w = bind_weights(&mut g, d, true, 1, |_, _| None);
        let x = g.constant(xt.clone());
        let start = Instant::now();
        integ_attn(&mut g, x, &w, &table, (side, side), AttnOptions::default()).unwrap();
        best = best.min(start.elapsed());
        peak = g.max_node_numel();
    }
    (best, peak)
}

#[test]
fn cost_grows_linearly_in_tokens() {
    let d = 16;
    let sizes = [1024usize, 2304, 4096];
    let runs: Vec<(Duration, usize)> = sizes.iter().map(|&n| forward_time(n, d)).collect();
    for (&n, &(_, peak)) in sizes.iter().zip(&runs) {
        assert!(peak < n * n, "N={n}: largest intermediate has {peak} elements");
        assert!(peak <= n * d);
    }
    // Log-log slope of runtime against N: 1 for linear cost, 2 for quadratic.
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = runs.iter().map(|(t, _)| t.as_secs_f64().ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let ratio = runs[2].0.as_secs_f64() / runs[0].0.as_secs_f64();
    assert!(slope < 1.5, "slope {slope:.2}, 4096/1024 ratio {ratio:.2}");
    assert!(ratio < 8.0, "4096/1024 ratio {ratio:.2}");
}

#[test]
fn every_weight_receives_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for gate in [GateKind::Channel, GateKind::Scalar] {
        let (d, grid) = (6, (3, 4));
        let table = RopeTable::new(12, d).unwrap();
        let mut g = Graph::new();
        let w = bind_weights(&mut g, d, true, 8, |name, s| {
            name.starts_with("b_").then(|| Tensor::uniform(s.to_vec(), -0.3, 0.3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap())
        });
        let x = g.constant(Tensor::uniform([2, 12, d], -1.0, 1.0, &mut rng).unwrap());
        let opts = AttnOptions { use_rope: true, gate };
        let y = integ_attn(&mut g, x, &w, &table, grid, opts).unwrap();
        let r = g.constant(Tensor::uniform([2, 12, d], -1.0, 1.0, &mut rng).unwrap());
        let y = g.mul(y, r).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss).unwrap();
        let all = [w.w_q, w.b_q, w.w_k, w.b_k, w.w_v, w.b_v, w.dw_kernel.unwrap(), w.dw_bias.unwrap(), w.w_out, w.b_out];
        for (i, v) in all.into_iter().enumerate() {
            let grad = g.grad(v).expect("gradient recorded");
            assert!(grad.data().iter().any(|&x| x != 0.0), "{gate}: weight #{i} has zero gradient");
        }
    }
}

fn permute_tokens(t: &Tensor, perm: &[usize]) -> Tensor {
    let [b, n, d] = *t.shape() else { panic!("rank 3") };
    Tensor::from_fn([b, n, d], |i| {
        let (bi, k, j) = (i / (n * d), (i / d) % n, i % d);
        t.data()[(bi * n + perm[k]) * d + j]
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gated_branch_is_permutation_equivariant(perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, grid) = (4, (3, 4));
        let table = RopeTable::new(12, d).unwrap();
        let xt = Tensor::uniform([2, 12, d], -1.0, 1.0, &mut rng).unwrap();
        let run = |x: &Tensor| {
            let mut g = Graph::new();
            let w = bind_weights(&mut g, d, false, seed, |_, _| None);
            let xv = g.constant(x.clone());
            let y = integ_attn(&mut g, xv, &w, &table, grid, no_rope()).unwrap();
            g.value(y).clone()
        };
        let direct = permute_tokens(&run(&xt), &perm);
        let permuted = run(&permute_tokens(&xt, &perm));
        prop_assert!(direct.max_abs_diff(&permuted) < 1e-12);
    }

    #[test]
    fn cross_attention_is_equivariant_in_queries(perm in Just((0..9).collect::<Vec<usize>>()).prop_shuffle(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        let table = RopeTable::new(16, d).unwrap();
        let q = Tensor::uniform([1, 9, d], -1.0, 1.0, &mut rng).unwrap();
        let kv = Tensor::uniform([1, 5, d], -1.0, 1.0, &mut rng).unwrap();
        let run = |q: &Tensor, kv: &Tensor| {
            let mut g = Graph::new();
            let w = bind_weights(&mut g, d, false, seed, |_, _| None);
            let (qv, kvv) = (g.constant(q.clone()), g.constant(kv.clone()));
            let y = cross_attn(&mut g, qv, kvv, &w, &table, None, no_rope()).unwrap();
            g.value(y).clone()
        };
        let direct = permute_tokens(&run(&q, &kv), &perm);
        let permuted = run(&permute_tokens(&q, &perm), &kv);
        prop_assert!(direct.max_abs_diff(&permuted) < 1e-12);
        // Keys and values enter only through their token mean.
        let kv_perm = permute_tokens(&kv, &[4, 2, 0, 3, 1]);
        prop_assert!(run(&q, &kv).max_abs_diff(&run(&q, &kv_perm)) < 1e-12);
    }
}
