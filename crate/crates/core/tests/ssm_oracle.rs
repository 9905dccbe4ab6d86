use integscan_core::gradcheck::{grad_check, GradCheckOptions};
use integscan_core::ssm::{ssm_apply_bidirectional, ssm_scan, zoh_discretize, ScanState, SsmParams, SsmVars};
use integscan_core::{Error, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut ChaCha8Rng, d: usize) -> SsmParams {
    let mut v = |lo: f64, hi: f64| (0..d).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
    SsmParams {
        a: v(-3.0, -1e-3),
        b: v(-2.0, 2.0),
        c: v(-2.0, 2.0),
        d_res: v(-1.0, 1.0),
        delta: v(0.01, 1.0),
    }
}

/// Plain loop over the recurrence with exp(Δa) and (exp(Δa) - 1)/a·b.
fn unrolled(p: &SsmParams, x: &Tensor, reverse: bool) -> Vec<f64> {
    let [batch, len, d] = *x.shape() else { panic!("rank 3") };
    let mut y = vec![0.0; x.numel()];
    for bi in 0..batch {
        for j in 0..d {
            let ab = (p.delta[j] * p.a[j]).exp();
            let bb = if p.a[j].abs() > 1e-8 { (ab - 1.0) / p.a[j] * p.b[j] } else { p.delta[j] * p.b[j] };
            let mut h = 0.0;
            for step in 0..len {
                let k = if reverse { len - 1 - step } else { step };
                let idx = (bi * len + k) * d + j;
                h = ab * h + bb * x.data()[idx];
                y[idx] = p.c[j] * h + p.d_res[j] * x.data()[idx];
            }
        }
    }
    y
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn scan_matches_unrolled_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let d = 1 + trial % 5;
        let p = random_params(&mut rng, d);
        for len in [1, 2, 16, 64] {
            let x = Tensor::uniform([2, len, d], -1.0, 1.0, &mut rng).unwrap();
            let y = ssm_scan(&p, &x).unwrap();
            let err = max_diff(y.data(), &unrolled(&p, &x, false));
            assert!(err < 1e-12, "trial {trial}, L={len}: {err:e}");
        }
    }
}

#[test]
fn discretize_matches_scalar_closed_form() {
    let cases = [(-1.0, 1.0, 1.0), (-0.5, 0.3, 2.0), (-2.0, 0.05, -1.5), (-1e-9, 0.7, 3.0), (0.0, 0.1, 2.0), (1e-9, 0.2, 1.0), (-1e-12, 0.4, 1.0)];
    for (a, delta, b) in cases {
        let p = SsmParams {
            a: vec![a],
            b: vec![b],
            c: vec![1.0],
            d_res: vec![0.0],
            delta: vec![delta],
        };
        let (ab, bb) = zoh_discretize(&p).unwrap();
        let want_a = (delta * a).exp();
        let want_b = if a.abs() <= 1e-8 { delta * b } else { ((delta * a).exp() - 1.0) / a * b };
        assert!((ab[0] - want_a).abs() < 1e-12, "a={a}");
        assert!((bb[0] - want_b).abs() < 1e-12, "a={a}: {} vs {want_b}", bb[0]);
    }

    let p = SsmParams {
        a: vec![-1.0],
        b: vec![1.0],
        c: vec![1.0],
        d_res: vec![0.0],
        delta: vec![1.0],
    };
    let (ab, bb) = zoh_discretize(&p).unwrap();
    assert!((ab[0] - 0.36787944117144233).abs() < 1e-12);
    assert!((bb[0] - 0.6321205588285577).abs() < 1e-12);

    let zero = SsmParams { a: vec![0.0], b: vec![2.0], delta: vec![0.1], ..p.clone() };
    let (ab, bb) = zoh_discretize(&zero).unwrap();
    assert_eq!(ab[0], 1.0);
    assert!((bb[0] - 0.2).abs() < 1e-15);
}

#[test]
fn discretize_is_continuous_at_the_branch() {
    let at = |a: f64| {
        let p = SsmParams {
            a: vec![a],
            b: vec![1.3],
            c: vec![1.0],
            d_res: vec![0.0],
            delta: vec![0.7],
        };
        zoh_discretize(&p).unwrap().1[0]
    };
    assert!((at(-1e-12) - at(0.0)).abs() < 1e-10);
    // Across the threshold the jump is the dropped first-order term delta²·|a|·|b|/2.
    assert!((at(-1.0001e-8) - at(-0.9999e-8)).abs() <= 0.7 * 0.7 * 1.0001e-8 * 1.3 / 2.0 * 1.01);
}

#[test]
fn discretize_rejects_bad_params() {
    let good = SsmParams {
        a: vec![-1.0],
        b: vec![1.0],
        c: vec![1.0],
        d_res: vec![1.0],
        delta: vec![0.1],
    };
    let nan = SsmParams { a: vec![f64::NAN], ..good.clone() };
    assert!(matches!(zoh_discretize(&nan), Err(Error::InvalidArgument(_))));
    let neg = SsmParams { delta: vec![0.0], ..good.clone() };
    assert!(matches!(zoh_discretize(&neg), Err(Error::InvalidArgument(_))));
    let short = SsmParams { c: vec![], ..good };
    assert!(zoh_discretize(&short).is_err());
}

#[test]
fn memoryless_and_pure_residual_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::uniform([1, 8, 2], -1.0, 1.0, &mut rng).unwrap();
    let p = SsmParams {
        a: vec![-50.0, -50.0],
        b: vec![1.0, 0.5],
        c: vec![0.8, -1.2],
        d_res: vec![0.3, 1.0],
        delta: vec![1.0, 1.0],
    };
    let (_, bb) = zoh_discretize(&p).unwrap();
    let y = ssm_scan(&p, &x).unwrap();
    for (i, (&yi, &xi)) in y.data().iter().zip(x.data()).enumerate() {
        let j = i % 2;
        assert!((yi - (p.c[j] * bb[j] + p.d_res[j]) * xi).abs() < 1e-12);
    }

    let residual = SsmParams { c: vec![0.0; 2], d_res: vec![1.0; 2], ..p };
    assert_eq!(ssm_scan(&residual, &x).unwrap(), x);
}

#[test]
fn bidirectional_is_sum_of_two_oracle_scans() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let f = random_params(&mut rng, 4);
        let b = random_params(&mut rng, 4);
        let x = Tensor::uniform([3, 17, 4], -1.0, 1.0, &mut rng).unwrap();
        let y = ssm_apply_bidirectional(&f, &b, &x).unwrap();
        let want: Vec<f64> = unrolled(&f, &x, false).iter().zip(unrolled(&b, &x, true)).map(|(p, q)| p + q).collect();
        assert!(max_diff(y.data(), &want) < 1e-12);
    }
}

#[test]
fn bidirectional_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_params(&mut rng, 3);
    let off = SsmParams { c: vec![0.0; 3], d_res: vec![0.0; 3], ..p.clone() };
    let x = Tensor::uniform([2, 9, 3], -1.0, 1.0, &mut rng).unwrap();
    let both = ssm_apply_bidirectional(&p, &off, &x).unwrap();
    assert!(both.max_abs_diff(&ssm_scan(&p, &x).unwrap()) < 1e-15);

    // Palindromic sequence with tied parameters: output is itself a palindrome.
    let (len, d) = (9, 3);
    let pal = Tensor::from_fn([1, len, d], |i| {
        let (k, j) = (i / d, i % d);
        ((k.min(len - 1 - k) * 7 + j) as f64 * 0.37).sin()
    })
    .unwrap();
    let y = ssm_apply_bidirectional(&p, &p, &pal).unwrap();
    for k in 0..len {
        for j in 0..d {
            let a = y.data()[k * d + j];
            let b = y.data()[(len - 1 - k) * d + j];
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn scan_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (reverse, a_range) in [(false, (-2.0, -0.1)), (true, (-2.0, -0.1)), (false, (-1e-4, 1e-4))] {
        let d = 3;
        let inputs = vec![
            Tensor::uniform([2, 7, d], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::uniform([d], a_range.0, a_range.1, &mut rng).unwrap(),
            Tensor::uniform([d], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::uniform([d], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::uniform([d], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::uniform([d], 0.05, 0.9, &mut rng).unwrap(),
        ];
        let r = grad_check(
            |g, v| {
                let p = SsmVars {
                    a: v[1],
                    b: v[2],
                    c: v[3],
                    d_res: v[4],
                    delta: v[5],
                };
                g.ssm_scan(v[0], p, reverse)
            },
            &inputs,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed, "reverse={reverse}, a in {a_range:?}: {r:?}");
    }
}

#[test]
fn scan_rejects_channel_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_params(&mut rng, 3);
    let x = Tensor::zeros([1, 4, 2]).unwrap();
    assert!(matches!(ssm_scan(&p, &x), Err(Error::Shape { .. })));
}

fn params_strategy(d: usize) -> impl Strategy<Value = SsmParams> {
    (
        prop::collection::vec(-5.0f64..=0.0, d),
        prop::collection::vec(-3.0f64..3.0, d),
        prop::collection::vec(-3.0f64..3.0, d),
        prop::collection::vec(-3.0f64..3.0, d),
        prop::collection::vec(1e-3f64..2.0, d),
    )
        .prop_map(|(a, b, c, d_res, delta)| SsmParams { a, b, c, d_res, delta })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hidden_state_stays_bounded(p in params_strategy(3), xs in prop::collection::vec(-10.0f64..10.0, 3 * 40)) {
        let (ab, bb) = zoh_discretize(&p).unwrap();
        let bound = xs.chunks(3).flat_map(|x| x.iter().zip(&bb).map(|(xv, b)| (xv * b).abs())).fold(0.0, f64::max);
        let mut state = ScanState::new(3);
        for (k, x) in xs.chunks(3).enumerate() {
            let y = state.step(&ab, &bb, &p.c, &p.d_res, x);
            prop_assert!(y.iter().all(|v| v.is_finite()));
            for h in &state.h {
                prop_assert!(h.abs() <= bound * (k + 1) as f64 + 1e-12);
            }
        }
        prop_assert_eq!(state.position, 40);
    }

    #[test]
    fn zero_input_is_a_fixed_point(p in params_strategy(4), len in 1usize..32) {
        let x = Tensor::zeros([2, len, 4]).unwrap();
        let y = ssm_scan(&p, &x).unwrap();
        prop_assert!(y.data().iter().all(|&v| v == 0.0));
    }
}
