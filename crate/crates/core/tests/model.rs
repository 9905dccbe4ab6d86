use integscan_core::model::block::{integssm_block_forward, AttnCtx};
use integscan_core::model::checkpoint;
use integscan_core::model::network::{decode_mask, encode_visual, integboost_forward, integration_fuse};
use integscan_core::model::prompt::{template, PAD_ID};
use integscan_core::model::train::{batch_loss, train_step};
use integscan_core::model::{Adam, MaskPrediction, Model, ModelConfig, PromptTokens, Sample, SsmMode};
use integscan_core::ops::loss::pos_weight_for;
use integscan_core::{Error, Graph, Modality, Task, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(mode: SsmMode) -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        depth: 1,
        input_h: 16,
        input_w: 16,
        prompt_len: 6,
        vocab_size: 97,
        ssm_mode: mode,
        ..ModelConfig::default()
    }
}

fn images(cfg: &ModelConfig, b: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform([b, cfg.in_channels, cfg.input_h, cfg.input_w], 0.0, 1.0, &mut rng).unwrap()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[test]
fn forward_shape_contract_over_configs() {
    let configs = [
        ModelConfig { embed_dim: 8, depth: 1, input_h: 16, input_w: 16, ..ModelConfig::default() },
        ModelConfig { embed_dim: 12, depth: 2, in_channels: 1, input_h: 8, input_w: 24, ..ModelConfig::default() },
        ModelConfig { embed_dim: 16, depth: 1, input_h: 32, input_w: 16, prompt_len: 4, ..ModelConfig::default() },
        ModelConfig { embed_dim: 8, depth: 3, input_h: 20, input_w: 12, vocab_size: 50, ..ModelConfig::default() },
        ModelConfig { embed_dim: 6, depth: 0, input_h: 4, input_w: 4, prompt_len: 20, ..ModelConfig::default() },
    ];
    for mode in [SsmMode::Attn, SsmMode::Scan] {
        for (i, base) in configs.iter().enumerate() {
            let cfg = ModelConfig { ssm_mode: mode, ..base.clone() };
            let model = Model::new(cfg.clone(), i as u64).unwrap();
            let b = 1 + i % 3;
            let keys: Vec<_> = (0..b).map(|j| (Modality::ALL[j % 4], Task::ALL[(i + j) % 4])).collect();
            let pred = model.predict(&images(&cfg, b, 7), &keys).unwrap();
            assert_eq!(pred.probabilities.shape(), &[b, 1, cfg.input_h, cfg.input_w], "{mode} config {i}");
            assert_eq!(pred.logits.shape(), pred.probabilities.shape());
            assert_eq!(pred.threshold, MaskPrediction::DEFAULT_THRESHOLD);
            for (&p, &z) in pred.probabilities.data().iter().zip(pred.logits.data()) {
                assert!((0.0..=1.0).contains(&p));
                assert!((p - sigmoid(z)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fixed_seed_is_bit_identical() {
    for mode in [SsmMode::Attn, SsmMode::Scan] {
        let cfg = small(mode);
        let a = Model::new(cfg.clone(), 42).unwrap();
        let b = Model::new(cfg.clone(), 42).unwrap();
        assert_eq!(a.params(), b.params());
        let x = images(&cfg, 2, 1);
        let keys = [(Modality::Blot, Task::Edd), (Modality::Facs, Task::Removal)];
        let pa = a.predict(&x, &keys).unwrap();
        let pb = b.predict(&x, &keys).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&pa.logits), bits(&pb.logits));
        assert_ne!(Model::new(cfg, 43).unwrap().params(), a.params());
    }
}

/// FNV-1a, 64 bit, written out independently of the library.
fn fnv(word: &str) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for b in word.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

#[test]
fn prompt_ids_follow_the_hash_sequence() {
    let text = "duplicate the highlighted cell region within the same microscopy image";
    assert_eq!(template(Modality::Microscopy, Task::Idd).unwrap(), text);
    let p = PromptTokens::new(Modality::Microscopy, Task::Idd, 4096, 16).unwrap();
    let mut want: Vec<usize> = text.split(' ').map(|w| (fnv(w) % 4096) as usize).collect();
    want.resize(16, PAD_ID);
    assert_eq!(p.ids, want);
    assert_eq!(p.source_template, (Modality::Microscopy, Task::Idd));
    assert_eq!(p, PromptTokens::new(Modality::Microscopy, Task::Idd, 4096, 16).unwrap());

    let short = PromptTokens::new(Modality::Microscopy, Task::Idd, 4096, 4).unwrap();
    assert_eq!(short.ids, want[..4]);

    let removal = PromptTokens::new(Modality::Blot, Task::Removal, 4096, 16).unwrap();
    let idd = PromptTokens::new(Modality::Blot, Task::Idd, 4096, 16).unwrap();
    assert_ne!(removal.ids, idd.ids);
    for m in Modality::ALL {
        for t in Task::ALL {
            let p = PromptTokens::new(*m, *t, 97, 16).unwrap();
            assert!(p.ids.iter().all(|&id| id < 97));
        }
    }
}

#[test]
fn prompts_change_the_prediction() {
    for mode in [SsmMode::Attn, SsmMode::Scan] {
        let cfg = small(mode);
        let model = Model::new(cfg.clone(), 5).unwrap();
        let x = images(&cfg, 1, 2);
        let a = model.predict(&x, &[(Modality::Microscopy, Task::Idd)]).unwrap();
        let b = model.predict(&x, &[(Modality::Blot, Task::Cstd)]).unwrap();
        assert!(a.probabilities.max_abs_diff(&b.probabilities) > 0.0, "{mode}");
    }
}

#[test]
fn visual_tokens_shape_and_scaling() {
    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), 0).unwrap();
    let mut g = Graph::new();
    let (p, _) = model.bind(&mut g, false).unwrap();
    let x = g.constant(images(&cfg, 2, 0));
    let t = encode_visual(&mut g, x, &p, &cfg, model.ctx()).unwrap();
    assert_eq!(g.shape(t), &[2, 256, 64]);

    let cfg = small(SsmMode::Attn);
    let big = ModelConfig { input_h: 32, input_w: 32, ..cfg.clone() };
    let n = |cfg: &ModelConfig, image: Tensor| {
        let model = Model::new(cfg.clone(), 0).unwrap();
        let mut g = Graph::new();
        let (p, _) = model.bind(&mut g, false).unwrap();
        let x = g.constant(image);
        let t = encode_visual(&mut g, x, &p, cfg, model.ctx()).unwrap();
        assert!(g.value(t).is_finite());
        g.shape(t)[1]
    };
    let base = n(&cfg, Tensor::full([1, 3, 16, 16], 0.5).unwrap());
    assert_eq!(n(&big, Tensor::full([1, 3, 32, 32], 0.5).unwrap()), 4 * base);
}

#[test]
fn indivisible_input_is_a_config_error() {
    let cfg = small(SsmMode::Attn);
    let model = Model::new(cfg.clone(), 0).unwrap();
    let mut g = Graph::new();
    let (p, _) = model.bind(&mut g, false).unwrap();
    let x = g.constant(Tensor::zeros([1, 3, 18, 16]).unwrap());
    assert!(matches!(encode_visual(&mut g, x, &p, &cfg, model.ctx()), Err(Error::Config(_))));
    assert!(matches!(Model::new(ModelConfig { input_w: 10, ..cfg }, 0), Err(Error::Config(_))));
}

fn permute_tokens(t: &Tensor, perm: &[usize]) -> Tensor {
    let [b, n, d] = *t.shape() else { panic!("rank 3") };
    Tensor::from_fn([b, n, d], |i| {
        let (bi, k, j) = (i / (n * d), (i / d) % n, i % d);
        t.data()[(bi * n + perm[k]) * d + j]
    })
    .unwrap()
}

#[test]
fn boost_shape_and_spatial_equivariance() {
    let cfg = ModelConfig { use_rope: false, depthwise: false, ..small(SsmMode::Attn) };
    let model = Model::new(cfg.clone(), 9).unwrap();
    let (n, d) = (cfg.tokens(), cfg.embed_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let prompts = Tensor::randn([2, cfg.prompt_len, d], 0.5, &mut rng).unwrap();
    let visual = Tensor::randn([2, n, d], 1.0, &mut rng).unwrap();
    let run = |prompts: &Tensor, visual: &Tensor| {
        let mut g = Graph::new();
        let (p, _) = model.bind(&mut g, false).unwrap();
        let (pv, vv) = (g.constant(prompts.clone()), g.constant(visual.clone()));
        let y = integboost_forward(&mut g, pv, vv, &p.boost, cfg.grid(), model.ctx()).unwrap();
        g.value(y).clone()
    };
    let out = run(&prompts, &visual);
    assert_eq!(out.shape(), &[2, n, 2 * d]);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.reverse();
    perm.swap(3, 11);
    let permuted = run(&prompts, &permute_tokens(&visual, &perm));
    assert!(permute_tokens(&out, &perm).max_abs_diff(&permuted) < 1e-12);

    // Zero prompts: finite output whose global half does not vary over tokens.
    let zero = run(&Tensor::zeros([2, cfg.prompt_len, d]).unwrap(), &visual);
    assert!(zero.is_finite());
    for bi in 0..2 {
        let row = |k: usize| &zero.data()[(bi * n + k) * 2 * d + d..(bi * n + k + 1) * 2 * d];
        for k in 1..n {
            assert_eq!(row(k), row(0));
        }
    }
}

#[test]
fn fusion_reaches_both_streams_and_degenerates_without_text() {
    let cfg = small(SsmMode::Attn);
    let mut model = Model::new(cfg.clone(), 3).unwrap();
    let (n, d) = (cfg.tokens(), cfg.embed_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let visual = Tensor::randn([1, n, d], 1.0, &mut rng).unwrap();
    let text = Tensor::randn([1, n, 2 * d], 1.0, &mut rng).unwrap();

    let mut g = Graph::new();
    let (p, _) = model.bind(&mut g, false).unwrap();
    let (v, t) = (g.param(visual.clone()), g.param(text.clone()));
    let y = integration_fuse(&mut g, v, t, &p.fusion, cfg.grid(), model.ctx()).unwrap();
    assert_eq!(g.shape(y), &[1, n, 2 * d]);
    let r = g.constant(Tensor::randn([1, n, 2 * d], 1.0, &mut rng).unwrap());
    let y = g.mul(y, r).unwrap();
    let loss = g.sum(y).unwrap();
    g.backward(loss).unwrap();
    for (name, var) in [("visual", v), ("text", t)] {
        assert!(g.grad(var).unwrap().data().iter().any(|&x| x != 0.0), "no gradient to {name}");
    }

    for name in ["fusion.proj_t.w", "fusion.proj_t.b"] {
        let t = model.params_mut().get_mut(name).unwrap_or_else(|| panic!("{name}"));
        t.data_mut().fill(0.0);
    }
    let fuse = |text: Tensor| {
        let mut g = Graph::new();
        let (p, _) = model.bind(&mut g, false).unwrap();
        let (v, t) = (g.constant(visual.clone()), g.constant(text));
        let y = integration_fuse(&mut g, v, t, &p.fusion, cfg.grid(), model.ctx()).unwrap();
        g.value(y).clone()
    };
    let a = fuse(text.clone());
    let b = fuse(Tensor::randn([1, n, 2 * d], 3.0, &mut rng).unwrap());
    assert!(a.is_finite());
    assert_eq!(a, b);
}

#[test]
fn zero_head_decodes_to_one_half() {
    let cfg = small(SsmMode::Scan);
    let mut model = Model::new(cfg.clone(), 1).unwrap();
    for name in ["decoder.head.w", "decoder.head.b"] {
        model.params_mut().get_mut(name).unwrap_or_else(|| panic!("{name}")).data_mut().fill(0.0);
    }
    let pred = model.predict(&images(&cfg, 2, 4), &[(Modality::Facs, Task::Idd); 2]).unwrap();
    assert!(pred.probabilities.data().iter().all(|&p| p == 0.5));

    let mut g = Graph::new();
    let (p, _) = model.bind(&mut g, false).unwrap();
    let fused = g.constant(Tensor::zeros([1, cfg.tokens(), 2 * cfg.embed_dim]).unwrap());
    let z = decode_mask(&mut g, fused, &p.decoder, cfg.grid()).unwrap();
    assert_eq!(g.shape(z), &[1, 1, 16, 16]);
}

#[test]
fn weighted_bce_closed_forms() {
    let balanced = Tensor::from_fn([1, 1, 4, 4], |i| (i % 2) as f64).unwrap();
    assert_eq!(pos_weight_for(balanced.data()), 1.0);
    let mut g = Graph::new();
    let z = g.constant(Tensor::zeros([1, 1, 4, 4]).unwrap());
    let l = g.bce_with_logits(z, &balanced, 1.0).unwrap();
    assert!((g.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-9);

    let sparse = Tensor::from_fn([1, 1, 8, 8], |i| if i < 5 { 1.0 } else { 0.0 }).unwrap();
    let w = pos_weight_for(sparse.data());
    assert_eq!(w, 59.0 / 5.0);
    let perfect = Tensor::from_fn([1, 1, 8, 8], |i| if i < 5 { 20.0 } else { -20.0 }).unwrap();
    let z = g.constant(perfect);
    let l = g.bce_with_logits(z, &sparse, w).unwrap();
    assert!(g.value(l).item().unwrap() < 1e-6);
    assert_eq!(pos_weight_for(&[0.0; 10]), 20.0);
    assert_eq!(pos_weight_for(&[1.0; 10]), 1.0);
}

fn samples(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let image = Tensor::uniform([cfg.in_channels, cfg.input_h, cfg.input_w], 0.0, 1.0, &mut rng).unwrap();
            let w = cfg.input_w;
            let mask = Tensor::from_fn([1, cfg.input_h, w], |p| if (p / w + i) % 5 == 0 && p % w > 3 { 1.0 } else { 0.0 }).unwrap();
            Sample {
                image,
                mask,
                modality: Modality::ALL[i % 4],
                task: Task::Idd,
            }
        })
        .collect()
}

#[test]
fn train_step_reduces_loss_on_a_fixed_batch() {
    for mode in [SsmMode::Attn, SsmMode::Scan] {
        let cfg = small(mode);
        let mut model = Model::new(cfg.clone(), 2).unwrap();
        let data = samples(&cfg, 4, 1);
        let batch: Vec<&Sample> = data.iter().collect();
        let mut opt = Adam::default();
        let first = train_step(&mut model, &mut opt, &batch).unwrap();
        let mut last = first;
        for _ in 0..15 {
            last = train_step(&mut model, &mut opt, &batch).unwrap();
        }
        assert!(last < first, "{mode}: {first} -> {last}");
        assert_eq!(opt.step, 16);
        assert!((batch_loss(&model, &batch).unwrap() - last).abs() < first);
    }
}

#[test]
fn train_step_rejects_bad_batches() {
    let cfg = small(SsmMode::Attn);
    let mut model = Model::new(cfg.clone(), 2).unwrap();
    let mut opt = Adam::default();
    let mut data = samples(&cfg, 2, 1);
    data[1].mask.data_mut()[0] = 0.5;
    let batch: Vec<&Sample> = data.iter().collect();
    assert!(matches!(train_step(&mut model, &mut opt, &batch), Err(Error::InvalidArgument(_))));

    let mut data = samples(&cfg, 2, 1);
    data[0].image.data_mut()[3] = f64::NAN;
    let batch: Vec<&Sample> = data.iter().collect();
    assert!(matches!(train_step(&mut model, &mut opt, &batch), Err(Error::NonFinite { .. })));
    assert_eq!(opt.step, 0);
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    for mode in [SsmMode::Attn, SsmMode::Scan] {
        let cfg = small(mode);
        let data = samples(&cfg, 6, 8);
        let batches: Vec<Vec<&Sample>> = data.chunks(3).map(|c| c.iter().collect()).collect();

        let mut straight = Model::new(cfg.clone(), 4).unwrap();
        let mut opt = Adam::default();
        let mut losses = Vec::new();
        for step in 0..4 {
            losses.push(train_step(&mut straight, &mut opt, &batches[step % 2]).unwrap());
        }

        let mut model = Model::new(cfg.clone(), 4).unwrap();
        let mut opt = Adam::default();
        for step in 0..2 {
            train_step(&mut model, &mut opt, &batches[step % 2]).unwrap();
        }
        checkpoint::save(&path, &model, Some(&opt)).unwrap();
        let (mut loaded, loaded_opt) = checkpoint::load(&path).unwrap();
        let mut loaded_opt = loaded_opt.expect("optimizer state");
        assert_eq!(loaded.params(), model.params());
        assert_eq!(loaded.config(), model.config());
        assert_eq!(loaded_opt, opt);
        for step in 2..4 {
            let l = train_step(&mut loaded, &mut loaded_opt, &batches[step % 2]).unwrap();
            assert_eq!(l.to_bits(), losses[step].to_bits(), "{mode} step {step}");
        }
        assert_eq!(loaded.params(), straight.params());

        checkpoint::save(&path, &model, None).unwrap();
        let (again, none) = checkpoint::load(&path).unwrap();
        assert!(none.is_none());
        let x = images(&cfg, 1, 0);
        let keys = [(Modality::Macroscopy, Task::Cstd)];
        assert_eq!(again.predict(&x, &keys).unwrap(), model.predict(&x, &keys).unwrap());
    }
}

#[test]
fn checkpoint_rejects_foreign_and_truncated_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, b"NOTACKPT and more bytes").unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Checkpoint(_))));

    let model = Model::new(small(SsmMode::Attn), 0).unwrap();
    checkpoint::save(&path, &model, None).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], checkpoint::MAGIC);
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn block_preserves_shape_and_trains_every_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for mode in [SsmMode::Attn, SsmMode::Scan] {
        let cfg = ModelConfig { depth: 1, ssm_mode: mode, ..ModelConfig::default() };
        let model = Model::new(cfg.clone(), 6).unwrap();
        let mut g = Graph::new();
        let (p, names) = model.bind(&mut g, true).unwrap();
        let x = g.constant(Tensor::randn([2, 256, 64], 1.0, &mut rng).unwrap());
        let ctx = AttnCtx { rope: &model.ctx().rope_d, opts: model.ctx().opts };
        let y = integssm_block_forward(&mut g, x, &p.blocks[0], cfg.grid(), ctx).unwrap();
        assert_eq!(g.shape(y), &[2, 256, 64]);
        assert!(g.value(y).is_finite());
        let r = g.constant(Tensor::randn([2, 256, 64], 1.0, &mut rng).unwrap());
        let y = g.mul(y, r).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss).unwrap();
        let block: Vec<_> = names.iter().filter(|(n, _)| n.starts_with("encoder.block0.")).collect();
        assert!(block.len() >= 20);
        for (name, v) in block {
            let grad = g.grad(*v).unwrap_or_else(|| panic!("{mode}: {name} has no gradient"));
            assert!(grad.data().iter().any(|&x| x != 0.0), "{mode}: {name} has zero gradient");
        }
    }
}
