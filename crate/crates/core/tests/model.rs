use bidc_core::corpus::{Sample, PAD};
use bidc_core::model::{param_census, Batch, LabeledBatch, Mode, Model, ModelConfig, ModelParams, Side};
use bidc_core::numeric::{Array, Graph};
use bidc_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(mode: Mode) -> ModelConfig {
    let interacts = matches!(mode, Mode::BiDc | Mode::D2c);
    ModelConfig {
        vocab_size: 30,
        d_h: 8,
        d_ff: 12,
        n_heads: 2,
        det_depth: if interacts { 2 } else { 0 },
        cor_depth: 2,
        layers: if interacts { 2 } else { 0 },
        max_len: 16,
        mode,
        ..Default::default()
    }
}

fn sentences(rng: &mut ChaCha8Rng, count: usize, vocab: usize, max: usize) -> Vec<Vec<usize>> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=max);
            (0..n).map(|_| rng.random_range(2..vocab)).collect()
        })
        .collect()
}

fn labeled(rng: &mut ChaCha8Rng, count: usize, vocab: usize, max: usize) -> LabeledBatch {
    let samples: Vec<Sample> = sentences(rng, count, vocab, max)
        .into_iter()
        .map(|target| {
            let source = target
                .iter()
                .map(|&t| if rng.random_bool(0.3) { rng.random_range(2..vocab) } else { t })
                .collect();
            Sample::new(source, target).unwrap()
        })
        .collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    LabeledBatch::from_samples(&refs)
}

fn set(model: &mut Model, name: &str, shape: &[usize], data: &[f64]) {
    let p = model.params_mut().get_mut(name).unwrap_or_else(|| panic!("no parameter {name}"));
    assert_eq!(p.shape(), shape, "{name}");
    p.data_mut().copy_from_slice(data);
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "element {i}: {x} vs {y}");
    }
}

fn layer_norm_rows(x: &[f64], d: usize, eps: f64) -> Vec<f64> {
    x.chunks(d)
        .flat_map(|row| {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            row.iter().map(move |v| (v - mean) / (var + eps).sqrt()).collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn d2c_is_bidc_with_detection_gate_fixed_at_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..3 {
        let batch = Batch::from_sequences(&sentences(&mut rng, 4, 30, 16));
        let d2c = Model::new(small(Mode::D2c), seed).unwrap();
        let bidc = Model::new(
            ModelConfig { gate_override_alpha: Some(0.0), ..small(Mode::BiDc) },
            seed,
        )
        .unwrap();
        assert_eq!(d2c.params(), bidc.params());
        assert_eq!(d2c.forward(&batch).unwrap(), bidc.forward(&batch).unwrap());
    }
}

#[test]
fn appended_padding_leaves_real_positions_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for mode in Mode::ALL {
        let model = Model::new(small(mode), 11).unwrap();
        let seqs = sentences(&mut rng, 5, 30, 10);
        let tight = Batch::from_sequences(&seqs);
        let loose = Batch::padded(&seqs, tight.seq_len + 5).unwrap();
        let a = model.forward(&tight).unwrap();
        let b = model.forward(&loose).unwrap();
        let v = model.config().vocab_size;
        for (s, seq) in seqs.iter().enumerate() {
            for i in 0..seq.len() {
                let ra = s * tight.seq_len + i;
                let rb = s * loose.seq_len + i;
                assert_close(a.cor_logits.row(ra), b.cor_logits.row(rb), 1e-9);
                if let (Some(da), Some(db)) = (&a.det_logits, &b.det_logits) {
                    assert_close(da.row(ra), db.row(rb), 1e-9);
                }
                assert_eq!(a.cor_logits.row(ra).len(), v);
            }
        }
    }
}

#[test]
fn masked_positions_do_not_leak_into_real_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = Model::new(small(Mode::BiDc), 2).unwrap();
    let seqs = sentences(&mut rng, 3, 30, 8);
    let clean = Batch::padded(&seqs, 12).unwrap();
    let mut noisy = clean.clone();
    for (id, &real) in noisy.ids.iter_mut().zip(&clean.mask) {
        if !real {
            *id = rng.random_range(2..30);
        }
    }
    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());
    let xa = model.embed(&mut g, &p, &clean).unwrap();
    let xb = model.embed(&mut g, &p, &noisy).unwrap();
    for side in [Side::Detection, Side::Correction] {
        let ha = model.encode(&mut g, &p, xa, &clean, side).unwrap();
        let hb = model.encode(&mut g, &p, xb, &noisy, side).unwrap();
        for r in (0..clean.rows()).filter(|&r| clean.mask[r]) {
            assert_close(g.value(ha).row(r), g.value(hb).row(r), 1e-10);
        }
    }
    let a = model.forward(&clean).unwrap();
    let b = model.forward(&noisy).unwrap();
    for r in (0..clean.rows()).filter(|&r| clean.mask[r]) {
        assert_close(a.cor_logits.row(r), b.cor_logits.row(r), 1e-10);
    }
}

#[test]
fn census_matches_allocation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let mode = Mode::ALL[rng.random_range(0..4)];
        let heads = rng.random_range(1..=3);
        let interacts = matches!(mode, Mode::BiDc | Mode::D2c);
        let cfg = ModelConfig {
            vocab_size: rng.random_range(2..60),
            d_h: heads * rng.random_range(1..6),
            d_ff: rng.random_range(1..20),
            n_heads: heads,
            det_depth: if interacts { rng.random_range(1..4) } else { rng.random_range(0..3) },
            cor_depth: rng.random_range(1..4),
            layers: if interacts { rng.random_range(1..4) } else { rng.random_range(0..3) },
            max_len: rng.random_range(1..40),
            mode,
            ..Default::default()
        };
        if cfg.validate().is_err() {
            continue;
        }
        let params = ModelParams::init(&cfg, 0);
        assert_eq!(param_census(&cfg), params.element_count(), "{cfg:?}");
    }
}

#[test]
fn c_only_is_a_strict_subset() {
    let bidc = ModelParams::init(&small(Mode::BiDc), 0);
    let c_only = ModelParams::init(&small(Mode::COnly), 0);
    assert!(c_only.element_count() < bidc.element_count());
    assert!(c_only.names().iter().all(|n| bidc.names().contains(n)));
    assert!(!c_only.names().iter().any(|n| n.starts_with("det_") || n.starts_with("interaction")));
}

#[test]
fn gate_linear_maps_take_both_streams() {
    let cfg = small(Mode::BiDc);
    let p = ModelParams::init(&cfg, 0);
    for name in ["interaction.1.det_gate.w", "interaction.1.cor_gate.w"] {
        assert_eq!(p.get(name).unwrap().shape(), &[2 * cfg.d_h, cfg.d_h]);
    }
    assert_eq!(p.get("interaction.0.fuse1.w").unwrap().shape(), &[2 * cfg.d_h, cfg.d_ff]);
    assert_eq!(p.get("interaction.0.fuse2.w").unwrap().shape(), &[cfg.d_ff, cfg.d_h]);
}

#[test]
fn loss_is_affine_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = labeled(&mut rng, 4, 30, 12);
    for mode in [Mode::BiDc, Mode::D2c, Mode::TwoHead] {
        let model = Model::new(small(mode), 1).unwrap();
        let l0 = model.loss(&batch, 0.0).unwrap();
        let l1 = model.loss(&batch, 1.0).unwrap();
        let lh = model.loss(&batch, 0.5).unwrap();
        assert_eq!(l0.total, l0.det.unwrap());
        assert_eq!(l1.total, l1.cor);
        assert!((lh.total - (l0.total + l1.total) / 2.0).abs() <= 1e-12);
        let l8 = model.loss(&batch, 0.8).unwrap();
        assert!((l8.total - (0.8 * l1.total + 0.2 * l0.total)).abs() <= 1e-12);
    }
    let c_only = Model::new(small(Mode::COnly), 1).unwrap();
    for lambda in [0.0, 0.3, 1.0] {
        let l = c_only.loss(&batch, lambda).unwrap();
        assert_eq!(l.total, l.cor);
        assert_eq!(l.det, None);
    }
}

#[test]
fn loss_needs_a_real_position() {
    let model = Model::new(small(Mode::BiDc), 0).unwrap();
    let empty = Sample::new(vec![], vec![]).unwrap();
    let batch = LabeledBatch::padded(&[&empty], 3).unwrap();
    assert_eq!(model.loss(&batch, 0.8), Err(Error::EmptyLoss));
}

#[test]
fn learned_gates_stay_inside_the_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..3 {
        let model = Model::new(small(Mode::BiDc), seed).unwrap();
        let t = model.forward(&Batch::from_sequences(&sentences(&mut rng, 6, 30, 16))).unwrap();
        assert_eq!(t.alphas.len(), 2);
        for gate in t.alphas.iter().chain(&t.betas) {
            assert_eq!(gate.shape()[1], 8);
            assert!(gate.data().iter().all(|&x| x > 0.0 && x < 1.0));
        }
        assert!(t.cor_logits.all_finite());
        assert!(t.det_logits.unwrap().all_finite());
    }
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = Batch::from_sequences(&sentences(&mut rng, 3, 30, 16));
    let a = Model::new(small(Mode::BiDc), 42).unwrap().forward(&batch).unwrap();
    let b = Model::new(small(Mode::BiDc), 42).unwrap().forward(&batch).unwrap();
    assert_eq!(a, b);
    let c = Model::new(small(Mode::BiDc), 43).unwrap().forward(&batch).unwrap();
    assert_ne!(a.cor_logits, c.cor_logits);
}

#[test]
fn embedding_adds_token_and_position_rows() {
    let cfg = ModelConfig { d_h: 4, n_heads: 1, ..small(Mode::BiDc) };
    let mut model = Model::new(cfg, 0).unwrap();
    let zeros = [0.0; 4];
    let token = model.params().get("embed.token").unwrap().clone();
    let mut t = token.clone();
    t.data_mut()[5 * 4..6 * 4].copy_from_slice(&zeros);
    set(&mut model, "embed.token", &[30, 4], t.data());
    let mut pos = model.params().get("embed.position").unwrap().clone();
    pos.data_mut()[..4].copy_from_slice(&zeros);
    set(&mut model, "embed.position", &[16, 4], pos.data());

    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());
    let x = model.embed(&mut g, &p, &Batch::from_sequences(&[vec![5]])).unwrap();
    assert_eq!(g.value(x).data(), &zeros);

    let x = model.embed(&mut g, &p, &Batch::from_sequences(&[vec![7, 7]])).unwrap();
    let x = g.value(x);
    for c in 0..4 {
        let diff = x.get2(1, c) - x.get2(0, c);
        assert!((diff - (pos.get2(1, c) - pos.get2(0, c))).abs() < 1e-15);
        assert!((x.get2(1, c) - token.get2(7, c) - pos.get2(1, c)).abs() < 1e-15);
    }
    let too_long = Batch::from_sequences(&[vec![2; 17]]);
    assert_eq!(model.embed(&mut g, &p, &too_long), Err(Error::Length { len: 17, max: 16 }));
}

fn two_dim_model() -> Model {
    let cfg = ModelConfig {
        vocab_size: 6,
        d_h: 2,
        d_ff: 3,
        n_heads: 1,
        det_depth: 1,
        cor_depth: 1,
        layers: 1,
        max_len: 4,
        ..Default::default()
    };
    Model::new(cfg, 0).unwrap()
}

#[test]
fn cross_attention_matches_hand_computation() {
    let mut model = two_dim_model();
    let wq = [0.5, -1.0, 0.25, 2.0];
    let bq = [0.1, -0.2];
    let wk = [1.0, 0.5, -0.5, 1.5];
    let wv = [2.0, 0.0, 1.0, -1.0];
    let bv = [0.3, 0.4];
    set(&mut model, "interaction.0.det_attn.q.w", &[2, 2], &wq);
    set(&mut model, "interaction.0.det_attn.q.b", &[2], &bq);
    set(&mut model, "interaction.0.det_attn.k.w", &[2, 2], &wk);
    set(&mut model, "interaction.0.det_attn.v.w", &[2, 2], &wv);
    set(&mut model, "interaction.0.det_attn.v.b", &[2], &bv);

    let det = [[1.0, 2.0], [-0.5, 0.5]];
    let cor = [[0.2, -1.0], [1.5, 0.7]];
    let proj = |x: [f64; 2], w: &[f64; 4], b: [f64; 2]| {
        [x[0] * w[0] + x[1] * w[2] + b[0], x[0] * w[1] + x[1] * w[3] + b[1]]
    };
    let q: Vec<[f64; 2]> = det.iter().map(|&x| proj(x, &wq, bq)).collect();
    let k: Vec<[f64; 2]> = cor.iter().map(|&x| proj(x, &wk, [0.0; 2])).collect();
    let v: Vec<[f64; 2]> = cor.iter().map(|&x| proj(x, &wv, bv)).collect();
    let mut expected = Vec::new();
    for qi in &q {
        let s: Vec<f64> = k.iter().map(|kj| (qi[0] * kj[0] + qi[1] * kj[1]) / 2f64.sqrt()).collect();
        let z: f64 = s.iter().map(|x| x.exp()).sum();
        let w: Vec<f64> = s.iter().map(|x| x.exp() / z).collect();
        expected.push(w[0] * v[0][0] + w[1] * v[1][0]);
        expected.push(w[0] * v[0][1] + w[1] * v[1][1]);
    }

    let batch = Batch::from_sequences(&[vec![2, 3]]);
    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());
    let d = g.constant(Array::new(vec![2, 2], det.concat()).unwrap());
    let c = g.constant(Array::new(vec![2, 2], cor.concat()).unwrap());
    let out = model.cross_attend(&mut g, &p, d, c, &batch, Side::Detection, 0).unwrap();
    assert_close(g.value(out).data(), &expected, 1e-12);
}

#[test]
fn cross_attention_degenerate_cases() {
    let model = two_dim_model();
    let wv = model.params().get("interaction.0.cor_attn.v.w").unwrap().clone();
    let bv = model.params().get("interaction.0.cor_attn.v.b").unwrap().clone();
    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());

    // a single key receives all the weight
    let one = Batch::from_sequences(&[vec![2]]);
    let q = g.constant(Array::new(vec![1, 2], vec![0.7, -0.3]).unwrap());
    let kv = [1.2, -0.4];
    let k = g.constant(Array::new(vec![1, 2], kv.to_vec()).unwrap());
    let out = model.cross_attend(&mut g, &p, q, k, &one, Side::Correction, 0).unwrap();
    let v_row: Vec<f64> = (0..2).map(|c| kv[0] * wv.get2(0, c) + kv[1] * wv.get2(1, c) + bv.data()[c]).collect();
    assert_close(g.value(out).data(), &v_row, 1e-12);

    // identical key rows spread attention evenly, so every output is the
    // value mean; identical kv rows also make that the shared value row
    let three = Batch::from_sequences(&[vec![2, 3, 4]]);
    let q = g.constant(Array::new(vec![3, 2], vec![0.1, 0.2, -1.0, 3.0, 0.5, 0.5]).unwrap());
    let kv3 = g.constant(Array::new(vec![3, 2], [kv, kv, kv].concat()).unwrap());
    let out = model.cross_attend(&mut g, &p, q, kv3, &three, Side::Correction, 0).unwrap();
    assert_close(g.value(out).data(), &[v_row.clone(), v_row.clone(), v_row].concat(), 1e-12);
}

#[test]
fn gate_overrides_select_one_input() {
    let model = two_dim_model();
    let eps = model.config().ln_eps;
    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());
    let tilde = [0.3, -1.2, 2.0, 0.4];
    let prev = [1.0, 0.5, -0.7, 0.9];
    let ht = g.constant(Array::new(vec![2, 2], tilde.to_vec()).unwrap());
    let hp = g.constant(Array::new(vec![2, 2], prev.to_vec()).unwrap());
    for side in [Side::Detection, Side::Correction] {
        let (out, gate) = model.gated_merge(&mut g, &p, ht, hp, side, 0, Some(0.0)).unwrap();
        assert_close(g.value(out).data(), &layer_norm_rows(&prev, 2, eps), 1e-12);
        assert!(g.value(gate).data().iter().all(|&x| x == 0.0));
        let (out, _) = model.gated_merge(&mut g, &p, ht, hp, side, 0, Some(1.0)).unwrap();
        assert_close(g.value(out).data(), &layer_norm_rows(&tilde, 2, eps), 1e-12);
        let (_, gate) = model.gated_merge(&mut g, &p, ht, hp, side, 0, None).unwrap();
        assert!(g.value(gate).data().iter().all(|&x| x > 0.0 && x < 1.0));
        assert!(matches!(
            model.gated_merge(&mut g, &p, ht, hp, side, 0, Some(1.5)),
            Err(Error::Config(_))
        ));
    }
}

#[test]
fn fusion_with_zero_weights_adds_the_output_bias() {
    let mut model = two_dim_model();
    let eps = model.config().ln_eps;
    set(&mut model, "interaction.0.fuse1.w", &[4, 3], &[0.0; 12]);
    set(&mut model, "interaction.0.fuse2.w", &[3, 2], &[0.0; 6]);
    set(&mut model, "interaction.0.fuse2.b", &[2], &[0.25, -0.5]);
    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());
    let det = [0.3, -1.2, 2.0, 0.4];
    let cor = [1.0, 0.5, -0.7, 0.9];
    let d = g.constant(Array::new(vec![2, 2], det.to_vec()).unwrap());
    let c = g.constant(Array::new(vec![2, 2], cor.to_vec()).unwrap());
    let (hd, hc) = model.fuse_ffn(&mut g, &p, d, c, 0).unwrap();
    let shifted = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(i, v)| v + [0.25, -0.5][i % 2]).collect() };
    assert_close(g.value(hd).data(), &layer_norm_rows(&shifted(&det), 2, eps), 1e-12);
    assert_close(g.value(hc).data(), &layer_norm_rows(&shifted(&cor), 2, eps), 1e-12);
}

#[test]
fn fusion_is_symmetric_under_stream_swap() {
    let model = two_dim_model();
    let mut swapped = model.clone();
    let w1 = model.params().get("interaction.0.fuse1.w").unwrap().clone();
    // rows 0..2 act on the detection half of the input, rows 2..4 on the
    // correction half
    let mut perm = w1.clone();
    perm.data_mut()[..6].copy_from_slice(&w1.data()[6..]);
    perm.data_mut()[6..].copy_from_slice(&w1.data()[..6]);
    set(&mut swapped, "interaction.0.fuse1.w", &[4, 3], perm.data());

    let det = Array::new(vec![3, 2], vec![0.3, -1.2, 2.0, 0.4, -0.1, 0.8]).unwrap();
    let cor = Array::new(vec![3, 2], vec![1.0, 0.5, -0.7, 0.9, 0.6, -0.2]).unwrap();
    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());
    let ps = swapped.bind(&mut g, swapped.params().values());
    let d = g.constant(det);
    let c = g.constant(cor);
    let (hd, hc) = model.fuse_ffn(&mut g, &p, d, c, 0).unwrap();
    let (sd, sc) = swapped.fuse_ffn(&mut g, &ps, c, d, 0).unwrap();
    assert_close(g.value(hd).data(), g.value(sc).data(), 1e-10);
    assert_close(g.value(hc).data(), g.value(sd).data(), 1e-10);
}

#[test]
fn prediction_follows_rigged_heads() {
    let cfg = ModelConfig { vocab_size: 6, d_h: 4, d_ff: 4, n_heads: 1, max_len: 6, ..Default::default() };
    let mut model = Model::new(cfg, 7).unwrap();
    let batch = Batch::from_sequences(&[vec![2, 3, 4, 5], vec![5, 4]]);

    // zero weights with equal biases: every correction logit ties, so the
    // input survives; detection ties resolve to label 0
    set(&mut model, "cor_head.w", &[4, 6], &[0.0; 24]);
    set(&mut model, "cor_head.b", &[6], &[0.0; 6]);
    set(&mut model, "det_head.w", &[4, 2], &[0.0; 8]);
    set(&mut model, "det_head.b", &[2], &[0.0; 2]);
    let preds = model.predict(&batch).unwrap();
    assert_eq!(preds[0].corrected, vec![2, 3, 4, 5]);
    assert_eq!(preds[1].corrected, vec![5, 4]);
    assert_eq!(preds[0].det_labels.as_deref(), Some(&[0, 0, 0, 0][..]));

    // a dominant bias wins everywhere
    set(&mut model, "cor_head.b", &[6], &[0.0, 0.0, 0.0, 9.0, 0.0, 0.0]);
    set(&mut model, "det_head.b", &[2], &[0.0, 1.0]);
    let preds = model.predict(&batch).unwrap();
    assert_eq!(preds[1].corrected, vec![3, 3]);
    assert_eq!(preds[1].det_labels.as_deref(), Some(&[1, 1][..]));

    // random heads: compare with an argmax over the final states
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let wc: Vec<f64> = (0..24).map(|_| rng.random_range(-2.0..2.0)).collect();
    let wd: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    set(&mut model, "cor_head.w", &[4, 6], &wc);
    set(&mut model, "cor_head.b", &[6], &[0.0; 6]);
    set(&mut model, "det_head.w", &[4, 2], &wd);
    set(&mut model, "det_head.b", &[2], &[0.0; 2]);
    let trace = model.forward(&batch).unwrap();
    let preds = model.predict(&batch).unwrap();
    let argmax = |h: &[f64], w: &[f64], width: usize| {
        let logits: Vec<f64> = (0..width).map(|j| (0..4).map(|i| h[i] * w[i * width + j]).sum()).collect();
        (0..width).fold(0, |best, j| if logits[j] > logits[best] { j } else { best })
    };
    for (b, pred) in preds.iter().enumerate() {
        for i in 0..batch.lengths[b] {
            let r = b * batch.seq_len + i;
            assert_eq!(pred.corrected[i], argmax(trace.cor_state.row(r), &wc, 6));
            let det = trace.det_state.as_ref().unwrap().row(r);
            assert_eq!(usize::from(pred.det_labels.as_ref().unwrap()[i]), argmax(det, &wd, 2));
        }
    }
}

#[test]
fn c_only_has_no_detector() {
    let model = Model::new(small(Mode::COnly), 0).unwrap();
    let batch = Batch::from_sequences(&[vec![2, 3]]);
    let t = model.forward(&batch).unwrap();
    assert!(t.det_logits.is_none() && t.det_state.is_none());
    assert!(model.predict(&batch).unwrap()[0].det_labels.is_none());
    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());
    let x = model.embed(&mut g, &p, &batch).unwrap();
    assert!(matches!(model.encode(&mut g, &p, x, &batch, Side::Detection), Err(Error::Config(_))));
}

#[test]
fn encoder_output_has_hidden_width() {
    let model = Model::new(small(Mode::BiDc), 0).unwrap();
    let mut g = Graph::new();
    let p = model.bind(&mut g, model.params().values());
    for n in [1, 7, 16] {
        let batch = Batch::from_sequences(&[vec![PAD + 2; n]]);
        let x = model.embed(&mut g, &p, &batch).unwrap();
        for side in [Side::Detection, Side::Correction] {
            let h = model.encode(&mut g, &p, x, &batch, side).unwrap();
            assert_eq!(g.value(h).shape(), &[n, 8]);
        }
    }
    let zero_depth = ModelConfig { det_depth: 0, ..small(Mode::BiDc) };
    assert!(matches!(Model::new(zero_depth, 0), Err(Error::Config(_))));
}
