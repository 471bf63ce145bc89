use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::annotation::heuristic_annotate;

fn small_vocab(n: usize) -> Vocabulary {
    let words = std::iter::once(UNK.to_string())
        .chain((1..n).map(|i| format!("w{i:03}")))
        .collect();
    Vocabulary::from_words(words).unwrap()
}

fn small_model(seed: u64, d: usize, vocab: usize, pmax: usize) -> SpanModel {
    init_model(small_vocab(vocab), ModelConfig { d, pmax }, seed, DEFAULT_LR)
        .unwrap()
        .0
}

fn random_example(rng: &mut ChaCha8Rng, vocab: usize, n: usize, m: usize) -> Example {
    let start = rng.random_range(0..n);
    let end = rng.random_range(start..n);
    Example {
        window: (0..n).map(|_| rng.random_range(0..vocab)).collect(),
        question: (0..m).map(|_| rng.random_range(0..vocab)).collect(),
        start,
        end,
    }
}

#[test]
fn same_seed_same_parameters() {
    let a = small_model(7, 8, 30, 16);
    let b = small_model(7, 8, 30, 16);
    let c = small_model(8, 8, 30, 16);
    assert_eq!(a, b);
    assert_ne!(a.params, c.params);
}

#[test]
fn parameter_shapes() {
    let m = small_model(0, 8, 100, 16);
    assert_eq!(m.vocab.len(), 100);
    assert_eq!(m.params.e.len(), 800);
    assert_eq!(m.params.p.len(), 128);
    assert_eq!(m.params.w_start.len(), 64);
    assert_eq!(m.params.b_stop.len(), 8);
    assert!(m.params.e.iter().all(|x| x.abs() <= 0.05));
}

#[test]
fn rejects_degenerate_dimensions() {
    let r = init_model(small_vocab(5), ModelConfig { d: 1, pmax: 4 }, 0, DEFAULT_LR);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn zero_model_is_uniform() {
    let mut m = small_model(0, 8, 20, 16);
    for t in m.params.tensors_mut() {
        t.iter_mut().for_each(|x| *x = 0.0);
    }
    let (s, e) = forward(&m, &[1, 2, 3, 4, 5], &[6, 7]).unwrap();
    assert_eq!(s, vec![0.0; 5]);
    assert_eq!(e, vec![0.0; 5]);
    for n in [1usize, 2, 7, 12, 40] {
        let ex = Example {
            window: vec![3; n],
            question: vec![1],
            start: 0,
            end: n - 1,
        };
        let (loss, _) = loss_and_grad(&m, &[ex]).unwrap();
        assert!((loss - 2.0 * (n as f64).ln()).abs() < 1e-9, "n = {n}");
    }
}

#[test]
fn empty_question_and_bad_span_rejected() {
    let m = small_model(0, 4, 10, 8);
    assert!(matches!(forward(&m, &[1], &[]), Err(Error::EmptyQuestion)));
    let ex = Example {
        window: vec![1, 2],
        question: vec![3],
        start: 1,
        end: 2,
    };
    assert!(matches!(loss_and_grad(&m, &[ex]), Err(Error::SpanOutsideWindow { .. })));
}

#[test]
fn question_order_does_not_matter() {
    let m = small_model(3, 8, 20, 16);
    let a = forward(&m, &[1, 5, 9], &[2, 4, 6, 8]).unwrap();
    let b = forward(&m, &[1, 5, 9], &[8, 2, 6, 4]).unwrap();
    for (x, y) in a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn positions_past_the_table_share_the_last_row() {
    let m = small_model(3, 4, 10, 2);
    let (s, _) = forward(&m, &[5, 5, 5, 5], &[1]).unwrap();
    assert_ne!(s[0], s[1]);
    assert_eq!(s[1], s[2]);
    assert_eq!(s[2], s[3]);
}

/// Max relative error between the analytic gradient and central
/// differences with step `h`, over every coordinate.
fn max_gradient_error(model: &SpanModel, batch: &[Example], h: f64) -> f64 {
    let (_, grad) = loss_and_grad(model, batch).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for t in 0..6 {
        for k in 0..grad.tensors()[t].len() {
            let orig = probe.params.tensors_mut()[t][k];
            probe.params.tensors_mut()[t][k] = orig + h;
            let up = loss_and_grad(&probe, batch).unwrap().0;
            probe.params.tensors_mut()[t][k] = orig - h;
            let down = loss_and_grad(&probe, batch).unwrap().0;
            probe.params.tensors_mut()[t][k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad.tensors()[t][k];
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..4 {
        let mut model = small_model(seed, 8, 20, 16);
        for t in model.params.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= 10.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<Example> = (0..3).map(|_| random_example(&mut rng, 20, 12, 4)).collect();
        let err = max_gradient_error(&model, &batch, 1e-4);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn loss_falls_on_a_fixed_example() {
    let mut model = small_model(0, 16, 40, 32);
    let mut opt = Adam::new(&model.params, DEFAULT_LR);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ex = random_example(&mut rng, 40, 12, 4);
    let mut prev = f64::INFINITY;
    for step in 0..50 {
        let loss = train_step(&mut model, &mut opt, std::slice::from_ref(&ex)).unwrap();
        assert!(loss < prev, "step {step}: {loss} >= {prev}");
        prev = loss;
    }
}

#[test]
fn single_example_overfits() {
    let mut model = small_model(0, DEFAULT_DIM, 40, 32);
    let mut opt = Adam::new(&model.params, DEFAULT_LR);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ex = random_example(&mut rng, 40, 20, 5);
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        last = train_step(&mut model, &mut opt, std::slice::from_ref(&ex)).unwrap();
        if last < 0.01 {
            break;
        }
    }
    assert!(last < 0.01, "final loss {last}");
}

#[test]
fn training_is_bit_reproducible() {
    let run = || {
        let mut model = small_model(5, 8, 30, 16);
        let mut opt = Adam::new(&model.params, DEFAULT_LR);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch: Vec<Example> = (0..4).map(|_| random_example(&mut rng, 30, 10, 3)).collect();
        for _ in 0..20 {
            train_step(&mut model, &mut opt, &batch).unwrap();
        }
        (model, opt)
    };
    assert_eq!(run(), run());
}

#[test]
fn decode_by_inspection() {
    let logits = vec![(vec![5.0, 0.0, 0.0], vec![0.0, 0.0, 5.0])];
    assert_eq!(decode(&logits, 30), Some((0, 0, 2, 10.0)));
    assert_eq!(decode(&logits, 1), Some((0, 0, 0, 5.0)));
    let tied = vec![(vec![1.0, 1.0], vec![1.0, 1.0]), (vec![1.0], vec![1.0])];
    assert_eq!(decode(&tied, 30), Some((0, 0, 0, 2.0)));
}

fn brute_decode(logits: &[(Vec<f64>, Vec<f64>)], max_len: usize) -> Option<(usize, usize, usize, f64)> {
    let mut all = Vec::new();
    for (w, (s, e)) in logits.iter().enumerate() {
        for i in 0..s.len() {
            for j in 0..e.len() {
                if i <= j && j - i < max_len {
                    all.push((w, i, j, s[i] + e[j]));
                }
            }
        }
    }
    let best = all.iter().map(|t| t.3).fold(f64::NEG_INFINITY, f64::max);
    all.into_iter().find(|t| t.3 == best)
}

#[test]
fn decode_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let windows = rng.random_range(1..4);
        let logits: Vec<(Vec<f64>, Vec<f64>)> = (0..windows)
            .map(|_| {
                let n = rng.random_range(1..50);
                // Coarse values so ties actually occur.
                let mut draw = || (0..n).map(|_| rng.random_range(-3i32..4) as f64).collect();
                (draw(), draw())
            })
            .collect();
        let max_len = rng.random_range(1..35);
        assert_eq!(decode(&logits, max_len), brute_decode(&logits, max_len));
    }
}

#[test]
fn prediction_maps_back_to_characters() {
    let ctx = heuristic_annotate("p", "Rollo met Zoë in Köln.").unwrap();
    let vocab = Vocabulary::for_corpus([&ctx], ["Who met Rollo?"]);
    let (model, _) = init_model(vocab, ModelConfig::default(), 0, DEFAULT_LR).unwrap();
    let p = predict_span(&model, &ctx, "Who met Rollo?", MAX_ANSWER_LEN).unwrap();
    assert_eq!(ctx.slice_chars(p.start_char, p.end_char), p.text);
    assert!(p.end_char > p.start_char);
}

#[test]
fn examples_cover_each_window_holding_the_answer() {
    let text = (0..500).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let ctx = heuristic_annotate("long", &text).unwrap();
    let model = init_model(
        Vocabulary::for_corpus([&ctx], []),
        ModelConfig::default(),
        0,
        DEFAULT_LR,
    )
    .unwrap()
    .0;
    let at = |tok: usize| ctx.tokens[tok].start_char;
    let qa = |s: usize, e: usize| SyntheticQa {
        context_id: "long".into(),
        method: crate::qgen::Method::Template,
        question: "What w1?".into(),
        answer_text: ctx.slice_chars(at(s), ctx.tokens[e - 1].end_char).into(),
        start_char: at(s),
        end_char: ctx.tokens[e - 1].end_char,
    };
    // Tokens 200..202 sit in both windows; 10..12 only in the first.
    let both = examples_for(&model, &ctx, &qa(200, 202));
    assert_eq!(both.len(), 2);
    assert_eq!((both[0].start, both[0].end), (200, 201));
    assert_eq!((both[1].start, both[1].end), (72, 73));
    assert_eq!(examples_for(&model, &ctx, &qa(10, 12)).len(), 1);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut model = small_model(9, 8, 25, 16);
    let mut opt = Adam::new(&model.params, 0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch: Vec<Example> = (0..3).map(|_| random_example(&mut rng, 25, 10, 3)).collect();
    for _ in 0..5 {
        train_step(&mut model, &mut opt, &batch).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&path, &model, Some(&opt)).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.model, model);
    assert_eq!(back.optim.as_ref(), Some(&opt));

    save_checkpoint(&path, &model, None).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap().optim, None);

    let bytes = std::fs::read(&path).unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(Checkpoint::from_bytes(b"nonsense").is_err());
}

#[test]
fn checkpoint_dimension_mismatch() {
    let ck = Checkpoint {
        model: small_model(0, 8, 10, 16),
        optim: None,
    };
    assert!(ck.check_config(ModelConfig { d: 8, pmax: 16 }).is_ok());
    assert!(matches!(
        ck.check_config(ModelConfig { d: 16, pmax: 16 }),
        Err(Error::CheckpointMismatch(_))
    ));
}

#[test]
fn vocabulary_extension_keeps_old_rows() {
    let mut model = small_model(0, 4, 10, 8);
    let mut opt = Adam::new(&model.params, DEFAULT_LR);
    let before = model.params.e.clone();
    let added = model.extend_vocab(["fresh", "w001", "newer"], 3, Some(&mut opt));
    assert_eq!(added, 2);
    assert_eq!(model.params.e.len(), 12 * 4);
    assert_eq!(&model.params.e[..40], &before[..]);
    assert_eq!(opt.m.e.len(), 48);
    assert!(model.params.e[40..].iter().all(|x| x.abs() <= 0.05 && *x != 0.0));
}

#[test]
fn head_reset_leaves_features() {
    let mut m = small_model(0, 4, 10, 8);
    let features = m.feature_digest();
    let head = m.head_digest();
    m.reset_head(99);
    assert_eq!(m.feature_digest(), features);
    assert_ne!(m.head_digest(), head);
}

#[test]
fn zero_step_pretraining_is_initialization() {
    let ctx = heuristic_annotate("a", "Rollo reached Paris in 911. Alice founded Acme.").unwrap();
    let cfg = PretrainConfig {
        steps: 0,
        ..PretrainConfig::default()
    };
    let (model, opt, pairs) = pretrain(std::slice::from_ref(&ctx), &[], &cfg).unwrap();
    assert!(!pairs.is_empty());
    let (fresh, fresh_opt) = init_model(model.vocab.clone(), cfg.model, cfg.seed, cfg.lr).unwrap();
    assert_eq!(model, fresh);
    assert_eq!(opt, fresh_opt);
}

#[test]
fn pretraining_without_pairs_fails() {
    let ctx = heuristic_annotate("a", "the cat sat.").unwrap();
    let r = pretrain(&[ctx], &[], &PretrainConfig::default());
    assert!(matches!(r, Err(Error::NoTrainablePairs(_))));
}

#[test]
fn batcher_epochs_cover_everything() {
    let mut b = Batcher::new(10, true, 4);
    let mut seen: Vec<usize> = (0..5).flat_map(|_| b.next_batch(2)).collect();
    seen.sort();
    assert_eq!(seen, (0..10).collect::<Vec<_>>());
    let mut seq = Batcher::new(5, false, 0);
    assert_eq!(seq.next_batch(3), [0, 1, 2]);
    assert_eq!(seq.next_batch(3), [3, 4, 0]);
    assert_eq!(seq.next_batch(9), [1, 2, 3, 4, 0]);
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn heads_give_distributions(seed in 0u64..500, n in 1usize..30, m in 1usize..6) {
        let model = small_model(seed, 8, 30, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex = random_example(&mut rng, 30, n, m);
        let (s, e) = forward(&model, &ex.window, &ex.question).unwrap();
        prop_assert_eq!(s.len(), n);
        prop_assert!((softmax(&s).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!((softmax(&e).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
