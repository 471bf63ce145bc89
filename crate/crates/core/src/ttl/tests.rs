use super::*;
use crate::annotation::ContextBuilder;
use crate::bench::planted_facts;

fn small(mode: Mode) -> TtlConfig {
    TtlConfig {
        mode,
        k: 3,
        steps: Some(20),
        model: ModelConfig { d: 8, pmax: 384 },
        seed: 7,
        ..TtlConfig::default()
    }
}

fn strip_mode(mut records: Vec<RunRecord>) -> Vec<RunRecord> {
    for r in &mut records {
        r.mode = Mode::Single;
    }
    records
}

#[test]
fn mode_names_round_trip() {
    for m in Mode::ALL {
        assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        assert_eq!(
            serde_json::from_str::<Mode>(&serde_json::to_string(&m).unwrap()).unwrap(),
            m
        );
    }
    assert_eq!("K-NEIGHBOR-ONLINE".parse::<Mode>().unwrap(), Mode::KNeighborOnline);
    assert!("sometimes".parse::<Mode>().is_err());
}

#[test]
fn config_defaults_and_ceilings() {
    let cfg = TtlConfig::default();
    cfg.validate().unwrap();
    assert_eq!(cfg.steps(), DEFAULT_STEPS);
    assert_eq!(
        TtlConfig {
            mode: Mode::SingleOnline,
            ..cfg.clone()
        }
        .steps(),
        DEFAULT_ONLINE_STEPS
    );

    let bad = [
        TtlConfig {
            steps: Some(1501),
            ..cfg.clone()
        },
        TtlConfig {
            batch: 8,
            ..cfg.clone()
        },
        TtlConfig {
            batch: 65,
            ..cfg.clone()
        },
        TtlConfig {
            mode: Mode::KNeighbor,
            k: 0,
            ..cfg.clone()
        },
        TtlConfig {
            mode: Mode::KNeighbor,
            k: 501,
            ..cfg.clone()
        },
        TtlConfig { lr: 0.0, ..cfg.clone() },
        TtlConfig {
            qa_cap: 0,
            ..cfg.clone()
        },
        TtlConfig {
            workers: Some(0),
            ..cfg.clone()
        },
    ];
    for b in bad {
        assert!(matches!(b.validate(), Err(Error::Config(_))), "{b:?}");
    }
    TtlConfig {
        batch: 8,
        allow_any_batch: true,
        ..cfg.clone()
    }
    .validate()
    .unwrap();
    TtlConfig {
        steps: Some(1500),
        ..cfg
    }
    .validate()
    .unwrap();
}

#[test]
fn config_serde_rejects_unknown_keys() {
    let cfg = TtlConfig {
        mode: Mode::Curriculum,
        order: "qa_srl>template>dep_parse".parse().unwrap(),
        init: Init::Checkpoint("model.ckpt".into()),
        steps: Some(40),
        ..TtlConfig::default()
    };
    let json = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<TtlConfig>(&json).unwrap(), cfg);
    let partial: TtlConfig = serde_json::from_str(r#"{"mode": "k_neighbor", "k": 9}"#).unwrap();
    assert_eq!(partial.k, 9);
    assert_eq!(partial.batch, DEFAULT_BATCH);
    assert!(serde_json::from_str::<TtlConfig>(r#"{"neighbours": 3}"#).is_err());
}

#[test]
fn runs_are_deterministic_across_worker_counts() {
    let corpus = planted_facts(4, 1).unwrap();
    let one = TtlConfig {
        workers: Some(1),
        ..small(Mode::Single)
    };
    let four = TtlConfig {
        workers: Some(4),
        ..small(Mode::Single)
    };
    let a = run(&prepare(&corpus, &one).unwrap()).unwrap();
    let b = run(&prepare(&corpus, &four).unwrap()).unwrap();
    let c = run(&prepare(&corpus, &four).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(b, c);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    for r in &a {
        r.check_limits(&one, corpus.questions_for(&r.context_id).count())
            .unwrap();
        assert_eq!(r.steps, 20);
        assert!(r.trained);
    }
}

#[test]
fn single_context_runs_are_isolated_from_order() {
    let corpus = planted_facts(4, 2).unwrap();
    let mut reversed = corpus.clone();
    reversed.contexts.reverse();
    for mode in [Mode::Single, Mode::KNeighbor] {
        let fwd = run(&prepare(&corpus, &small(mode)).unwrap()).unwrap();
        let mut back = run(&prepare(&reversed, &small(mode)).unwrap()).unwrap();
        back.reverse();
        assert_eq!(fwd, back, "{mode}");
    }
    let prep = prepare(&corpus, &small(Mode::Single)).unwrap();
    let ctx = &corpus.contexts[2];
    let qs: Vec<_> = corpus.questions_for(&ctx.id).collect();
    let alone = run_single_context(&prep, ctx, &qs).unwrap();
    assert_eq!(alone, run(&prep).unwrap()[2]);
}

#[test]
fn online_state_carries_over() {
    let corpus = planted_facts(3, 3).unwrap();
    let prep = prepare(&corpus, &small(Mode::SingleOnline)).unwrap();
    let mut session = OnlineSession::new(&prep);
    assert!(session.model().is_none());
    let mut last: Option<SpanModel> = None;
    let mut records = Vec::new();
    for ctx in &corpus.contexts {
        let qs: Vec<_> = corpus.questions_for(&ctx.id).collect();
        let r = session.step(ctx, &qs).unwrap();
        if let Some(prev) = &last {
            assert_eq!(r.head_start, prev.head_digest());
        }
        last = session.model().cloned();
        assert_eq!(r.head_end, last.as_ref().unwrap().head_digest());
        records.push(r);
    }
    assert_eq!(session.optimizer().unwrap().step, 60);
    let streamed = run(&prep).unwrap();
    assert_eq!(streamed, records);
    for w in streamed.windows(2) {
        assert_eq!(w[1].head_start, w[0].head_end);
    }
}

#[test]
fn first_online_context_matches_non_online() {
    let corpus = planted_facts(3, 4).unwrap();
    for (online, offline) in [
        (Mode::SingleOnline, Mode::Single),
        (Mode::KNeighborOnline, Mode::KNeighbor),
    ] {
        let a = run(&prepare(&corpus, &small(online)).unwrap()).unwrap();
        let b = run(&prepare(&corpus, &small(offline)).unwrap()).unwrap();
        let a = strip_mode(a);
        let b = strip_mode(b);
        assert_eq!(a[0], b[0], "{online}");
        assert_ne!(a[1], b[1], "{online}");
    }
}

#[test]
fn one_neighbor_equals_single() {
    let corpus = planted_facts(3, 5).unwrap();
    let k1 = TtlConfig {
        k: 1,
        ..small(Mode::KNeighbor)
    };
    let a = strip_mode(run(&prepare(&corpus, &k1).unwrap()).unwrap());
    let b = strip_mode(run(&prepare(&corpus, &small(Mode::Single)).unwrap()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn neighbor_pool_starts_with_the_passage() {
    let corpus = planted_facts(6, 6).unwrap();
    let records = run(&prepare(&corpus, &small(Mode::KNeighbor)).unwrap()).unwrap();
    for r in &records {
        assert_eq!(r.contexts_used.len(), 3);
        assert_eq!(r.contexts_used[0], r.context_id);
    }
}

#[test]
fn curriculum_trains_blocks_in_order() {
    let corpus = planted_facts(4, 8).unwrap();
    let cfg = TtlConfig {
        order: "qa_srl>template>dep_parse".parse().unwrap(),
        batch: 16,
        ..small(Mode::Curriculum)
    };
    let prep = prepare(&corpus, &cfg).unwrap();
    let (_, pairs) = prep.training_pairs(&corpus.contexts[0], true).unwrap();
    let mut seen = Vec::new();
    for qa in &pairs {
        if seen.last() != Some(&qa.method) {
            seen.push(qa.method);
        }
    }
    assert_eq!(seen, vec![Method::QaSrl, Method::Template, Method::DepParse]);
    assert!(pairs[..16].iter().all(|qa| qa.method == Method::QaSrl));
    let records = run_curriculum(&prep, &corpus.contexts.iter().collect::<Vec<_>>()).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records[1].head_start, records[0].head_end);
}

#[test]
fn all_contexts_baseline_answers_everything() {
    let corpus = planted_facts(3, 9).unwrap();
    let cfg = small(Mode::AllContexts);
    let records = run(&prepare(&corpus, &cfg).unwrap()).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(predictions_map(&records).len(), corpus.questions.len());
    let total: usize = records.iter().map(|r| r.pairs).sum();
    assert!(records
        .iter()
        .all(|r| r.losses == records[0].losses && r.contexts_used.len() == 3));
    assert!(total > 0);
}

#[test]
fn untrainable_passage_is_answered_untrained() {
    let mut corpus = planted_facts(2, 10).unwrap();
    let bare = ContextBuilder::new("bare", "it rained all day.").build().unwrap();
    corpus.contexts.push(bare);
    corpus.questions.push(Question {
        id: "bare.q".into(),
        context_id: "bare".into(),
        question: "When did it rain?".into(),
        answers: vec![crate::annotation::GoldAnswer {
            text: "all day".into(),
            answer_start: 10,
        }],
    });
    let prep = prepare(&corpus, &small(Mode::Single)).unwrap();
    let records = run(&prep).unwrap();
    assert!(!records[2].trained);
    assert_eq!(records[2].predictions.len(), 1);
    let qs: Vec<_> = corpus.questions_for("bare").collect();
    assert!(matches!(
        run_single_context(&prep, &corpus.contexts[2], &qs),
        Err(Error::NoTrainablePairs(_))
    ));
    let online = run(&prepare(&corpus, &small(Mode::SingleOnline)).unwrap()).unwrap();
    assert_eq!(online[2].head_start, online[1].head_end);
    assert_eq!(online[2].head_end, online[1].head_end);
}

#[test]
fn checkpoint_init_restores_features_per_passage() {
    let corpus = planted_facts(2, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let (model, optim) = init_model(Vocabulary::new(["alpha"]), ModelConfig { d: 8, pmax: 384 }, 99, 1e-3).unwrap();
    crate::spanmodel::save_checkpoint(&path, &model, Some(&optim)).unwrap();
    let cfg = TtlConfig {
        init: Init::Checkpoint(path.clone()),
        ..small(Mode::Single)
    };
    let prep = prepare(&corpus, &cfg).unwrap();
    assert!(prep.base.vocab.len() > model.vocab.len());
    assert_eq!(prep.base_optim.as_ref().unwrap().m.e.len(), prep.base.params.e.len());
    let records = run(&prep).unwrap();
    assert_eq!(records.len(), 2);

    let wrong = TtlConfig {
        model: ModelConfig { d: 16, pmax: 384 },
        ..cfg.clone()
    };
    assert!(matches!(prepare(&corpus, &wrong), Err(Error::CheckpointMismatch(_))));

    let keep = TtlConfig { load_head: true, ..cfg };
    let prep = prepare(&corpus, &keep).unwrap();
    let r = run(&prep).unwrap();
    assert_eq!(r[0].head_start, model.head_digest());
}
