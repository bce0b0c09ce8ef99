use nnlda_core::corpus::{Corpus, Document, SideSchema, SyntheticConfig, Vocabulary};
use nnlda_core::trainer::{checkpoint, evaluate_elbo, fit, train_gamma_only, write_elbo_trace};
use nnlda_core::{Error, PriorKind, PriorModel, TrainConfig};

fn tiny_corpus() -> Corpus {
    let vocab = Vocabulary::from_tokens(vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let docs = vec![
        Document {
            words: vec![0, 0, 1],
            side: vec![],
            label: None,
            category: None,
        },
        Document {
            words: vec![1, 2],
            side: vec![],
            label: None,
            category: None,
        },
        Document {
            words: vec![2, 2, 0],
            side: vec![],
            label: None,
            category: None,
        },
    ];
    Corpus {
        docs,
        vocab,
        side: SideSchema::empty(),
    }
}

fn synthetic(n_docs: usize, seed: u64) -> Corpus {
    nnlda_core::corpus::generate_synthetic(&SyntheticConfig {
        n_docs,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

#[test]
fn single_topic_recovers_unigram_distribution() {
    let corpus = tiny_corpus();
    let config = TrainConfig::new(1, PriorKind::Fixed);
    let (model, report) = fit(&corpus, &config).unwrap();

    assert!(report.converged);
    assert!(
        report.iterations <= 3,
        "took {} iterations",
        report.iterations
    );
    // 8 tokens: a three times, b twice, c three times.
    let row = model.beta.beta().row(0).to_owned();
    assert!((row[0] - 3.0 / 8.0).abs() < 1e-9);
    assert!((row[1] - 2.0 / 8.0).abs() < 1e-9);
    assert!((row[2] - 3.0 / 8.0).abs() < 1e-9);
}

#[test]
fn fixed_prior_bound_never_decreases() {
    let corpus = synthetic(300, 21);
    let mut config = TrainConfig::new(4, PriorKind::Fixed);
    config.seed = 5;
    let (_, report) = fit(&corpus, &config).unwrap();

    assert!(report.iterations >= 2);
    for pair in report.elbo_trace.windows(2) {
        let slack = 1e-6 * pair[0].abs().max(1.0);
        assert!(
            pair[1] >= pair[0] - slack,
            "bound fell from {} to {}",
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn neural_fit_improves_bound_and_reports_consistently() {
    let corpus = synthetic(300, 22);
    let mut config = TrainConfig::new(4, PriorKind::Neural);
    config.seed = 9;
    config.max_iterations = 40;
    let (model, report) = fit(&corpus, &config).unwrap();

    assert_eq!(report.iterations, report.elbo_trace.len());
    assert!(report.elbo_trace.last().unwrap() > report.elbo_trace.first().unwrap());
    assert!(model.prior.is_trainable());
    assert_eq!(model.num_topics(), 4);
    assert_eq!(model.side.width(), corpus.side_dim());
}

#[test]
fn same_seed_reproduces_checkpoint_exactly() {
    let corpus = synthetic(150, 31);
    let mut config = TrainConfig::new(3, PriorKind::Neural);
    config.max_iterations = 10;

    let (model_a, _) = fit(&corpus, &config).unwrap();
    let (model_b, _) = fit(&corpus, &config).unwrap();
    assert_eq!(
        checkpoint::to_json_string(&model_a).unwrap(),
        checkpoint::to_json_string(&model_b).unwrap()
    );

    config.seed = 99;
    let (model_c, _) = fit(&corpus, &config).unwrap();
    assert_ne!(
        checkpoint::to_json_string(&model_a).unwrap(),
        checkpoint::to_json_string(&model_c).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_result() {
    let corpus = synthetic(150, 32);
    let mut config = TrainConfig::new(3, PriorKind::Neural);
    config.max_iterations = 8;

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let several = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let json_single =
        single.install(|| checkpoint::to_json_string(&fit(&corpus, &config).unwrap().0).unwrap());
    let json_several =
        several.install(|| checkpoint::to_json_string(&fit(&corpus, &config).unwrap().0).unwrap());
    assert_eq!(json_single, json_several);
}

#[test]
fn non_finite_side_is_rejected_before_training() {
    let mut corpus = synthetic(40, 33);
    corpus.docs[17].side[0] = f64::NAN;
    let config = TrainConfig::new(3, PriorKind::Neural);

    match fit(&corpus, &config) {
        Err(Error::Domain(reason)) => assert!(reason.contains("document 17"), "{reason}"),
        other => panic!("expected a domain error, got {other:?}"),
    }
}

/// Side values large enough to overflow the prior network surface as a
/// mid-iteration failure; the model must roll back to its initial state.
#[test]
fn overflowing_side_aborts_with_rollback() {
    let mut corpus = synthetic(40, 33);
    for x in corpus.docs[17].side.iter_mut() {
        *x = 1e308;
    }
    let mut config = TrainConfig::new(3, PriorKind::Neural);
    config.max_iterations = 5;

    match fit(&corpus, &config) {
        Err(Error::TrainingAborted {
            iteration,
            model,
            report,
            ..
        }) => {
            assert_eq!(iteration, 0);
            assert_eq!(report.iterations, 0);
            assert!(report.elbo_trace.is_empty());
            // Rolled back to the initial state.
            let beta0 =
                nnlda_core::TopicWordMatrix::random_init(3, corpus.vocab.len(), config.seed)
                    .unwrap();
            assert_eq!(model.beta.beta(), beta0.beta());
            match model.prior {
                PriorModel::Neural(n) => {
                    assert_eq!(
                        n.params,
                        nnlda_core::prior::init_neural(4, 3, config.seed + 1).params
                    );
                    assert_eq!(n.adam.step, 0);
                }
                other => panic!("expected neural prior, got {other:?}"),
            }
        }
        other => panic!("expected TrainingAborted, got {other:?}"),
    }
}

#[test]
fn checkpoint_file_round_trip_preserves_model() {
    let corpus = synthetic(80, 34);
    let mut config = TrainConfig::new(2, PriorKind::Dmr);
    config.max_iterations = 6;
    let (model, _) = fit(&corpus, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    checkpoint::save_model(&path, &model).unwrap();
    let loaded = checkpoint::load_model(&path).unwrap();

    assert_eq!(loaded, model);
    let a = evaluate_elbo(&corpus, &model).unwrap();
    let b = evaluate_elbo(&corpus, &loaded).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn gamma_step_budget_caps_adam_updates() {
    let corpus = synthetic(60, 35);
    let mut config = TrainConfig::new(3, PriorKind::Neural);
    config.max_iterations = 4;
    config.tolerance = 1e-15;
    config.gamma_steps_per_em = Some(2);
    config.adam.batch_size = 8;
    let (model, report) = fit(&corpus, &config).unwrap();

    assert_eq!(report.iterations, 4);
    match model.prior {
        PriorModel::Neural(n) => assert_eq!(n.adam.step, 2 * 4),
        other => panic!("expected neural prior, got {other:?}"),
    }
}

#[test]
fn gamma_only_training_freezes_topics() {
    let corpus = synthetic(100, 36);
    let mut config = TrainConfig::new(3, PriorKind::Neural);
    config.max_iterations = 5;
    let (mut model, _) = fit(&corpus, &config).unwrap();

    let before = model.beta.beta().clone();
    let step_before = match &model.prior {
        PriorModel::Neural(n) => n.adam.step,
        _ => unreachable!(),
    };
    let adam = model.config.adam.clone();
    let trace = train_gamma_only(&corpus, &mut model, 3, &adam).unwrap();

    assert_eq!(trace.len(), 3);
    assert!(trace.iter().all(|e| e.is_finite()));
    assert_eq!(model.beta.beta(), &before);
    match &model.prior {
        PriorModel::Neural(n) => assert!(n.adam.step > step_before),
        _ => unreachable!(),
    }
}

#[test]
fn empty_corpus_is_rejected() {
    let vocab = Vocabulary::from_tokens(vec!["a".into()]).unwrap();
    let corpus = Corpus {
        docs: vec![Document {
            words: vec![],
            side: vec![],
            label: None,
            category: None,
        }],
        vocab,
        side: SideSchema::empty(),
    };
    let config = TrainConfig::new(2, PriorKind::Fixed);
    assert!(matches!(
        fit(&corpus, &config),
        Err(Error::AllDocumentsEmpty)
    ));
}

#[test]
fn trace_file_has_header_and_one_row_per_iteration() {
    let corpus = synthetic(60, 37);
    let mut config = TrainConfig::new(2, PriorKind::Fixed);
    config.max_iterations = 6;
    config.tolerance = 1e-15;
    let (_, report) = fit(&corpus, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_elbo_trace(&path, &report.elbo_trace).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,elbo");
    assert_eq!(lines.len(), report.iterations + 1);
    assert!(lines[1].starts_with("1,"));
}
