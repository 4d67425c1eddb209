use fairadapt_core::adapter::train_adapter_with_history;
use fairadapt_core::{
    accuracy, encode_dataset, generate_synthetic, train_adapter, Category, Dataset, DebiasConfig,
    EmbeddingStore, Example, Gender, HashEncoderConfig, SynthSpec, TrainConfig,
};

fn planted() -> (Dataset, EmbeddingStore) {
    let d = generate_synthetic(&SynthSpec {
        queries_per_category: 2,
        ..SynthSpec::default()
    })
    .unwrap();
    let s = encode_dataset(
        &d,
        &HashEncoderConfig {
            dim: 64,
            seed: 7,
            normalize: true,
        },
    )
    .unwrap();
    (d, s)
}

/// Two groups of one query each, separated along the first coordinate.
fn separable() -> (Dataset, EmbeddingStore) {
    let mut store = EmbeddingStore::new(4).unwrap();
    let mut examples = Vec::new();
    for q in 0..10 {
        for (relevant, tag) in [(true, "rel"), (false, "non")] {
            for g in Gender::ALL {
                let id = format!("q{q}-{tag}-{}", g.token());
                let sign = if relevant { 1.0 } else { -1.0 };
                let jitter = q as f32 * 0.01;
                store
                    .insert(id.clone(), vec![sign, 0.3 + jitter, -0.2, 0.1 * sign])
                    .unwrap();
                examples.push(Example {
                    example_id: id,
                    query_id: format!("q{q}"),
                    doc_group_id: format!("q{q}-{tag}"),
                    category: Category::Career,
                    gender: g,
                    query_text: "q".into(),
                    doc_title: "t".into(),
                    doc_content: "c".into(),
                    relevant,
                });
            }
        }
    }
    (Dataset::from_examples(examples).unwrap(), store)
}

#[test]
fn separable_set_is_learned() {
    let (d, s) = separable();
    let cfg = TrainConfig {
        lr: 0.05,
        epochs: 30,
        ..TrainConfig::default()
    };
    let w = train_adapter(&d, &s, &cfg, None).unwrap();
    assert!(accuracy(&d, &s, &w).unwrap() >= 0.99);
}

#[test]
fn loss_decreases_over_first_epochs() {
    let (d, s) = planted();
    let cfg = TrainConfig {
        lr: 1e-2,
        epochs: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let r = train_adapter_with_history(&d, &s, &cfg, None).unwrap();
    assert_eq!(r.epoch_loss.len(), 5);
    for w in r.epoch_loss.windows(2) {
        assert!(w[1] < w[0], "{:?}", r.epoch_loss);
    }
}

#[test]
fn whole_dataset_batch_takes_one_step() {
    let (d, s) = planted();
    let cfg = TrainConfig {
        lr: 1e-2,
        epochs: 1,
        batch_size: d.len() + 5,
        ..TrainConfig::default()
    };
    let r = train_adapter_with_history(&d, &s, &cfg, None).unwrap();
    assert_eq!(r.steps, 1);
    let cfg = TrainConfig {
        batch_size: 7,
        epochs: 2,
        ..cfg
    };
    let r = train_adapter_with_history(&d, &s, &cfg, None).unwrap();
    assert_eq!(r.steps, 2 * d.len().div_ceil(7) as u64);
}

#[test]
fn zero_alphas_match_unregularized_training() {
    let (d, s) = planted();
    let cfg = TrainConfig {
        lr: 1e-2,
        epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let plain = train_adapter(&d, &s, &cfg, None).unwrap();
    let zero = train_adapter(&d, &s, &cfg, Some(&DebiasConfig::new(0.0, 0.0, 0.0, 4))).unwrap();
    assert_eq!(plain, zero);
    let on = train_adapter(&d, &s, &cfg, Some(&DebiasConfig::new(1.0, 0.0, 0.0, 4))).unwrap();
    assert_ne!(plain, on);
}

#[test]
fn training_is_reproducible() {
    let (d, s) = planted();
    let cfg = TrainConfig {
        lr: 1e-2,
        epochs: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let db = DebiasConfig::new(0.5, 1.0, 2.0, 8);
    let a = train_adapter(&d, &s, &cfg, Some(&db)).unwrap();
    let b = train_adapter(&d, &s, &cfg, Some(&db)).unwrap();
    assert_eq!(a, b);
    let c = train_adapter(&d, &s, &TrainConfig { seed: 6, ..cfg }, Some(&db)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn invalid_inputs_are_rejected() {
    let (d, s) = planted();
    let bad_lr = TrainConfig {
        lr: 0.0,
        ..TrainConfig::default()
    };
    assert!(train_adapter(&d, &s, &bad_lr, None).is_err());
    let negative = DebiasConfig::new(-1.0, 0.0, 0.0, 0);
    assert!(train_adapter(&d, &s, &TrainConfig::default(), Some(&negative)).is_err());
    let empty = EmbeddingStore::new(64).unwrap();
    assert!(train_adapter(&d, &empty, &TrainConfig::default(), None).is_err());
}
