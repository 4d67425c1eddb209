use criterion::{criterion_group, criterion_main, Criterion};
use fairadapt_core::{
    encode_dataset, generate_synthetic, train_adapter, Category, DebiasConfig, HashEncoderConfig,
    SynthSpec, TrainConfig,
};

fn training(c: &mut Criterion) {
    let d = generate_synthetic(&SynthSpec {
        queries_per_category: 20,
        bias_strength: 2.0,
        ..SynthSpec::default()
    })
    .unwrap();
    let career = d.category(Category::Career);
    let cfg = TrainConfig {
        lr: 0.05,
        ..TrainConfig::default()
    };
    let debias = DebiasConfig::new(1.0, 1.0, 1.0, 0);

    for dim in [64, 768] {
        let store = encode_dataset(
            &d,
            &HashEncoderConfig {
                dim,
                seed: 0,
                normalize: true,
            },
        )
        .unwrap();
        c.bench_function(&format!("train_adapter d={dim}"), |b| {
            b.iter(|| train_adapter(&career, &store, &cfg, None).unwrap())
        });
        c.bench_function(&format!("train_adapter debiased d={dim}"), |b| {
            b.iter(|| train_adapter(&career, &store, &cfg, Some(&debias)).unwrap())
        });
    }
}

fn encoding(c: &mut Criterion) {
    let d = generate_synthetic(&SynthSpec {
        queries_per_category: 20,
        ..SynthSpec::default()
    })
    .unwrap();
    let cfg = HashEncoderConfig::default();
    c.bench_function("encode_dataset 840 examples d=768", |b| {
        b.iter(|| encode_dataset(&d, &cfg).unwrap())
    });
}

criterion_group!(benches, training, encoding);
criterion_main!(benches);
