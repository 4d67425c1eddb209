use fairadapt_core::debias::batch_loss;
use fairadapt_core::{
    bce_grad, regularizer, regularizer_grad, AdapterWeights, Category, DebiasConfig,
    EmbeddingStore, Example, Gender, GenderPair,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn central_diff(f: impl Fn(&[f64]) -> f64, a: &[f64]) -> Vec<f64> {
    let mut a = a.to_vec();
    (0..a.len())
        .map(|i| {
            let orig = a[i];
            a[i] = orig + H;
            let up = f(&a);
            a[i] = orig - H;
            let down = f(&a);
            a[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn logit(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(p, q)| p * q).sum()
}

fn bce(z: f64, t: bool) -> f64 {
    let y = 1.0 / (1.0 + (-z).exp());
    if t {
        -y.ln()
    } else {
        -(1.0 - y).ln()
    }
}

#[test]
fn bce_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let x = random_vec(&mut rng, 16);
        let a = random_vec(&mut rng, 16);
        let t = rng.gen_bool(0.5);
        let analytic = bce_grad(logit(&a, &x), t, &x);
        let numeric = central_diff(|a| bce(logit(a, &x), t), &a);
        assert!(max_rel_err(&analytic, &numeric) < 1e-5);
    }
}

#[test]
fn regularizer_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let rows: Vec<Vec<f64>> = (0..8).map(|_| random_vec(&mut rng, 16)).collect();
        let a = random_vec(&mut rng, 16);
        let pairs: Vec<GenderPair> = (0..4)
            .map(|k| GenderPair {
                first: 2 * k,
                second: 2 * k + 1,
                weight: rng.gen_range(0.0..2.0),
            })
            .collect();
        let z: Vec<f64> = rows.iter().map(|x| logit(&a, x)).collect();
        let analytic = regularizer_grad(&pairs, &z, &rows, 16).unwrap();
        let numeric = central_diff(
            |a| {
                let z: Vec<f64> = rows.iter().map(|x| logit(a, x)).collect();
                regularizer(&pairs, &z).unwrap()
            },
            &a,
        );
        assert!(max_rel_err(&analytic, &numeric) < 1e-5);
    }
}

fn random_batch(rng: &mut ChaCha8Rng, b: usize, dim: usize) -> (Vec<Example>, EmbeddingStore) {
    let mut store = EmbeddingStore::new(dim).unwrap();
    let examples: Vec<Example> = (0..b)
        .map(|i| {
            let id = format!("ex{i}");
            let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            store.insert(id.clone(), v).unwrap();
            Example {
                example_id: id,
                query_id: "q".into(),
                doc_group_id: format!("g{i}"),
                category: Category::Career,
                gender: Gender::ALL[rng.gen_range(0..3)],
                query_text: String::new(),
                doc_title: String::new(),
                doc_content: String::new(),
                relevant: rng.gen_bool(0.5),
            }
        })
        .collect();
    (examples, store)
}

#[test]
fn batch_loss_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let (examples, store) = random_batch(&mut rng, 8, 16);
        let batch: Vec<&Example> = examples.iter().collect();
        let cfg = DebiasConfig::new(
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..2.0),
            trial,
        );
        let w = AdapterWeights {
            a: random_vec(&mut rng, 16),
        };
        let out = batch_loss(&batch, &store, &w, Some(&cfg), 3, trial as usize).unwrap();
        let numeric = central_diff(
            |a| {
                let w = AdapterWeights { a: a.to_vec() };
                batch_loss(&batch, &store, &w, Some(&cfg), 3, trial as usize)
                    .unwrap()
                    .loss
            },
            &w.a,
        );
        worst = worst.max(max_rel_err(&out.grad, &numeric));
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn loss_splits_into_bce_and_regularizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (examples, store) = random_batch(&mut rng, 8, 16);
    let batch: Vec<&Example> = examples.iter().collect();
    let w = AdapterWeights {
        a: random_vec(&mut rng, 16),
    };
    let cfg = DebiasConfig::new(1.0, 0.5, 2.0, 5);
    let out = batch_loss(&batch, &store, &w, Some(&cfg), 0, 0).unwrap();
    assert_eq!(out.loss, out.bce + out.regularizer);
    assert!(out.regularizer >= 0.0);
    let plain = batch_loss(&batch, &store, &w, None, 0, 0).unwrap();
    assert_eq!(plain.bce, out.bce);
    assert_eq!(plain.regularizer, 0.0);
}
