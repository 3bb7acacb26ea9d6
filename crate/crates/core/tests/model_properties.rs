use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppg_affect::model::{Model, ModelConfig, Variant};
use ppg_affect::nn::Mode;
use ppg_affect::Tensor;

/// A fresh model whose batch-norm running statistics are seeded by one training batch.
fn model(variant: Variant, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Model::build(&ModelConfig::with_variant(variant), &mut rng).unwrap();
    let (_, tape) = m.forward(&batch(2, seed), Mode::Train, &mut rng).unwrap();
    m.commit_batch_stats(&tape);
    m
}

fn batch(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[n, 6000, 1], |_| rng.random_range(-2.0..2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn rows_are_distributions(seed in 0u64..1000, v in 0usize..3, train in any::<bool>()) {
        let m = model(Variant::ALL[v], seed);
        let mode = if train { Mode::Train } else { Mode::Infer };
        let (p, _) = m.forward(&batch(3, seed + 1), mode, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(p.shape(), &[3, 2]);
        for row in p.data().chunks(2) {
            prop_assert!(row.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn inference_ignores_the_rng() {
    for v in Variant::ALL {
        let m = model(v, 3);
        let x = batch(2, 9);
        let (a, _) = m.forward(&x, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (b, _) = m.forward(&x, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.predict(&x, 1).unwrap(), a);
    }
}

#[test]
fn training_forward_is_reproducible_per_seed() {
    let m = model(Variant::CnnTcnLstm, 3);
    let x = batch(2, 9);
    let run = |s| m.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(s)).unwrap().0;
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn every_parameter_receives_gradient() {
    for v in Variant::ALL {
        let m = model(v, 11);
        let x = batch(4, 12);
        let (p, tape) = m.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        // Gradient of the summed log-probability of class 1.
        let g = Tensor::from_fn(&[4, 2], |i| if i % 2 == 1 { -1.0 / p.data()[i] } else { 0.0 });
        let grads = m.backward(&tape, &g).unwrap();
        let names: Vec<String> = m.params().into_iter().map(|(n, _)| n).collect();
        let got: Vec<&String> = grads.entries.iter().map(|(n, _)| n).collect();
        assert_eq!(got.len(), names.len(), "{v:?}");
        for ((name, grad), expected) in grads.entries.iter().zip(&names) {
            assert_eq!(name, expected);
            assert!(grad.all_finite(), "{v:?} {name}");
            assert!(grad.max_abs() > 0.0, "{v:?} {name} is dead");
        }
    }
}
