use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ppg_affect::model::{ConvStage, Model, ModelConfig, Variant};
use ppg_affect::nn::TcnSpec;
use ppg_affect::signal::Segment;
use ppg_affect::train::{train, TrainConfig};

fn small_config() -> ModelConfig {
    ModelConfig {
        variant: Variant::CnnTcnLstm,
        input_len: 128,
        conv1: ConvStage {
            filters: 4,
            kernel_size: 8,
            stride: 2,
        },
        conv2: ConvStage {
            filters: 6,
            kernel_size: 4,
            stride: 1,
        },
        tcn: TcnSpec {
            filters: 4,
            kernel_size: 2,
            dilations: vec![1, 2, 4],
            ..TcnSpec::default()
        },
        lstm_units: 4,
        ..ModelConfig::default()
    }
}

/// `ones` of every `per_subject` windows per subject are class 1 (faster oscillation).
fn segments(subjects: usize, per_subject: usize, ones: usize) -> Vec<Segment> {
    let mut out = Vec::new();
    for s in 0..subjects {
        for k in 0..per_subject {
            let label = u8::from(k < ones);
            let freq = if label == 1 { 0.12 } else { 0.03 };
            let phase = (s * 5 + k) as f64 * 0.61;
            out.push(Segment {
                subject_id: format!("s{s}"),
                trial_id: k as u32,
                start: 0,
                valence: label,
                arousal: label,
                samples: (0..128)
                    .map(|t| (2.0 * std::f64::consts::PI * freq * t as f64 + phase).sin())
                    .collect(),
            });
        }
    }
    out
}

#[test]
fn loss_mostly_decreases() {
    let segs = segments(4, 8, 4);
    let (fit, val): (Vec<&Segment>, Vec<&Segment>) = segs.iter().partition(|s| s.subject_id != "s3");
    let cfg = TrainConfig {
        batch_size: 24,
        max_epochs: 40,
        patience: 39,
        learning_rate: 0.003,
        seed: 1,
        ..TrainConfig::default()
    };
    // Full-batch steps without dropout, so the only epoch-to-epoch change is the optimizer's.
    let base = small_config();
    let config = ModelConfig {
        dropout: 0.0,
        tcn: TcnSpec {
            dropout_rate: 0.0,
            ..base.tcn.clone()
        },
        ..base
    };
    let model = Model::build(&config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let log = train(model, &fit, &val, &cfg).unwrap().log;
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.train_loss).collect();
    let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(
        rises as f64 <= 0.2 * (losses.len() - 1) as f64,
        "{rises} rises in {losses:?}"
    );
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn class_weights_come_from_the_fit_split_only() {
    // Fit windows are 3:1 toward class 1; validation windows are all class 0.
    let fit_segs = segments(3, 8, 6);
    let val_segs = segments(1, 8, 0);
    let fit: Vec<&Segment> = fit_segs.iter().collect();
    let val: Vec<&Segment> = val_segs.iter().collect();
    let cfg = TrainConfig {
        batch_size: 8,
        max_epochs: 2,
        patience: 1,
        ..TrainConfig::default()
    };
    let model = Model::build(&small_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let log = train(model, &fit, &val, &cfg).unwrap().log;
    assert_eq!(log.class_weights, [24.0 / 12.0, 24.0 / 36.0]);
}
