//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Criterion 9 needs the real PPGE recordings and is
//! not run here.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppg_affect::data::{synth_dataset, SynthSpec, Target};
use ppg_affect::eval::{
    accuracy, aggregate, auc, f1_per_class, format_metric, loso_folds, render_markdown, run_loso, weighted_f1,
    Aggregation, FoldMetrics, LosoRun, LosoSpec,
};
use ppg_affect::gradcheck::{run_suite, GradcheckConfig};
use ppg_affect::model::{Model, ModelConfig, Variant};
use ppg_affect::nn::{Layer, Mode, Tcn, TcnSpec};
use ppg_affect::signal::{design_bandpass, preprocess_all, FilterSpec, Segment, SegmenterSpec};
use ppg_affect::train::{make_validation_split, TrainConfig};
use ppg_affect::Tensor;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_correctness() -> Outcome {
    let report = run_suite(&GradcheckConfig::default()).expect("gradcheck runs");
    let worst = report
        .layers
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let enough = report.layers.iter().all(|l| l.configs >= 20);
    outcome(
        report.passed() && enough && report.layers.len() == 8,
        format!(
            "{} layers x {} configs, worst {} at {:.2e} (tolerance 1e-4)",
            report.layers.len(),
            report.layers[0].configs,
            worst.layer,
            worst.max_rel_error
        ),
    )
}

fn filter_response() -> Outcome {
    let f = design_bandpass(&FilterSpec::default()).expect("filter design");
    let lo = f.magnitude_db(0.7);
    let hi = f.magnitude_db(3.7);
    let s1 = f.magnitude_db(0.05);
    let s2 = f.magnitude_db(15.0);
    let cut = |db: f64| (db + 3.0).abs() <= 0.5;
    outcome(
        cut(lo) && cut(hi) && s1 <= -20.0 && s2 <= -20.0,
        format!("0.7 Hz {lo:.3} dB, 3.7 Hz {hi:.3} dB, 0.05 Hz {s1:.1} dB, 15 Hz {s2:.1} dB"),
    )
}

fn shape_trace() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = Model::build(&ModelConfig::default(), &mut rng).expect("model");
    let x = Tensor::from_fn(&[2, 6000, 1], |i| (i as f64 * 0.013).sin());
    let (p, tape) = model.forward(&x, Mode::Train, &mut rng).expect("forward");
    let expected: Vec<(&str, Vec<usize>)> = vec![
        ("input", vec![2, 6000, 1]),
        ("conv1", vec![2, 1500, 8]),
        ("pool1", vec![2, 750, 8]),
        ("conv2", vec![2, 375, 16]),
        ("pool2", vec![2, 187, 16]),
        ("tcn", vec![2, 8]),
        ("lstm", vec![2, 12]),
        ("concat", vec![2, 20]),
        ("output", vec![2, 2]),
    ];
    let got: Vec<(&str, Vec<usize>)> = tape.shape_trace.clone();
    let rows_ok = p.data().chunks(2).all(|r| (r[0] + r[1] - 1.0).abs() < 1e-12);
    let trace: Vec<String> = got.iter().map(|(n, s)| format!("{n}{s:?}")).collect();
    outcome(got == expected && rows_ok, trace.join(" -> "))
}

fn tcn_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let spec = TcnSpec::default();
    let rf = spec.receptive_field();
    let mut tcn = Tcn::new(spec, 16, &mut rng).expect("tcn");
    for (_, p) in tcn.params_mut() {
        for v in p.data_mut() {
            *v = rng.random_range(-0.3..0.3);
        }
    }
    let time = 1200;
    let x = Tensor::from_fn(&[1, time, 16], |_| rng.random_range(-1.0..1.0));
    let last = |x: &Tensor| {
        tcn.forward(x, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))
            .expect("tcn forward")
            .0
    };
    let base = last(&x);
    let perturb_at = |t: usize| {
        let mut y = x.clone();
        for c in 0..16 {
            y.data_mut()[t * 16 + c] += 5.0;
        }
        let out = last(&y);
        out.data()
            .iter()
            .zip(base.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    // Causality: perturbing any step leaves no earlier output changed.
    let (seq, _) = tcn.forward_sequence(&x, &vec![[None, None]; 4]).expect("sequence");
    let mut y = x.clone();
    let t0 = 700;
    for c in 0..16 {
        y.data_mut()[t0 * 16 + c] += 5.0;
    }
    let (seq2, _) = tcn.forward_sequence(&y, &vec![[None, None]; 4]).expect("sequence");
    let f = 8;
    let causal = (0..t0 * f).all(|i| seq.data()[i] == seq2.data()[i]);
    let changed_at_t0 = (t0 * f..(t0 + 1) * f).any(|i| seq.data()[i] != seq2.data()[i]);
    // More than rf - 1 = 930 steps back: outside the receptive field.
    let outside: f64 = (0..time - rf).map(perturb_at).fold(0.0, f64::max);
    let edge = perturb_at(time - rf);
    outcome(
        rf == 931 && causal && outside <= 1e-12,
        format!(
            "receptive field {rf}; earlier outputs untouched: {causal} (step itself changed: {changed_at_t0}); \
             max change from inputs >930 steps back {outside:.1e}; at exactly 930 steps back {edge:.2e}"
        ),
    )
}

fn brute_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_auc: f64 = 0.0;
    let mut instances = 0;
    while instances < 1000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..=30);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let pos = labels.iter().sum::<usize>();
        if pos == 0 || pos == n {
            continue;
        }
        worst_auc = worst_auc.max((auc(&scores, &labels).unwrap() - brute_auc(&scores, &labels)).abs());
        instances += 1;
    }
    let mut worst_cm: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=100);
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let mut m = [[0.0f64; 2]; 2];
        for (&p, &y) in preds.iter().zip(&labels) {
            m[y][p] += 1.0;
        }
        let f1 = |c: usize| {
            let tp = m[c][c];
            let fp = m[1 - c][c];
            let fn_ = m[c][1 - c];
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        };
        let support = |c: usize| m[c][0] + m[c][1];
        let errs = [
            accuracy(&preds, &labels).unwrap() - (m[0][0] + m[1][1]) / n as f64,
            f1_per_class(&preds, &labels, 0).unwrap() - f1(0),
            f1_per_class(&preds, &labels, 1).unwrap() - f1(1),
            weighted_f1(&preds, &labels).unwrap() - (support(0) * f1(0) + support(1) * f1(1)) / n as f64,
        ];
        worst_cm = errs.iter().fold(worst_cm, |acc, e| acc.max(e.abs()));
    }
    let example = auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
    outcome(
        worst_auc <= 1e-12 && worst_cm <= 1e-12 && example == 0.75,
        format!(
            "AUC vs brute force on {instances} tied instances: max diff {worst_auc:.1e}; \
             confusion-matrix oracle max diff {worst_cm:.1e}; fixed example AUC {example}"
        ),
    )
}

fn loso_properties(run: &LosoRun, segments: &[Segment]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();
    for case in 0..200 {
        let n = rng.random_range(2..=25);
        let subjects: Vec<String> = (0..n).map(|i| format!("p{i}_{}", rng.random_range(0..1000))).collect();
        let subjects: Vec<String> = subjects.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let n = subjects.len();
        if n < 2 {
            continue;
        }
        let folds = loso_folds(&subjects).unwrap();
        let tests: BTreeSet<&String> = folds.iter().map(|f| &f.test_subject).collect();
        let mut ok = folds.len() == n && tests.len() == n;
        for f in &folds {
            ok &= !f.train_subjects.contains(&f.test_subject) && f.train_subjects.len() == n - 1;
            if f.train_subjects.len() >= 2 {
                let (fit, val) = make_validation_split(&f.train_subjects, 0.2, case as u64).unwrap();
                ok &= !val.is_empty() && !val.contains(&f.test_subject) && !fit.contains(&f.test_subject);
                ok &= val.iter().all(|v| !fit.contains(v) && f.train_subjects.contains(v));
                ok &= fit.len() + val.len() == n - 1;
            }
        }
        if !ok {
            failures.push(format!("random case {case}"));
        }
    }
    // The folds of the learnability run: every window of a subject sits on one side only.
    let all: BTreeSet<&str> = segments.iter().map(|s| s.subject_id.as_str()).collect();
    let test_once: Vec<&String> = run.folds.iter().map(|f| &f.fold.test_subject).collect();
    if test_once.len() != all.len() || test_once.iter().collect::<BTreeSet<_>>().len() != all.len() {
        failures.push("learnability run fold count".into());
    }
    for f in &run.folds {
        let fit: BTreeSet<&str> = f.fit_subjects.iter().map(String::as_str).collect();
        let val: BTreeSet<&str> = f.val_subjects.iter().map(String::as_str).collect();
        let test = f.fold.test_subject.as_str();
        let disjoint = fit.is_disjoint(&val) && !fit.contains(test) && !val.contains(test);
        let covers = fit.len() + val.len() + 1 == all.len();
        let trial_sides = segments.iter().filter(|s| s.subject_id == test).count()
            == segments
                .iter()
                .filter(|s| !fit.contains(s.subject_id.as_str()) && !val.contains(s.subject_id.as_str()))
                .count();
        if !(disjoint && covers && trial_sides) {
            failures.push(format!("fold {}", f.fold.index));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "200 random subject sets plus the {}-fold learnability run: partition, disjointness, subject-atomic windows",
                run.folds.len()
            )
        } else {
            format!("violations: {}", failures.join(", "))
        },
    )
}

fn learnability_spec(target: Target) -> LosoSpec {
    LosoSpec {
        model: ModelConfig::with_variant(Variant::CnnTcnLstm),
        train: TrainConfig {
            batch_size: 32,
            max_epochs: 200,
            patience: 30,
            seed: 0,
            target,
            ..TrainConfig::default()
        },
        aggregation: Aggregation::Segment,
        jobs: 1,
        keep_models: false,
    }
}

fn learnability(run: &LosoRun, seconds: f64) -> Outcome {
    let n = run.folds.len() as f64;
    let peak: f64 = run
        .folds
        .iter()
        .map(|f| f.log.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max))
        .sum::<f64>()
        / n;
    let restored: f64 = run.folds.iter().map(|f| f.fit_accuracy).sum::<f64>() / n;
    let aucs: Vec<f64> = run.folds.iter().filter_map(|f| f.metrics.auc).collect();
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len().max(1) as f64;
    outcome(
        peak >= 0.95 && mean_auc >= 0.70 && !aucs.is_empty(),
        format!(
            "valence, {} folds: training accuracy {peak:.3} (mean per-fold peak; restored models {restored:.3}), \
             mean LOSO AUC {mean_auc:.3} over {} folds, {seconds:.0} s",
            run.folds.len(),
            aucs.len()
        ),
    )
}

fn table_consistency() -> Outcome {
    let fold = |auc: f64| FoldMetrics {
        test_subject: "s1".into(),
        n_items: 10,
        accuracy: 0.7,
        f1_class0: 0.5,
        f1_class1: 0.8,
        weighted_f1: 0.65,
        macro_f1: 0.65,
        auc: Some(auc),
    };
    let report = aggregate(
        Variant::CnnTcnLstm,
        vec![(Target::Valence, vec![fold(0.66)]), (Target::Arousal, vec![fold(0.69)])],
    )
    .expect("aggregate");
    let avg = report.average.as_ref().and_then(|a| a.auc).unwrap_or(f64::NAN);
    let rendered = format_metric(Some(avg));
    let table = render_markdown(std::slice::from_ref(&report));
    let row_ok = table
        .lines()
        .skip_while(|l| !l.contains("Average of Valence and Arousal"))
        .nth(1)
        .is_some_and(|l| l.ends_with("| 0.68 |"));
    outcome(
        rendered == "0.68" && row_ok,
        format!("valence 0.66, arousal 0.69 -> average {avg} -> \"{rendered}\""),
    )
}

fn determinism(segments: &[Segment]) -> Outcome {
    let reports_json = |jobs: usize| {
        let mut runs = Vec::new();
        for target in Target::ALL {
            let spec = LosoSpec {
                jobs,
                train: TrainConfig {
                    max_epochs: 4,
                    patience: 2,
                    seed: 7,
                    ..learnability_spec(target).train
                },
                ..learnability_spec(target)
            };
            runs.push((target, run_loso(segments, &spec).expect("loso").fold_metrics()));
        }
        aggregate(Variant::CnnTcnLstm, runs)
            .expect("aggregate")
            .to_json()
            .expect("json")
    };
    let a = reports_json(1);
    let b = reports_json(1);
    let c = reports_json(3);
    outcome(
        a == b && a == c,
        format!(
            "{} bytes of metric JSON; jobs=1 twice and jobs=3 identical: {}",
            a.len(),
            a == b && a == c
        ),
    )
}

fn main() -> ExitCode {
    // The harness passes its own flags (e.g. --list for discovery); ignore them.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {id:>2} {name}: {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };

    report(1, "gradient correctness", gradient_correctness());
    report(2, "filter response", filter_response());
    report(3, "shape trace", shape_trace());
    report(4, "TCN structure", tcn_structure());
    report(5, "metric oracles", metric_oracles());

    let ds = synth_dataset(&SynthSpec::default()).expect("synthetic dataset");
    let segments = preprocess_all(&ds.records, &FilterSpec::default(), &SegmenterSpec::default())
        .expect("preprocess")
        .segments;
    let start = Instant::now();
    let run = run_loso(&segments, &learnability_spec(Target::Valence)).expect("learnability run");
    let seconds = start.elapsed().as_secs_f64();

    report(6, "LOSO properties", loso_properties(&run, &segments));
    report(7, "end-to-end learnability", learnability(&run, seconds));
    report(8, "table-internal consistency", table_consistency());
    println!("criterion  9 dataset-gated PPGE reproduction: SKIPPED - needs the real dataset");
    report(10, "determinism", determinism(&segments));

    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, _, o)| !o.pass)
        .map(|(id, _, _)| *id)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
