use std::collections::BTreeSet;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_fold, Aggregation, FoldMetrics};
use crate::data::Target;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Variant};
use crate::seed::{derive_seed, rng_for};
use crate::signal::Segment;
use crate::train::{evaluate_accuracy, make_validation_split, train, TrainConfig, TrainLog};

const INIT_STREAM: u64 = 0x1417;
const TRAIN_STREAM: u64 = 0x7A1E;
const SPLIT_STREAM: u64 = 0x5B17;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub test_subject: String,
    pub train_subjects: Vec<String>,
}

/// One fold per subject, in input order.
pub fn loso_folds(subjects: &[String]) -> Result<Vec<Fold>> {
    let mut seen = BTreeSet::new();
    if let Some(dup) = subjects.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(Error::State(format!("duplicate subject `{dup}` in fold construction")));
    }
    if subjects.len() < 2 {
        return Err(Error::Data(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .iter()
        .enumerate()
        .map(|(index, test)| Fold {
            index,
            test_subject: test.clone(),
            train_subjects: subjects.iter().filter(|s| *s != test).cloned().collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosoSpec {
    /// `model.variant` selects the architecture.
    pub model: ModelConfig,
    /// `train.target` and `train.seed` select the task and the base seed.
    pub train: TrainConfig,
    pub aggregation: Aggregation,
    /// Worker threads for folds.
    pub jobs: usize,
    /// Keep each fold's trained model in the result.
    pub keep_models: bool,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: Fold,
    pub fit_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
    pub metrics: FoldMetrics,
    /// Inference-mode accuracy of the returned model on its fit windows.
    pub fit_accuracy: f64,
    pub log: TrainLog,
    pub model: Option<Model>,
}

#[derive(Debug, Clone)]
pub struct LosoRun {
    pub variant: Variant,
    pub target: Target,
    pub folds: Vec<FoldResult>,
}

impl LosoRun {
    pub fn fold_metrics(&self) -> Vec<FoldMetrics> {
        self.folds.iter().map(|f| f.metrics.clone()).collect()
    }
}

fn target_index(t: Target) -> u64 {
    match t {
        Target::Valence => 0,
        Target::Arousal => 1,
    }
}

fn variant_index(v: Variant) -> u64 {
    match v {
        Variant::Cnn => 0,
        Variant::CnnLstm => 1,
        Variant::CnnTcnLstm => 2,
    }
}

fn select<'a>(segments: &'a [Segment], subjects: &[String]) -> Vec<&'a Segment> {
    let set: BTreeSet<&str> = subjects.iter().map(String::as_str).collect();
    segments
        .iter()
        .filter(|s| set.contains(s.subject_id.as_str()))
        .collect()
}

fn run_fold(segments: &[Segment], fold: &Fold, spec: &LosoSpec) -> Result<FoldResult> {
    let base = spec.train.seed;
    let path = [
        fold.index as u64,
        target_index(spec.train.target),
        variant_index(spec.model.variant),
    ];
    let stream = |s: u64| [&[s][..], &path[..]].concat();
    let (fit_subjects, val_subjects) = make_validation_split(
        &fold.train_subjects,
        spec.train.val_fraction_subjects,
        derive_seed(base, &[SPLIT_STREAM, path[0], path[1]]),
    )?;
    let fit = select(segments, &fit_subjects);
    let val = select(segments, &val_subjects);
    let test = select(segments, std::slice::from_ref(&fold.test_subject));

    let model = Model::build(&spec.model, &mut rng_for(base, &stream(INIT_STREAM)))?;
    let cfg = TrainConfig {
        seed: derive_seed(base, &stream(TRAIN_STREAM)),
        ..spec.train.clone()
    };
    let outcome = train(model, &fit, &val, &cfg)?;
    let metrics = evaluate_fold(&outcome.model, &test, cfg.target, spec.aggregation)?;
    let fit_accuracy = evaluate_accuracy(&outcome.model, &fit, cfg.target)?;
    info!(
        "{} {} fold {} (test {}): best epoch {}, stop {}, fit acc {:.3}, test acc {:.3}, auc {}",
        spec.model.variant,
        cfg.target,
        fold.index,
        fold.test_subject,
        outcome.log.best_epoch,
        outcome.log.stop_epoch,
        fit_accuracy,
        metrics.accuracy,
        metrics.auc.map_or("undefined".to_string(), |a| format!("{a:.3}")),
    );
    Ok(FoldResult {
        fold: fold.clone(),
        fit_subjects,
        val_subjects,
        metrics,
        fit_accuracy,
        log: outcome.log,
        model: spec.keep_models.then_some(outcome.model),
    })
}

/// Train and test one model per held-out subject. Results do not depend on `jobs`.
pub fn run_loso(segments: &[Segment], spec: &LosoSpec) -> Result<LosoRun> {
    spec.model.validate()?;
    spec.train.validate()?;
    if spec.jobs == 0 {
        return Err(Error::config("jobs", "must be at least 1"));
    }
    let mut subjects: Vec<String> = Vec::new();
    for s in segments {
        if !subjects.contains(&s.subject_id) {
            subjects.push(s.subject_id.clone());
        }
    }
    let folds = loso_folds(&subjects)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        folds
            .par_iter()
            .map(|f| run_fold(segments, f, spec))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(LosoRun {
        variant: spec.model.variant,
        target: spec.train.target,
        folds: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn folds_partition_subjects(n in 2usize..30) {
            let subjects: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
            let folds = loso_folds(&subjects).unwrap();
            prop_assert_eq!(folds.len(), n);
            let tests: BTreeSet<_> = folds.iter().map(|f| f.test_subject.clone()).collect();
            prop_assert_eq!(tests.len(), n);
            for f in &folds {
                prop_assert!(!f.train_subjects.contains(&f.test_subject));
                prop_assert_eq!(f.train_subjects.len() + 1, n);
            }
        }
    }

    #[test]
    fn eighteen_subjects_eighteen_folds() {
        let subjects: Vec<String> = (1..=18).map(|i| format!("{i}")).collect();
        assert_eq!(loso_folds(&subjects).unwrap().len(), 18);
    }

    #[test]
    fn duplicates_and_singletons_rejected() {
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(loso_folds(&dup), Err(Error::State(_))));
        assert!(matches!(loso_folds(&["a".to_string()]), Err(Error::Data(_))));
    }
}
