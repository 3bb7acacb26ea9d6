use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;

use ppg_affect::data::{import_ppge as import_raw, load_canonical, save_canonical, synth_dataset, SynthSpec, Target};
use ppg_affect::eval::{
    aggregate, evaluate_fold, render_csv, render_markdown, run_loso, EvalReport, FoldMetrics, LosoSpec,
};
use ppg_affect::gradcheck::{run_suite, GradcheckConfig};
use ppg_affect::model::{Model, Variant};
use ppg_affect::seed::{derive_seed, rng_for};
use ppg_affect::signal::{preprocess_all, Segment};
use ppg_affect::train::{make_validation_split, train as fit};

use crate::config::{Overrides, RunConfig};
use crate::{GradcheckArgs, ImportArgs, LosoArgs, ReportArgs, SynthArgs, TableFormat, TrainArgs};

pub const REPORTS_FILE: &str = "reports.json";
pub const TABLE_MD_FILE: &str = "table.md";
pub const TABLE_CSV_FILE: &str = "table.csv";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

/// Load the dataset named in `cfg` and cut it into standardized windows.
fn load_segments(cfg: &RunConfig) -> Result<Vec<Segment>> {
    let dir = cfg.dataset()?;
    let ds = load_canonical(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    let pre = preprocess_all(&ds.records, &cfg.filter, &cfg.segmenter)?;
    for w in &pre.warnings {
        warn!("{w}");
    }
    if pre.segments.is_empty() {
        bail!("no record in {} is long enough for one window", dir.display());
    }
    Ok(pre.segments)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<SynthSpec>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(n) = a.subjects {
        spec.n_subjects = n;
    }
    if let Some(n) = a.trials {
        spec.trials_per_subject = n;
    }
    if let Some(d) = a.duration {
        spec.duration_s = d;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let ds = synth_dataset(&spec)?;
    save_canonical(&ds, &a.out)?;
    write_file(&a.out.join("synth_spec.toml"), toml::to_string_pretty(&spec)?)?;
    println!(
        "wrote {} records from {} subjects to {}",
        ds.records.len(),
        ds.subjects().len(),
        a.out.display()
    );
    Ok(())
}

pub fn import_ppge(a: &ImportArgs) -> Result<()> {
    let summary = import_raw(&a.raw, &a.out, a.threshold, a.fs)?;
    println!(
        "imported {} records from {} subjects ({} label mappings logged) to {}",
        summary.dataset.records.len(),
        summary.dataset.subjects().len(),
        summary.mappings.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RecordCount {
    subject_id: String,
    trial_id: u32,
    segments: usize,
}

#[derive(Serialize)]
struct PreprocessSummary {
    total_segments: usize,
    window_samples: usize,
    stride_samples: usize,
    records: Vec<RecordCount>,
    warnings: Vec<String>,
}

pub fn preprocess(o: &Overrides) -> Result<()> {
    let cfg = RunConfig::resolve(o)?;
    let out = cfg.output()?.to_path_buf();
    let dir = cfg.dataset()?;
    let ds = load_canonical(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    let pre = preprocess_all(&ds.records, &cfg.filter, &cfg.segmenter)?;
    for w in &pre.warnings {
        warn!("{w}");
    }
    cfg.echo(&out)?;

    let path = out.join("segments.jsonl");
    let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    for s in &pre.segments {
        writeln!(f, "{}", serde_json::to_string(s)?)?;
    }
    let records = ds
        .records
        .iter()
        .map(|r| RecordCount {
            subject_id: r.subject_id.clone(),
            trial_id: r.trial_id,
            segments: pre
                .segments
                .iter()
                .filter(|s| s.subject_id == r.subject_id && s.trial_id == r.trial_id)
                .count(),
        })
        .collect();
    let summary = PreprocessSummary {
        total_segments: pre.segments.len(),
        window_samples: cfg.segmenter.window_len(),
        stride_samples: cfg.segmenter.stride_len(),
        records,
        warnings: pre.warnings,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!("wrote {} segments to {}", summary.total_segments, path.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    variant: Variant,
    target: Target,
    fit_subjects: Vec<String>,
    val_subjects: Vec<String>,
    test_subjects: Vec<String>,
    best_epoch: usize,
    stop_epoch: usize,
    best_val_accuracy: f64,
    test_metrics: Vec<FoldMetrics>,
}

const TRAIN_INIT_STREAM: u64 = 0x7E41;

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&a.run)?;
    let out = cfg.output()?.to_path_buf();
    let segments = load_segments(&cfg)?;
    let mut subjects: Vec<String> = Vec::new();
    for s in &segments {
        if !subjects.contains(&s.subject_id) {
            subjects.push(s.subject_id.clone());
        }
    }
    for s in a.test_subjects.iter().chain(&a.val_subjects) {
        if !subjects.contains(s) {
            bail!("subject `{s}` has no segments in the dataset");
        }
    }
    let test: BTreeSet<&String> = a.test_subjects.iter().collect();
    if let Some(s) = a.val_subjects.iter().find(|s| test.contains(s)) {
        bail!("subject `{s}` is both a validation and a test subject");
    }
    let pool: Vec<String> = subjects.iter().filter(|s| !test.contains(s)).cloned().collect();
    let (fit_subjects, val_subjects) = if a.val_subjects.is_empty() {
        make_validation_split(&pool, cfg.train.val_fraction_subjects, derive_seed(cfg.seed, &[]))?
    } else {
        let val: BTreeSet<&String> = a.val_subjects.iter().collect();
        let fit: Vec<String> = pool.iter().filter(|s| !val.contains(s)).cloned().collect();
        (fit, a.val_subjects.clone())
    };
    if fit_subjects.is_empty() {
        bail!("no training subjects left after removing test and validation subjects");
    }
    let pick = |set: &[String]| -> Vec<&Segment> { segments.iter().filter(|s| set.contains(&s.subject_id)).collect() };
    let (fit_segs, val_segs) = (pick(&fit_subjects), pick(&val_subjects));
    cfg.echo(&out)?;

    for &variant in &cfg.variants {
        for &target in &cfg.targets {
            let dir = out.join(variant.as_str()).join(target.as_str());
            let mut rng = rng_for(cfg.seed, &[TRAIN_INIT_STREAM]);
            let model = Model::build(&cfg.model_for(variant), &mut rng)?;
            let outcome = fit(model, &fit_segs, &val_segs, &cfg.train_for(target))?;
            let mut test_metrics = Vec::new();
            for subject in &a.test_subjects {
                let segs = pick(std::slice::from_ref(subject));
                test_metrics.push(evaluate_fold(&outcome.model, &segs, target, cfg.aggregation)?);
            }
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            outcome.log.write_jsonl(&dir.join("train_log.jsonl"))?;
            outcome.model.save(&dir.join("model.json"))?;
            let summary = TrainSummary {
                variant,
                target,
                fit_subjects: fit_subjects.clone(),
                val_subjects: val_subjects.clone(),
                test_subjects: a.test_subjects.clone(),
                best_epoch: outcome.log.best_epoch,
                stop_epoch: outcome.log.stop_epoch,
                best_val_accuracy: outcome.log.best_val_accuracy,
                test_metrics,
            };
            write_json(&dir.join("summary.json"), &summary)?;
            println!(
                "{variant} {target}: best epoch {} of {}, validation accuracy {:.3}",
                summary.best_epoch, summary.stop_epoch, summary.best_val_accuracy
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FoldRecord<'a> {
    fold: usize,
    test_subject: &'a str,
    fit_subjects: &'a [String],
    val_subjects: &'a [String],
    metrics: &'a FoldMetrics,
    fit_accuracy: f64,
    best_epoch: usize,
    stop_epoch: usize,
    best_val_accuracy: f64,
}

pub fn loso(a: &LosoArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&a.run)?;
    let out = cfg.output()?.to_path_buf();
    let segments = load_segments(&cfg)?;
    cfg.echo(&out)?;

    let mut reports = Vec::new();
    for &variant in &cfg.variants {
        let mut runs = Vec::new();
        for &target in &cfg.targets {
            let spec = LosoSpec {
                model: cfg.model_for(variant),
                train: cfg.train_for(target),
                aggregation: cfg.aggregation,
                jobs: cfg.jobs,
                keep_models: a.save_models,
            };
            info!("running {variant} / {target}");
            let run = run_loso(&segments, &spec)?;
            let dir = out.join(variant.as_str()).join(target.as_str());
            for f in &run.folds {
                let stem = format!("fold_{:02}_{}", f.fold.index + 1, f.fold.test_subject);
                let rec = FoldRecord {
                    fold: f.fold.index,
                    test_subject: &f.fold.test_subject,
                    fit_subjects: &f.fit_subjects,
                    val_subjects: &f.val_subjects,
                    metrics: &f.metrics,
                    fit_accuracy: f.fit_accuracy,
                    best_epoch: f.log.best_epoch,
                    stop_epoch: f.log.stop_epoch,
                    best_val_accuracy: f.log.best_val_accuracy,
                };
                write_json(&dir.join(format!("{stem}.json")), &rec)?;
                write_file(&dir.join("logs").join(format!("{stem}.jsonl")), f.log.to_jsonl()?)?;
                if let Some(m) = &f.model {
                    let path = dir.join("models").join(format!("{stem}.json"));
                    write_file(&path, m.to_json()?)?;
                }
            }
            runs.push((target, run.fold_metrics()));
        }
        let report = aggregate(variant, runs)?;
        write_json(&out.join(variant.as_str()).join("report.json"), &report)?;
        reports.push(report);
    }
    write_json(&out.join(REPORTS_FILE), &reports)?;
    write_file(&out.join(TABLE_MD_FILE), render_markdown(&reports))?;
    write_file(&out.join(TABLE_CSV_FILE), render_csv(&reports)?)?;
    print!("{}", render_markdown(&reports));
    for r in &reports {
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}

fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let parsed = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|r| vec![r])
    };
    parsed.with_context(|| format!("{} is not an evaluation report", path.display()))
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for p in &a.inputs {
        reports.extend(read_reports(p)?);
    }
    let table = match a.format {
        TableFormat::Markdown => render_markdown(&reports),
        TableFormat::Csv => render_csv(&reports)?,
    };
    match &a.out {
        Some(p) => write_file(p, table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let cfg = GradcheckConfig {
        seed: a.seed,
        configs_per_layer: a.configs,
        ..GradcheckConfig::default()
    };
    let report = run_suite(&cfg)?;
    println!(
        "{:<22} {:>7} {:>7} {:>14}  result",
        "layer", "configs", "probes", "max rel error"
    );
    for l in &report.layers {
        println!(
            "{:<22} {:>7} {:>7} {:>14.3e}  {}",
            l.layer,
            l.configs,
            l.probes,
            l.max_rel_error,
            if l.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(p) = &a.json {
        write_json(p, &report)?;
    }
    if !report.passed() {
        bail!("gradient check failed (tolerance {:e})", report.tolerance);
    }
    Ok(())
}
