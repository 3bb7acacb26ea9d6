use log::warn;
use serde::{Deserialize, Serialize};

use super::FoldMetrics;
use crate::data::Target;
use crate::error::{Error, Result};
use crate::model::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub accuracy: f64,
    pub f1_class0: f64,
    pub f1_class1: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    /// Mean over folds with a defined AUC; `None` if there are none.
    pub auc: Option<f64>,
}

impl MetricRow {
    fn mean_of(folds: &[FoldMetrics]) -> Self {
        let n = folds.len() as f64;
        let mean = |f: fn(&FoldMetrics) -> f64| folds.iter().map(f).sum::<f64>() / n;
        let aucs: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
        Self {
            accuracy: mean(|f| f.accuracy),
            f1_class0: mean(|f| f.f1_class0),
            f1_class1: mean(|f| f.f1_class1),
            weighted_f1: mean(|f| f.weighted_f1),
            macro_f1: mean(|f| f.macro_f1),
            auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        }
    }

    fn midpoint(a: &Self, b: &Self) -> Self {
        let mid = |x: f64, y: f64| (x + y) / 2.0;
        Self {
            accuracy: mid(a.accuracy, b.accuracy),
            f1_class0: mid(a.f1_class0, b.f1_class0),
            f1_class1: mid(a.f1_class1, b.f1_class1),
            weighted_f1: mid(a.weighted_f1, b.weighted_f1),
            macro_f1: mid(a.macro_f1, b.macro_f1),
            auc: a.auc.zip(b.auc).map(|(x, y)| mid(x, y)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: Target,
    pub folds: Vec<FoldMetrics>,
    pub mean: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub targets: Vec<TargetSummary>,
    /// Elementwise mean of the valence and arousal rows, when both exist.
    pub average: Option<MetricRow>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn target(&self, t: Target) -> Option<&TargetSummary> {
        self.targets.iter().find(|s| s.target == t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-target fold means and the cross-target average row.
pub fn aggregate(variant: Variant, runs: Vec<(Target, Vec<FoldMetrics>)>) -> Result<EvalReport> {
    let mut warnings = Vec::new();
    let mut targets: Vec<TargetSummary> = Vec::new();
    for (target, folds) in runs {
        if folds.is_empty() {
            return Err(Error::Data(format!("no folds for target {target}")));
        }
        if targets.iter().any(|t| t.target == target) {
            return Err(Error::Data(format!("target {target} given twice")));
        }
        for f in folds.iter().filter(|f| f.auc.is_none()) {
            let msg = format!(
                "{variant} {target}: AUC undefined for test subject {} (single class); excluded from the mean",
                f.test_subject
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        targets.push(TargetSummary {
            target,
            mean: MetricRow::mean_of(&folds),
            folds,
        });
    }
    targets.sort_by_key(|t| t.target != Target::Valence);
    let average = match targets.as_slice() {
        [a, b] => {
            let subjects = |t: &TargetSummary| t.folds.iter().map(|f| f.test_subject.clone()).collect::<Vec<_>>();
            if a.folds.len() != b.folds.len() {
                return Err(Error::Data(format!(
                    "fold count differs between targets: {} vs {}",
                    a.folds.len(),
                    b.folds.len()
                )));
            }
            if subjects(a) != subjects(b) {
                return Err(Error::Data("targets were evaluated on different folds".into()));
            }
            Some(MetricRow::midpoint(&a.mean, &b.mean))
        }
        _ => None,
    };
    Ok(EvalReport {
        variant,
        targets,
        average,
        warnings,
    })
}

/// Round half away from zero at `decimals` places in decimal arithmetic, so
/// that values such as 0.675 (not exactly representable) round up.
pub fn round_half_up(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    // Twelve places absorb representation and summation noise.
    let text = format!("{:.12}", x.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().take(decimals))
        .map(|b| b - b'0')
        .collect();
    let round_up = frac_part.as_bytes().get(decimals).is_some_and(|&b| b >= b'5');
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - decimals;
    let int_digits: String = digits[..split].iter().map(|d| char::from(b'0' + d)).collect();
    let frac_digits: String = digits[split..].iter().map(|d| char::from(b'0' + d)).collect();
    let negative = x < 0.0 && digits.iter().any(|&d| d != 0);
    let sign = if negative { "-" } else { "" };
    if decimals == 0 {
        format!("{sign}{int_digits}")
    } else {
        format!("{sign}{int_digits}.{frac_digits}")
    }
}

/// Two-decimal rendering used in tables; undefined values print as `n/a`.
pub fn format_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| round_half_up(x, 2))
}

const COLUMNS: [&str; 6] = [
    "Test Accuracy",
    "F1-score class 0",
    "F1-score class 1",
    "weighted F1",
    "macro F1",
    "AUC",
];

fn cells(row: &MetricRow) -> [String; 6] {
    [
        format_metric(Some(row.accuracy)),
        format_metric(Some(row.f1_class0)),
        format_metric(Some(row.f1_class1)),
        format_metric(Some(row.weighted_f1)),
        format_metric(Some(row.macro_f1)),
        format_metric(row.auc),
    ]
}

/// `(section title, [(model, row)])` in table order, skipping empty sections.
fn sections(reports: &[EvalReport]) -> Vec<(&'static str, Vec<(&'static str, &MetricRow)>)> {
    let mut out = Vec::new();
    for (title, target) in [
        ("Valence only", Some(Target::Valence)),
        ("Arousal only", Some(Target::Arousal)),
        ("Average of Valence and Arousal", None),
    ] {
        let rows: Vec<_> = reports
            .iter()
            .filter_map(|r| {
                let row = match target {
                    Some(t) => r.target(t).map(|s| &s.mean),
                    None => r.average.as_ref(),
                };
                row.map(|row| (r.variant.display_name(), row))
            })
            .collect();
        if !rows.is_empty() {
            out.push((title, rows));
        }
    }
    out
}

pub fn render_markdown(reports: &[EvalReport]) -> String {
    let mut out = format!("| Model | {} |\n", COLUMNS.join(" | "));
    out.push_str(&format!("|---|{}\n", "---|".repeat(COLUMNS.len())));
    for (title, rows) in sections(reports) {
        out.push_str(&format!("| **{title}** |{}\n", " |".repeat(COLUMNS.len())));
        for (model, row) in rows {
            out.push_str(&format!("| {model} | {} |\n", cells(row).join(" | ")));
        }
    }
    out
}

pub fn render_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Data(format!("csv rendering: {e}"));
    let mut header = vec!["section", "model"];
    header.extend(COLUMNS);
    w.write_record(&header).map_err(csv_err)?;
    for (title, rows) in sections(reports) {
        for (model, row) in rows {
            let mut rec = vec![title.to_string(), model.to_string()];
            rec.extend(cells(row));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv rendering: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("csv rendering: {e}")))
}
