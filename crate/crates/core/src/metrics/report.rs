use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{confusion_counts, per_class_auc, sample_scores, subset_accuracy, jaccard_score, f1_binary};
use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::objective::Probabilities;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub num_samples: usize,
    pub classes: Vec<ReportRow>,
    pub micro: ReportRow,
    pub macro_avg: ReportRow,
    pub weighted: ReportRow,
    pub samples: ReportRow,
    /// Absent when no scores were supplied.
    pub roc_auc: Option<f64>,
    pub per_class_roc_auc: Option<Vec<Option<f64>>>,
    pub subset_accuracy: f64,
    pub jaccard: f64,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Per-class and aggregate scores in the precision / recall / f1-score /
/// support layout. `probs` feeds ROC-AUC and may be omitted.
pub fn classification_report(
    pred: ArrayView2<u8>,
    truth: ArrayView2<u8>,
    probs: Option<&Probabilities>,
    space: &LabelSpace,
) -> Result<MetricsReport> {
    if pred.ncols() != space.len() {
        return Err(Error::Schema(format!(
            "predictions have {} classes but the label space has {}",
            pred.ncols(),
            space.len()
        )));
    }
    let counts = confusion_counts(pred, truth)?;
    let n = pred.nrows();
    if n == 0 {
        return Err(Error::UndefinedMetric("report over zero rows".into()));
    }
    let classes: Vec<ReportRow> = counts
        .classes
        .iter()
        .zip(space.names())
        .map(|(c, name)| ReportRow {
            label: name.clone(),
            precision: c.precision(),
            recall: c.recall(),
            f1: f1_binary(c),
            support: c.support(),
        })
        .collect();
    let total_support: u64 = classes.iter().map(|r| r.support).sum();
    let c = classes.len();

    let pooled = counts.pooled();
    let micro = ReportRow {
        label: "micro avg".into(),
        precision: pooled.precision(),
        recall: pooled.recall(),
        f1: f1_binary(&pooled),
        support: total_support,
    };
    let macro_avg = ReportRow {
        label: "macro avg".into(),
        precision: mean(classes.iter().map(|r| r.precision), c),
        recall: mean(classes.iter().map(|r| r.recall), c),
        f1: mean(classes.iter().map(|r| r.f1), c),
        support: total_support,
    };
    if total_support == 0 {
        return Err(Error::UndefinedMetric("weighted average with zero total support".into()));
    }
    let weighted_mean = |f: fn(&ReportRow) -> f64| {
        classes.iter().map(|r| f(r) * r.support as f64).sum::<f64>() / total_support as f64
    };
    let weighted = ReportRow {
        label: "weighted avg".into(),
        precision: weighted_mean(|r| r.precision),
        recall: weighted_mean(|r| r.recall),
        f1: weighted_mean(|r| r.f1),
        support: total_support,
    };
    let (sp, sr, sf) = sample_scores(pred, truth)?;
    let samples = ReportRow {
        label: "samples avg".into(),
        precision: sp,
        recall: sr,
        f1: sf,
        support: total_support,
    };

    let (roc_auc, per_class_roc_auc) = match probs {
        Some(p) => {
            let per_class = per_class_auc(p.0.view(), truth)?;
            let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
            if valid.is_empty() {
                return Err(Error::UndefinedMetric(
                    "ROC-AUC needs a class with both positive and negative examples".into(),
                ));
            }
            (Some(mean(valid.iter().copied(), valid.len())), Some(per_class))
        }
        None => (None, None),
    };

    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        num_samples: n,
        classes,
        micro,
        macro_avg,
        weighted,
        samples,
        roc_auc,
        per_class_roc_auc,
        subset_accuracy: subset_accuracy(pred, truth)?,
        jaccard: jaccard_score(pred, truth)?,
    })
}

impl MetricsReport {
    /// Micro F1, macro F1, ROC-AUC, subset accuracy and Jaccard.
    pub fn summary(&self) -> [Option<f64>; 5] {
        [
            Some(self.micro.f1),
            Some(self.macro_avg.f1),
            self.roc_auc,
            Some(self.subset_accuracy),
            Some(self.jaccard),
        ]
    }

    pub fn summary_header() -> &'static str {
        "MicroF1\tMacroF1\tROC-AUC\tAcc\tJaccard"
    }

    /// Tab-separated summary at 4 decimals; a missing AUC prints as `-`.
    pub fn summary_line(&self) -> String {
        self.summary()
            .iter()
            .map(|v| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}")))
            .collect::<Vec<_>>()
            .join("\t")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: MetricsReport = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "report schema version {} is not supported (expected {})",
                report.schema_version, REPORT_SCHEMA_VERSION
            )));
        }
        Ok(report)
    }

    /// Aligned text table with four decimals.
    pub fn render_text(&self) -> String {
        let extras = ["roc_auc", "subset_accuracy", "jaccard"];
        let width = self
            .classes
            .iter()
            .map(|r| r.label.len())
            .chain(["weighted avg".len()])
            .chain(extras.iter().map(|s| s.len()))
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:>width$} {:>10}{:>10}{:>10}{:>10}", "", "precision", "recall", "f1-score", "support");
        out.push('\n');
        let row = |out: &mut String, r: &ReportRow| {
            let _ = writeln!(
                out,
                "{:>width$} {:>10.4}{:>10.4}{:>10.4}{:>10}",
                r.label, r.precision, r.recall, r.f1, r.support
            );
        };
        for r in &self.classes {
            row(&mut out, r);
        }
        out.push('\n');
        for r in [&self.micro, &self.macro_avg, &self.weighted, &self.samples] {
            row(&mut out, r);
        }
        out.push('\n');
        let auc = self.roc_auc.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(out, "{:>width$} {:>10}", "roc_auc", auc);
        let _ = writeln!(out, "{:>width$} {:>10.4}", "subset_accuracy", self.subset_accuracy);
        let _ = writeln!(out, "{:>width$} {:>10.4}", "jaccard", self.jaccard);
        out
    }
}
