//! Multi-label evaluation: per-class confusion counts, the F1 family,
//! ROC-AUC, subset accuracy and Jaccard similarity.
//!
//! Conventions where a ratio has a zero denominator:
//! - per-class precision, recall and F1 are 0;
//! - a row with empty truth and empty prediction scores 1 for sample-averaged
//!   precision, recall, F1 and Jaccard;
//! - ROC-AUC skips classes without both a positive and a negative example and
//!   macro-averages the rest.

mod report;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{classification_report, MetricsReport, ReportRow, REPORT_SCHEMA_VERSION};

/// Confusion counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassCounts {
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn predicted(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

impl std::ops::Add for ClassCounts {
    type Output = ClassCounts;

    fn add(self, o: ClassCounts) -> ClassCounts {
        ClassCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: Vec<ClassCounts>,
}

impl ConfusionCounts {
    /// Counts pooled over all classes.
    pub fn pooled(&self) -> ClassCounts {
        self.classes.iter().copied().fold(ClassCounts::default(), |a, b| a + b)
    }

    pub fn supports(&self) -> Vec<u64> {
        self.classes.iter().map(ClassCounts::support).collect()
    }

    pub fn per_class_f1(&self) -> Vec<f64> {
        self.classes.iter().map(f1_binary).collect()
    }
}

fn check_binary_pair(pred: &ArrayView2<u8>, truth: &ArrayView2<u8>) -> Result<()> {
    if pred.dim() != truth.dim() {
        return Err(Error::Contract(format!(
            "prediction {:?} and truth {:?} differ in shape",
            pred.dim(),
            truth.dim()
        )));
    }
    if pred.iter().chain(truth.iter()).any(|&v| v > 1) {
        return Err(Error::Contract("label matrices must be binary".into()));
    }
    Ok(())
}

pub fn confusion_counts(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<ConfusionCounts> {
    check_binary_pair(&pred, &truth)?;
    let classes = pred
        .columns()
        .into_iter()
        .zip(truth.columns())
        .map(|(p, t)| {
            let mut c = ClassCounts::default();
            for (&pv, &tv) in p.iter().zip(t.iter()) {
                match (pv, tv) {
                    (1, 1) => c.tp += 1,
                    (1, 0) => c.fp += 1,
                    (0, 1) => c.fn_ += 1,
                    _ => c.tn += 1,
                }
            }
            c
        })
        .collect();
    Ok(ConfusionCounts { classes })
}

/// `TP / (TP + (FP + FN) / 2)`, 0 when all three counts are 0.
pub fn f1_binary(c: &ClassCounts) -> f64 {
    let den = 2 * c.tp + c.fp + c.fn_;
    ratio(2 * c.tp, den)
}

/// F1 of the counts pooled over classes.
pub fn micro_f1(counts: &ConfusionCounts) -> f64 {
    f1_binary(&counts.pooled())
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(per_class: &[f64]) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::UndefinedMetric("macro F1 of zero classes".into()));
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Support-weighted mean of per-class scores.
pub fn weighted_f1(per_class: &[f64], supports: &[u64]) -> Result<f64> {
    if per_class.len() != supports.len() {
        return Err(Error::Contract("one support per class is required".into()));
    }
    let total: u64 = supports.iter().sum();
    if total == 0 {
        return Err(Error::UndefinedMetric("weighted average with zero total support".into()));
    }
    Ok(per_class
        .iter()
        .zip(supports)
        .map(|(f, &s)| f * s as f64)
        .sum::<f64>()
        / total as f64)
}

/// Precision, recall and F1 of one row; all 1 when both sets are empty.
fn row_scores(p: ArrayView1<u8>, t: ArrayView1<u8>) -> (f64, f64, f64) {
    let mut tp = 0u64;
    let mut np = 0u64;
    let mut nt = 0u64;
    for (&a, &b) in p.iter().zip(t.iter()) {
        tp += u64::from(a & b);
        np += u64::from(a);
        nt += u64::from(b);
    }
    if np == 0 && nt == 0 {
        return (1.0, 1.0, 1.0);
    }
    (ratio(tp, np), ratio(tp, nt), ratio(2 * tp, np + nt))
}

fn row_mean(pred: ArrayView2<u8>, truth: ArrayView2<u8>, f: impl Fn(ArrayView1<u8>, ArrayView1<u8>) -> f64) -> Result<f64> {
    check_binary_pair(&pred, &truth)?;
    if pred.nrows() == 0 {
        return Err(Error::UndefinedMetric("sample average over zero rows".into()));
    }
    let total: f64 = pred.rows().into_iter().zip(truth.rows()).map(|(p, t)| f(p, t)).sum();
    Ok(total / pred.nrows() as f64)
}

/// Mean over rows of each row's own F1.
pub fn sample_f1(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<f64> {
    row_mean(pred, truth, |p, t| row_scores(p, t).2)
}

pub(crate) fn sample_scores(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<(f64, f64, f64)> {
    let p = row_mean(pred, truth, |p, t| row_scores(p, t).0)?;
    let r = row_mean(pred, truth, |p, t| row_scores(p, t).1)?;
    let f = row_mean(pred, truth, |p, t| row_scores(p, t).2)?;
    Ok((p, r, f))
}

/// Fraction of rows predicted exactly.
pub fn subset_accuracy(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<f64> {
    row_mean(pred, truth, |p, t| f64::from(u8::from(p == t)))
}

/// Mean over rows of `|pred ∩ truth| / |pred ∪ truth|`.
pub fn jaccard_score(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<f64> {
    row_mean(pred, truth, |p, t| {
        let inter = p.iter().zip(t.iter()).filter(|(&a, &b)| a == 1 && b == 1).count();
        let union = p.iter().zip(t.iter()).filter(|(&a, &b)| a == 1 || b == 1).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    })
}

/// Rank-sum AUC of one score column: the probability that a random positive
/// outscores a random negative, ties counting one half. `None` when the
/// column lacks positives or negatives.
pub fn binary_auc(scores: ArrayView1<f64>, truth: ArrayView1<u8>) -> Option<f64> {
    let mut pairs: Vec<(f64, u8)> = scores.iter().copied().zip(truth.iter().copied()).collect();
    let positives = pairs.iter().filter(|(_, y)| *y == 1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum of 1-based mid-ranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j + 1 < pairs.len() && pairs[j + 1].0 == pairs[i].0 {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = pairs[i..=j].iter().filter(|(_, y)| *y == 1).count();
        rank_sum += mid_rank * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-class AUC, `None` for classes that cannot be evaluated.
pub fn per_class_auc(scores: ArrayView2<f64>, truth: ArrayView2<u8>) -> Result<Vec<Option<f64>>> {
    if scores.dim() != truth.dim() {
        return Err(Error::Contract("scores and truth differ in shape".into()));
    }
    Ok(scores
        .columns()
        .into_iter()
        .zip(truth.columns())
        .map(|(s, t)| binary_auc(s, t))
        .collect())
}

/// Macro-averaged one-vs-rest ROC-AUC over the evaluable classes.
pub fn roc_auc(scores: ArrayView2<f64>, truth: ArrayView2<u8>) -> Result<f64> {
    let per_class = per_class_auc(scores, truth)?;
    let valid: Vec<f64> = per_class.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::UndefinedMetric(
            "ROC-AUC needs a class with both positive and negative examples".into(),
        ));
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

/// Builds prediction and truth matrices with exactly the given per-class
/// TP/FP/FN counts over `n` rows. Each class lays its cells out starting at a
/// different row so label sets vary across rows.
pub fn matrices_from_counts(counts: &[ClassCounts], n: usize) -> Result<(Array2<u8>, Array2<u8>)> {
    let c = counts.len();
    let mut pred = Array2::zeros((n, c));
    let mut truth = Array2::zeros((n, c));
    for (j, k) in counts.iter().enumerate() {
        let used = (k.tp + k.fp + k.fn_) as usize;
        if used > n {
            return Err(Error::InvalidArgument(format!(
                "class {j} needs {used} active rows but only {n} exist"
            )));
        }
        let start = (j * 37) % n.max(1);
        for r in 0..used {
            let row = (start + r) % n;
            let (p, t) = if r < k.tp as usize {
                (1, 1)
            } else if r < (k.tp + k.fp) as usize {
                (1, 0)
            } else {
                (0, 1)
            };
            pred[[row, j]] = p;
            truth[[row, j]] = t;
        }
    }
    Ok((pred, truth))
}
