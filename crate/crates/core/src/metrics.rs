//! Classification metrics and multi-run summaries.
//!
//! Classes that never occur among the true labels are excluded from every
//! macro average; the exclusions are listed in the report.

use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::error::{PnnError, Result};
use crate::scalar::Scalar;

fn check_lengths(predictions: &[usize], labels: &[usize]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(PnnError::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(PnnError::InvalidInput("no samples to score".into()));
    }
    Ok(())
}

/// Fraction of exact matches, `1 - (misclassification count) / M`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(predictions, labels)?;
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `C x C` counts, rows are true classes and columns predictions.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    check_lengths(predictions, labels)?;
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= classes || y >= classes {
            return Err(PnnError::InvalidInput(format!(
                "class index out of range for {classes} classes (pred {p}, label {y})"
            )));
        }
        m[y][p] += 1;
    }
    Ok(m)
}

struct ClassCounts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn class_counts(confusion: &[Vec<usize>]) -> Vec<ClassCounts> {
    let c = confusion.len();
    (0..c)
        .map(|k| {
            let tp = confusion[k][k];
            let row: usize = confusion[k].iter().sum();
            let col: usize = confusion.iter().map(|r| r[k]).sum();
            ClassCounts {
                tp,
                fp: col - tp,
                fn_: row - tp,
            }
        })
        .collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(c: &ClassCounts) -> f64 {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Unweighted mean of per-class F1 over classes present in `labels`.
pub fn macro_f1(predictions: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    let confusion = confusion_matrix(predictions, labels, classes)?;
    let counts = class_counts(&confusion);
    let present: Vec<&ClassCounts> = counts.iter().filter(|c| c.tp + c.fn_ > 0).collect();
    Ok(present.iter().map(|c| f1(c)).sum::<f64>() / present.len() as f64)
}

/// Pooled F1; equals accuracy for single-label classification.
pub fn micro_f1(predictions: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    let confusion = confusion_matrix(predictions, labels, classes)?;
    let counts = class_counts(&confusion);
    let tp: usize = counts.iter().map(|c| c.tp).sum();
    let fp: usize = counts.iter().map(|c| c.fp).sum();
    let fn_: usize = counts.iter().map(|c| c.fn_).sum();
    Ok(ratio(2 * tp, 2 * tp + fp + fn_))
}

/// Binary AUC by the rank-sum identity with midranks for ties.
pub fn binary_auc<T: Scalar>(scores: &[T], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Per-class one-vs-rest AUC (`None` where a class lacks positives or
/// negatives) and their macro average.
pub fn auroc_per_class<T: Scalar>(
    scores: ArrayView2<T>,
    labels: &[usize],
) -> Result<(Vec<Option<f64>>, f64)> {
    if scores.nrows() != labels.len() {
        return Err(PnnError::Shape(format!(
            "{} score rows for {} labels",
            scores.nrows(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(PnnError::InvalidInput("scores must be finite".into()));
    }
    let per_class: Vec<Option<f64>> = (0..scores.ncols())
        .map(|c| {
            let col: Vec<T> = scores.column(c).to_vec();
            let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            binary_auc(&col, &positive)
        })
        .collect();
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(PnnError::InvalidInput(
            "no class has both positive and negative samples".into(),
        ));
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok((per_class, mean))
}

/// Macro-averaged one-vs-rest AUROC.
pub fn auroc_ovr_macro<T: Scalar>(scores: ArrayView2<T>, labels: &[usize]) -> Result<f64> {
    Ok(auroc_per_class(scores, labels)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// `None` when no class has both positives and negatives.
    pub auroc_ovr_macro: Option<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// Classes absent from the labels, left out of macro averages.
    pub excluded_classes: Vec<usize>,
}

impl EvalReport {
    pub fn from_scores<T: Scalar>(
        predictions: &[usize],
        labels: &[usize],
        scores: ArrayView2<T>,
        classes: usize,
    ) -> Result<Self> {
        let confusion = confusion_matrix(predictions, labels, classes)?;
        let counts = class_counts(&confusion);
        let excluded_classes = counts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.tp + c.fn_ == 0)
            .map(|(k, _)| k)
            .collect();
        Ok(Self {
            accuracy: accuracy(predictions, labels)?,
            macro_f1: macro_f1(predictions, labels, classes)?,
            micro_f1: micro_f1(predictions, labels, classes)?,
            auroc_ovr_macro: auroc_ovr_macro(scores, labels).ok(),
            precision: counts.iter().map(|c| ratio(c.tp, c.tp + c.fp)).collect(),
            recall: counts.iter().map(|c| ratio(c.tp, c.tp + c.fn_)).collect(),
            confusion,
            excluded_classes,
        })
    }

    pub fn samples(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Key-value block followed by the confusion grid.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "accuracy = {:.9}", self.accuracy);
        let _ = writeln!(out, "macro_f1 = {:.9}", self.macro_f1);
        let _ = writeln!(out, "micro_f1 = {:.9}", self.micro_f1);
        match self.auroc_ovr_macro {
            Some(a) => {
                let _ = writeln!(out, "auroc_ovr_macro = {a:.9}");
            }
            None => out.push_str("auroc_ovr_macro = none\n"),
        }
        let _ = writeln!(out, "samples = {}", self.samples());
        let _ = writeln!(out, "classes = {}", self.confusion.len());
        let excluded: Vec<String> = self.excluded_classes.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "excluded_classes = {}", excluded.join(","));
        for (k, (p, r)) in self.precision.iter().zip(&self.recall).enumerate() {
            let _ = writeln!(out, "precision.{k} = {p:.9}");
            let _ = writeln!(out, "recall.{k} = {r:.9}");
        }
        out.push_str("confusion (rows: true, columns: predicted)\n");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join("\t"));
        }
        out
    }
}

/// Mean and sample standard deviation of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    /// `None` for fewer than two observations.
    pub sd: Option<f64>,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.len() >= 2).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        });
        Some(Self { mean, sd })
    }

    pub fn sd_or_zero(&self) -> f64 {
        self.sd.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub runs: usize,
    pub accuracy: MeanSd,
    pub macro_f1: MeanSd,
    pub micro_f1: MeanSd,
    /// Over the runs that produced an AUROC.
    pub auroc: Option<MeanSd>,
}

pub fn run_stats(reports: &[EvalReport]) -> Result<RunStats> {
    if reports.is_empty() {
        return Err(PnnError::InvalidInput("no reports to summarize".into()));
    }
    let col = |f: fn(&EvalReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let aurocs: Vec<f64> = reports.iter().filter_map(|r| r.auroc_ovr_macro).collect();
    Ok(RunStats {
        runs: reports.len(),
        accuracy: MeanSd::of(&col(|r| r.accuracy)).expect("non-empty"),
        macro_f1: MeanSd::of(&col(|r| r.macro_f1)).expect("non-empty"),
        micro_f1: MeanSd::of(&col(|r| r.micro_f1)).expect("non-empty"),
        auroc: MeanSd::of(&aurocs),
    })
}
