//! Evaluation metrics: accuracy, macro/micro F1, AUROC, average precision,
//! R², MAE, RMSE, and per-bin R² for distribution tasks.

use std::collections::BTreeMap;

use super::{Labels, Predictions, TaskKind, TaskSpec};
use crate::eval::tasks::kl_divergence;
use crate::{Error, Result};

/// Step-wise (non-interpolated) average precision: mean of precision at the
/// rank of each positive. Ties in scores keep input order. None when the
/// label has no positives.
pub fn average_precision(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] > 0.5 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        None
    } else {
        Some(sum / hits as f64)
    }
}

/// One-vs-rest AUROC via rank statistics with average ranks for ties. None
/// when either class is empty.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..n).filter(|&i| labels[i] > 0.5).map(|i| ranks[i]).sum();
    Some((rank_sum - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64))
}

/// Coefficient of determination for one target. None when the labels are
/// constant and the residual is nonzero would be undefined; R² of a perfect
/// fit on constant labels is 1.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Option<f64> {
    let n = truth.len();
    if n == 0 {
        return None;
    }
    let mean = truth.iter().sum::<f64>() / n as f64;
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).powi(2)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            Some(1.0)
        } else {
            None
        }
    } else {
        Some(1.0 - ss_res / ss_tot)
    }
}

fn mae_rmse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> (f64, f64) {
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.iter().zip(t) {
            abs_sum += (a - b).abs();
            sq_sum += (a - b).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        (0.0, 0.0)
    } else {
        (abs_sum / count as f64, (sq_sum / count as f64).sqrt())
    }
}

struct BinaryCounts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn f1_from_counts(c: &BinaryCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

fn classification_metrics(
    pred: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> BTreeMap<String, f64> {
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let accuracy = correct as f64 / truth.len().max(1) as f64;
    let mut counts: Vec<BinaryCounts> =
        (0..n_classes).map(|_| BinaryCounts { tp: 0, fp: 0, fn_: 0 }).collect();
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            counts[t].tp += 1;
        } else {
            counts[p].fp += 1;
            counts[t].fn_ += 1;
        }
    }
    // classes never seen in labels or predictions do not dilute the macro mean
    let active: Vec<&BinaryCounts> =
        counts.iter().filter(|c| c.tp + c.fp + c.fn_ > 0).collect();
    let macro_f1 = if active.is_empty() {
        0.0
    } else {
        active.iter().map(|c| f1_from_counts(c)).sum::<f64>() / active.len() as f64
    };
    let pooled = BinaryCounts {
        tp: counts.iter().map(|c| c.tp).sum(),
        fp: counts.iter().map(|c| c.fp).sum(),
        fn_: counts.iter().map(|c| c.fn_).sum(),
    };
    let mut out = BTreeMap::new();
    out.insert("accuracy".into(), accuracy);
    out.insert("macro_f1".into(), macro_f1);
    out.insert("micro_f1".into(), f1_from_counts(&pooled));
    out
}

fn multilabel_metrics(scores: &[Vec<f64>], truth: &[Vec<f64>]) -> BTreeMap<String, f64> {
    let n_labels = truth.first().map(|t| t.len()).unwrap_or(0);
    let n = truth.len();
    let mut per_label_ap = Vec::new();
    let mut per_label_auc = Vec::new();
    let mut skipped_ap = 0usize;
    let mut skipped_auc = 0usize;
    let mut counts = Vec::new();
    let mut pooled_scores = Vec::with_capacity(n * n_labels);
    let mut pooled_truth = Vec::with_capacity(n * n_labels);
    for l in 0..n_labels {
        let col_scores: Vec<f64> = (0..n).map(|i| scores[i][l]).collect();
        let col_truth: Vec<f64> = (0..n).map(|i| truth[i][l]).collect();
        match average_precision(&col_scores, &col_truth) {
            Some(ap) => per_label_ap.push(ap),
            None => skipped_ap += 1,
        }
        match auroc(&col_scores, &col_truth) {
            Some(a) => per_label_auc.push(a),
            None => skipped_auc += 1,
        }
        let mut c = BinaryCounts { tp: 0, fp: 0, fn_: 0 };
        for i in 0..n {
            let p = col_scores[i] >= 0.5;
            let t = col_truth[i] > 0.5;
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        counts.push(c);
        pooled_scores.extend(col_scores);
        pooled_truth.extend(col_truth);
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let pooled = BinaryCounts {
        tp: counts.iter().map(|c| c.tp).sum(),
        fp: counts.iter().map(|c| c.fp).sum(),
        fn_: counts.iter().map(|c| c.fn_).sum(),
    };
    let mut out = BTreeMap::new();
    out.insert("macro_map".into(), mean(&per_label_ap));
    out.insert(
        "micro_map".into(),
        average_precision(&pooled_scores, &pooled_truth).unwrap_or(0.0),
    );
    out.insert("macro_auroc".into(), mean(&per_label_auc));
    out.insert("micro_auroc".into(), auroc(&pooled_scores, &pooled_truth).unwrap_or(0.0));
    let macro_f1 = if counts.is_empty() {
        0.0
    } else {
        counts.iter().map(f1_from_counts).sum::<f64>() / counts.len() as f64
    };
    out.insert("macro_f1".into(), macro_f1);
    out.insert("micro_f1".into(), f1_from_counts(&pooled));
    out.insert("map_skipped_labels".into(), skipped_ap as f64);
    out.insert("auroc_skipped_labels".into(), skipped_auc as f64);
    out
}

fn per_target_r2(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> (f64, usize) {
    let n_targets = truth.first().map(|t| t.len()).unwrap_or(0);
    let n = truth.len();
    let mut vals = Vec::new();
    let mut skipped = 0usize;
    for t in 0..n_targets {
        let p_col: Vec<f64> = (0..n).map(|i| pred[i][t]).collect();
        let t_col: Vec<f64> = (0..n).map(|i| truth[i][t]).collect();
        match r_squared(&p_col, &t_col) {
            Some(r) => vals.push(r),
            None => skipped += 1,
        }
    }
    let mean = if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
    (mean, skipped)
}

pub fn compute_metrics(
    predictions: &Predictions,
    labels: &Labels,
    task: &TaskSpec,
) -> Result<BTreeMap<String, f64>> {
    if labels.len() == 0 {
        return Err(Error::Invalid("empty label set".into()));
    }
    match (task.kind, predictions, labels) {
        (TaskKind::Classification, Predictions::Class(p), Labels::Class(t)) => {
            Ok(classification_metrics(p, t, task.outputs))
        }
        (TaskKind::Multilabel, Predictions::Scores(p), Labels::Multilabel(t)) => {
            Ok(multilabel_metrics(p, t))
        }
        (TaskKind::Regression, Predictions::Continuous(p), Labels::Continuous(t)) => {
            let (r2, skipped) = per_target_r2(p, t);
            let (mae, rmse) = mae_rmse(p, t);
            let mut out = BTreeMap::new();
            out.insert("r2".into(), r2);
            out.insert("r2_skipped_targets".into(), skipped as f64);
            out.insert("mae".into(), mae);
            out.insert("rmse".into(), rmse);
            Ok(out)
        }
        (TaskKind::Distribution, Predictions::Distribution(p), Labels::Distribution(t)) => {
            let (r2, skipped) = per_target_r2(p, t);
            let (mae, rmse) = mae_rmse(p, t);
            let mut kl_sum = 0.0;
            for (pi, ti) in p.iter().zip(t) {
                kl_sum += kl_divergence(ti, pi)?;
            }
            let mut out = BTreeMap::new();
            out.insert("r2_bins".into(), r2);
            out.insert("r2_skipped_bins".into(), skipped as f64);
            out.insert("mean_kl".into(), kl_sum / t.len() as f64);
            out.insert("mae".into(), mae);
            out.insert("rmse".into(), rmse);
            Ok(out)
        }
        _ => Err(Error::Invalid("predictions do not match task kind".into())),
    }
}
