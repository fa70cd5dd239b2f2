//! k-NN probing: label aggregation from the nearest training embeddings
//! under cosine similarity with softmax-temperature weighting.

use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, Labels, Predictions, TaskKind, TaskSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub temperature: f64,
    pub k_grid: Vec<usize>,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 20, temperature: 0.07, k_grid: vec![1, 5, 10, 20, 50, 100, 200] }
    }
}

impl KnnConfig {
    pub fn validate(&self, train_size: usize) -> Result<()> {
        if self.k == 0 || self.k > train_size {
            return Err(Error::Config(format!(
                "k = {} must be in 1..={train_size}",
                self.k
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Unit-normalized rows; zero-norm embeddings are a hard error.
fn normalize(table: &EmbeddingTable) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(table.n);
    for i in 0..table.n {
        let row = table.row(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Invalid(format!("zero-norm embedding at row {i}")));
        }
        out.push(row.iter().map(|v| v / norm).collect());
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Indices of the k most similar training rows, ties broken by index.
fn top_k(sims: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn knn_predict(
    train: &EmbeddingTable,
    train_labels: &Labels,
    queries: &EmbeddingTable,
    cfg: &KnnConfig,
    task: &TaskSpec,
) -> Result<Predictions> {
    task.validate()?;
    cfg.validate(train.n)?;
    if train.n != train_labels.len() {
        return Err(Error::Invalid("train embeddings and labels misaligned".into()));
    }
    if train.d != queries.d {
        return Err(Error::Invalid("train/query dimension mismatch".into()));
    }
    let train_norm = normalize(train)?;
    let query_norm = normalize(queries)?;

    let neighbor_weights = |q: &[f64]| -> Vec<(usize, f64)> {
        let sims: Vec<f64> = train_norm.iter().map(|t| dot(q, t)).collect();
        top_k(&sims, cfg.k)
            .into_iter()
            .map(|i| (i, (sims[i] / cfg.temperature).exp()))
            .collect()
    };

    match (task.kind, train_labels) {
        (TaskKind::Classification, Labels::Class(ys)) => {
            let mut preds = Vec::with_capacity(queries.n);
            for q in &query_norm {
                let mut class_weight = vec![0.0; task.outputs];
                for (i, w) in neighbor_weights(q) {
                    class_weight[ys[i]] += w;
                }
                // argmax, ties to the lowest class index
                let mut best = 0usize;
                for c in 1..task.outputs {
                    if class_weight[c] > class_weight[best] {
                        best = c;
                    }
                }
                preds.push(best);
            }
            Ok(Predictions::Class(preds))
        }
        (TaskKind::Multilabel, Labels::Multilabel(ys)) => {
            let mut preds = Vec::with_capacity(queries.n);
            for q in &query_norm {
                let neighbors = neighbor_weights(q);
                let total: f64 = neighbors.iter().map(|(_, w)| w).sum();
                let mut scores = vec![0.0; task.outputs];
                for (i, w) in &neighbors {
                    for (l, y) in ys[*i].iter().enumerate() {
                        scores[l] += w * y;
                    }
                }
                for s in &mut scores {
                    *s /= total;
                }
                preds.push(scores);
            }
            Ok(Predictions::Scores(preds))
        }
        (TaskKind::Regression, Labels::Continuous(ys)) => {
            Ok(Predictions::Continuous(weighted_mean(&query_norm, ys, task, cfg, &neighbor_weights, false)))
        }
        (TaskKind::Distribution, Labels::Distribution(ys)) => {
            Ok(Predictions::Distribution(weighted_mean(&query_norm, ys, task, cfg, &neighbor_weights, true)))
        }
        _ => Err(Error::Invalid("labels do not match task kind".into())),
    }
}

fn weighted_mean(
    queries: &[Vec<f64>],
    ys: &[Vec<f64>],
    task: &TaskSpec,
    _cfg: &KnnConfig,
    neighbor_weights: &dyn Fn(&[f64]) -> Vec<(usize, f64)>,
    renormalize: bool,
) -> Vec<Vec<f64>> {
    let mut preds = Vec::with_capacity(queries.len());
    for q in queries {
        let neighbors = neighbor_weights(q);
        let total: f64 = neighbors.iter().map(|(_, w)| w).sum();
        let mut out = vec![0.0; task.outputs];
        for (i, w) in &neighbors {
            for (t, y) in ys[*i].iter().enumerate() {
                out[t] += w * y;
            }
        }
        for v in &mut out {
            *v /= total;
        }
        if renormalize {
            let sum: f64 = out.iter().sum();
            if sum > 0.0 {
                for v in &mut out {
                    *v /= sum;
                }
            }
        }
        preds.push(out);
    }
    preds
}

/// Grid search over k on the validation split; the primary metric decides,
/// ties prefer the smallest k. Grid entries larger than the train set are
/// skipped.
pub fn grid_search_k(
    train: &EmbeddingTable,
    train_labels: &Labels,
    val: &EmbeddingTable,
    val_labels: &Labels,
    cfg: &KnnConfig,
    task: &TaskSpec,
) -> Result<usize> {
    if cfg.k_grid.is_empty() {
        return Err(Error::Config("k grid must be nonempty".into()));
    }
    let mut grid: Vec<usize> = cfg.k_grid.iter().copied().filter(|&k| k >= 1 && k <= train.n).collect();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::Config("no k in grid fits the train set".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for &k in &grid {
        let kcfg = KnnConfig { k, ..cfg.clone() };
        let preds = knn_predict(train, train_labels, val, &kcfg, task)?;
        let m = super::metrics::compute_metrics(&preds, val_labels, task)?;
        let score = *m.get(&task.primary_metric).ok_or_else(|| {
            Error::Config(format!("unknown primary metric `{}`", task.primary_metric))
        })?;
        if best.map(|(_, s)| score > s).unwrap_or(true) {
            best = Some((k, score));
        }
    }
    Ok(best.unwrap().0)
}
