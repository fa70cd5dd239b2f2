//! Downstream evaluation protocol: fold plans, k-NN probing, linear
//! probing, per-task losses and metrics.

pub mod folds;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod probe;
pub mod tasks;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sampler::worker_seed;
use crate::{Error, Result};

/// Frozen embeddings: n rows of dimension d, row-major.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub n: usize,
    pub d: usize,
    pub values: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if d < 1 {
            return Err(Error::Invalid("embedding dimension must be >= 1".into()));
        }
        if values.len() != n * d {
            return Err(Error::Invalid(format!(
                "embedding table size {} does not match {n}x{d}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("embedding table contains non-finite values".into()));
        }
        Ok(EmbeddingTable { n, d, values })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn subset(&self, ids: &[usize]) -> EmbeddingTable {
        let mut values = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            values.extend_from_slice(self.row(i));
        }
        EmbeddingTable { n: ids.len(), d: self.d, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Multilabel,
    Regression,
    Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    MultilabelSoftMargin,
    PresenceWeightedBce { pos_weight: f64 },
    Mse,
    Kl,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// classes, labels, targets, or bins depending on kind
    pub outputs: usize,
    pub loss: Loss,
    /// metric used for model selection (grid search), higher is better
    pub primary_metric: String,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, outputs: usize) -> Self {
        let (loss, primary_metric) = match kind {
            TaskKind::Classification => (Loss::CrossEntropy, "macro_f1"),
            TaskKind::Multilabel => (Loss::MultilabelSoftMargin, "micro_map"),
            TaskKind::Regression => (Loss::Mse, "r2"),
            TaskKind::Distribution => (Loss::Kl, "r2_bins"),
        };
        TaskSpec { kind, outputs, loss, primary_metric: primary_metric.into() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outputs == 0 {
            return Err(Error::Config("task must have at least one output".into()));
        }
        let compatible = matches!(
            (self.kind, &self.loss),
            (TaskKind::Classification, Loss::CrossEntropy)
                | (TaskKind::Multilabel, Loss::MultilabelSoftMargin)
                | (TaskKind::Multilabel, Loss::PresenceWeightedBce { .. })
                | (TaskKind::Regression, Loss::Mse)
                | (TaskKind::Distribution, Loss::Kl)
        );
        if !compatible {
            return Err(Error::Config(format!(
                "loss {:?} incompatible with task kind {:?}",
                self.loss, self.kind
            )));
        }
        if let Loss::PresenceWeightedBce { pos_weight } = self.loss {
            if !(pos_weight > 0.0) {
                return Err(Error::Config("pos_weight must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Ground truth, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// class index per sample
    Class(Vec<usize>),
    /// binary indicator vectors
    Multilabel(Vec<Vec<f64>>),
    /// continuous targets
    Continuous(Vec<Vec<f64>>),
    /// rows summing to 1
    Distribution(Vec<Vec<f64>>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Multilabel(v) | Labels::Continuous(v) | Labels::Distribution(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, ids: &[usize]) -> Labels {
        match self {
            Labels::Class(v) => Labels::Class(ids.iter().map(|&i| v[i]).collect()),
            Labels::Multilabel(v) => {
                Labels::Multilabel(ids.iter().map(|&i| v[i].clone()).collect())
            }
            Labels::Continuous(v) => {
                Labels::Continuous(ids.iter().map(|&i| v[i].clone()).collect())
            }
            Labels::Distribution(v) => {
                Labels::Distribution(ids.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

/// Model outputs aligned with a label set.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Class(Vec<usize>),
    /// per-label scores in [0, 1]
    Scores(Vec<Vec<f64>>),
    Continuous(Vec<Vec<f64>>),
    Distribution(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

/// Per-metric mean and standard deviation across test folds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub metrics: BTreeMap<String, MetricStat>,
    pub folds: usize,
}

impl MetricSet {
    pub fn aggregate(per_fold: &[BTreeMap<String, f64>]) -> MetricSet {
        let mut out = MetricSet { metrics: BTreeMap::new(), folds: per_fold.len() };
        if per_fold.is_empty() {
            return out;
        }
        let mut keys: Vec<&String> = per_fold[0].keys().collect();
        keys.sort();
        for key in keys {
            let vals: Vec<f64> =
                per_fold.iter().filter_map(|m| m.get(key.as_str()).copied()).collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let std = if vals.len() > 1 {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (vals.len() - 1) as f64;
                Some(var.sqrt())
            } else {
                None
            };
            out.metrics.insert(key.clone(), MetricStat { mean, std });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Knn,
    Probe,
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub knn: knn::KnnConfig,
    pub probe: probe::ProbeConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig { knn: knn::KnnConfig::default(), probe: probe::ProbeConfig::default() }
    }
}

/// Runs the full fold protocol: per test fold, fit on that fold's train set
/// (validation used for selection), evaluate on the test set, and aggregate
/// mean and standard deviation per metric.
pub fn run_protocol(
    embeddings: &EmbeddingTable,
    labels: &Labels,
    task: &TaskSpec,
    plan: &folds::FoldPlan,
    method: Method,
    cfg: &ProtocolConfig,
) -> Result<MetricSet> {
    task.validate()?;
    if embeddings.n != labels.len() {
        return Err(Error::Invalid(format!(
            "{} embeddings but {} labels",
            embeddings.n,
            labels.len()
        )));
    }
    let mut per_fold = Vec::with_capacity(plan.folds.len());
    for (fi, fold) in plan.folds.iter().enumerate() {
        let train_x = embeddings.subset(&fold.train);
        let train_y = labels.subset(&fold.train);
        let val_x = embeddings.subset(&fold.val);
        let val_y = labels.subset(&fold.val);
        let test_x = embeddings.subset(&fold.test);
        let test_y = labels.subset(&fold.test);
        let preds = match method {
            Method::Knn => {
                let k = knn::grid_search_k(
                    &train_x, &train_y, &val_x, &val_y, &cfg.knn, task,
                )?;
                let kcfg = knn::KnnConfig { k, ..cfg.knn.clone() };
                knn::knn_predict(&train_x, &train_y, &test_x, &kcfg, task)?
            }
            Method::Probe => {
                let seed = worker_seed(cfg.probe.seed, fi as u64);
                let model = probe::train_linear_probe(
                    &train_x, &train_y, &val_x, &val_y, task, &cfg.probe, seed,
                )?;
                model.predict(&test_x, task)?
            }
        };
        per_fold.push(metrics::compute_metrics(&preds, &test_y, task)?);
    }
    Ok(MetricSet::aggregate(&per_fold))
}
