//! Linear probing: a single affine layer on frozen embeddings, trained by
//! mini-batch AdamW with early stopping on validation loss.
//!
//! Features are standardized with train-split statistics before the probe
//! sees them; the statistics travel with the model.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, Labels, Loss, Predictions, TaskKind, TaskSpec};
use crate::sampler::seeded_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 1000,
            patience: 20,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || self.batch_size == 0
            || self.max_epochs == 0
            || self.weight_decay < 0.0
        {
            return Err(Error::Config("probe hyperparameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub outputs: usize,
    pub dim: usize,
    /// outputs x dim, row-major
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
}

impl LinearModel {
    fn zeros(outputs: usize, dim: usize, feat_mean: Vec<f64>, feat_std: Vec<f64>) -> Self {
        LinearModel {
            outputs,
            dim,
            weights: vec![0.0; outputs * dim],
            bias: vec![0.0; outputs],
            feat_mean,
            feat_std,
        }
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.feat_mean.iter().zip(&self.feat_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|c| {
                let w = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, queries: &EmbeddingTable, task: &TaskSpec) -> Result<Predictions> {
        if queries.d != self.dim {
            return Err(Error::Invalid("query dimension mismatch".into()));
        }
        let rows: Vec<Vec<f64>> =
            (0..queries.n).map(|i| self.logits(&self.standardize(queries.row(i)))).collect();
        Ok(match task.kind {
            TaskKind::Classification => Predictions::Class(
                rows.iter()
                    .map(|z| {
                        let mut best = 0;
                        for c in 1..z.len() {
                            if z[c] > z[best] {
                                best = c;
                            }
                        }
                        best
                    })
                    .collect(),
            ),
            TaskKind::Multilabel => Predictions::Scores(
                rows.iter()
                    .map(|z| z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect())
                    .collect(),
            ),
            TaskKind::Regression => Predictions::Continuous(rows),
            TaskKind::Distribution => {
                Predictions::Distribution(rows.iter().map(|z| softmax(z)).collect())
            }
        })
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean batch loss and analytic gradients with respect to the affine
/// parameters, for features given as raw rows of `x` (no standardization).
pub fn batch_loss_and_grad(
    task: &TaskSpec,
    weights: &[f64],
    bias: &[f64],
    x: &EmbeddingTable,
    labels: &Labels,
    batch: &[usize],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (c, d) = (task.outputs, x.d);
    if weights.len() != c * d || bias.len() != c {
        return Err(Error::Invalid("parameter shapes do not match task".into()));
    }
    let b = batch.len();
    if b == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    let mut loss = 0.0;
    let mut gw = vec![0.0; c * d];
    let mut gb = vec![0.0; c];
    for &i in batch {
        let row = x.row(i);
        let z: Vec<f64> = (0..c)
            .map(|k| {
                bias[k] + weights[k * d..(k + 1) * d].iter().zip(row).map(|(a, v)| a * v).sum::<f64>()
            })
            .collect();
        // grad of the per-sample loss with respect to the logits
        let mut gz = vec![0.0; c];
        match (&task.loss, labels) {
            (Loss::CrossEntropy, Labels::Class(ys)) => {
                let y = ys[i];
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                loss += lse - z[y];
                let q = softmax(&z);
                for k in 0..c {
                    gz[k] = q[k] - f64::from(k == y);
                }
            }
            (Loss::MultilabelSoftMargin, Labels::Multilabel(ys)) => {
                for k in 0..c {
                    let y = ys[i][k];
                    loss += (y * softplus(-z[k]) + (1.0 - y) * softplus(z[k])) / c as f64;
                    gz[k] = (sigmoid(z[k]) - y) / c as f64;
                }
            }
            (Loss::PresenceWeightedBce { pos_weight }, Labels::Multilabel(ys)) => {
                for k in 0..c {
                    let y = ys[i][k];
                    loss += (pos_weight * y * softplus(-z[k]) + (1.0 - y) * softplus(z[k]))
                        / c as f64;
                    let s = sigmoid(z[k]);
                    gz[k] = ((1.0 - y) * s - pos_weight * y * (1.0 - s)) / c as f64;
                }
            }
            (Loss::Mse, Labels::Continuous(ys)) => {
                for k in 0..c {
                    let r = z[k] - ys[i][k];
                    loss += r * r / c as f64;
                    gz[k] = 2.0 * r / c as f64;
                }
            }
            (Loss::Kl, Labels::Distribution(ys)) => {
                let q = softmax(&z);
                let p = &ys[i];
                let p_sum: f64 = p.iter().sum();
                for k in 0..c {
                    if p[k] > 0.0 {
                        loss += p[k] * (p[k] / q[k].max(1e-12)).ln();
                    }
                    gz[k] = q[k] * p_sum - p[k];
                }
            }
            _ => return Err(Error::Invalid("labels do not match loss".into())),
        }
        for k in 0..c {
            gb[k] += gz[k];
            let wrow = &mut gw[k * d..(k + 1) * d];
            for (g, v) in wrow.iter_mut().zip(row) {
                *g += gz[k] * v;
            }
        }
    }
    let scale = 1.0 / b as f64;
    loss *= scale;
    gw.iter_mut().for_each(|g| *g *= scale);
    gb.iter_mut().for_each(|g| *g *= scale);
    Ok((loss, gw, gb))
}

pub fn batch_loss(
    task: &TaskSpec,
    weights: &[f64],
    bias: &[f64],
    x: &EmbeddingTable,
    labels: &Labels,
    batch: &[usize],
) -> Result<f64> {
    batch_loss_and_grad(task, weights, bias, x, labels, batch).map(|(l, _, _)| l)
}

struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    fn new(params: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], decay: bool) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            let mut update = mhat / (vhat.sqrt() + self.eps);
            if decay {
                update += self.weight_decay * *p;
            }
            *p -= self.lr * update;
        }
    }
}

fn feature_stats(x: &EmbeddingTable) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; x.d];
    for i in 0..x.n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= x.n as f64);
    let mut var = vec![0.0; x.d];
    for i in 0..x.n {
        for (j, v) in x.row(i).iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    let std = var.iter().map(|v| (v / x.n as f64).sqrt().max(1e-8)).collect();
    (mean, std)
}

fn standardized(x: &EmbeddingTable, mean: &[f64], std: &[f64]) -> EmbeddingTable {
    let mut values = Vec::with_capacity(x.values.len());
    for i in 0..x.n {
        for (j, v) in x.row(i).iter().enumerate() {
            values.push((v - mean[j]) / std[j]);
        }
    }
    EmbeddingTable { n: x.n, d: x.d, values }
}

/// Trains the probe and returns the best-validation snapshot. Stops at
/// `max_epochs` or after `patience` epochs without validation improvement.
pub fn train_linear_probe(
    train: &EmbeddingTable,
    train_labels: &Labels,
    val: &EmbeddingTable,
    val_labels: &Labels,
    task: &TaskSpec,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<LinearModel> {
    task.validate()?;
    cfg.validate()?;
    if train.n == 0 || train.n != train_labels.len() {
        return Err(Error::Invalid("train embeddings and labels misaligned".into()));
    }
    let (mean, std) = feature_stats(train);
    let x = standardized(train, &mean, &std);
    let xv = standardized(val, &mean, &std);
    let mut model = LinearModel::zeros(task.outputs, train.d, mean, std);
    let mut opt_w = AdamW::new(model.weights.len(), cfg.learning_rate, cfg.weight_decay);
    let mut opt_b = AdamW::new(model.bias.len(), cfg.learning_rate, cfg.weight_decay);
    let mut rng = seeded_rng(seed);
    let mut indices: Vec<usize> = (0..x.n).collect();
    let val_idx: Vec<usize> = (0..xv.n).collect();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut since_best = 0usize;
    for epoch in 0..cfg.max_epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(cfg.batch_size) {
            let (loss, gw, gb) =
                batch_loss_and_grad(task, &model.weights, &model.bias, &x, train_labels, batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt_w.step(&mut model.weights, &gw, true);
            opt_b.step(&mut model.bias, &gb, false);
        }
        let monitor = if val_idx.is_empty() {
            batch_loss(task, &model.weights, &model.bias, &x, train_labels, &indices)?
        } else {
            batch_loss(task, &model.weights, &model.bias, &xv, val_labels, &val_idx)?
        };
        if !monitor.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let improved = best.as_ref().map(|(b, _, _)| monitor < *b).unwrap_or(true);
        if improved {
            best = Some((monitor, model.weights.clone(), model.bias.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    if let Some((_, w, b)) = best {
        model.weights = w;
        model.bias = b;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::TaskKind;

    fn table(rows: Vec<Vec<f64>>) -> EmbeddingTable {
        let d = rows[0].len();
        let n = rows.len();
        EmbeddingTable::new(n, d, rows.concat()).unwrap()
    }

    #[test]
    fn zero_init_cross_entropy_is_ln_c() {
        for c in [2usize, 3, 7] {
            let task = TaskSpec::new(TaskKind::Classification, c);
            let x = table(vec![vec![0.3, -0.2, 1.0]; 4]);
            let labels = Labels::Class(vec![0, 1 % c, 0, 1 % c]);
            let w = vec![0.0; c * 3];
            let b = vec![0.0; c];
            let loss = batch_loss(&task, &w, &b, &x, &labels, &[0, 1, 2, 3]).unwrap();
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
        }
    }

    fn finite_diff_check(task: &TaskSpec, x: &EmbeddingTable, labels: &Labels) {
        use rand::Rng;
        let mut rng = seeded_rng(13);
        let (c, d) = (task.outputs, x.d);
        let w: Vec<f64> = (0..c * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let batch: Vec<usize> = (0..x.n).collect();
        let (_, gw, gb) = batch_loss_and_grad(task, &w, &b, x, labels, &batch).unwrap();
        let h = 1e-5;
        let mut num_gw = Vec::with_capacity(gw.len());
        for i in 0..w.len() {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let lp = batch_loss(task, &wp, &b, x, labels, &batch).unwrap();
            let lm = batch_loss(task, &wm, &b, x, labels, &batch).unwrap();
            num_gw.push((lp - lm) / (2.0 * h));
        }
        let mut num_gb = Vec::with_capacity(gb.len());
        for i in 0..b.len() {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[i] += h;
            bm[i] -= h;
            let lp = batch_loss(task, &w, &bp, x, labels, &batch).unwrap();
            let lm = batch_loss(task, &w, &bm, x, labels, &batch).unwrap();
            num_gb.push((lp - lm) / (2.0 * h));
        }
        let rel = |a: &[f64], n: &[f64]| {
            let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
            diff / norm.max(1e-8)
        };
        assert!(rel(&gw, &num_gw) < 1e-4, "weight gradient mismatch for {:?}", task.loss);
        assert!(rel(&gb, &num_gb) < 1e-4, "bias gradient mismatch for {:?}", task.loss);
    }

    fn random_instance(seed: u64) -> EmbeddingTable {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        table((0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::Rng;
        let mut rng = seeded_rng(17);
        let x = random_instance(21);

        let ce = TaskSpec::new(TaskKind::Classification, 3);
        finite_diff_check(&ce, &x, &Labels::Class(vec![0, 2, 1, 0, 2]));

        let ml = TaskSpec::new(TaskKind::Multilabel, 3);
        let y: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| f64::from(rng.gen_bool(0.5))).collect())
            .collect();
        finite_diff_check(&ml, &x, &Labels::Multilabel(y.clone()));

        let pw = TaskSpec {
            kind: TaskKind::Multilabel,
            outputs: 3,
            loss: Loss::PresenceWeightedBce { pos_weight: 12.0 },
            primary_metric: "micro_f1".into(),
        };
        finite_diff_check(&pw, &x, &Labels::Multilabel(y));

        let mse = TaskSpec::new(TaskKind::Regression, 2);
        let yr: Vec<Vec<f64>> =
            (0..5).map(|_| (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        finite_diff_check(&mse, &x, &Labels::Continuous(yr));

        let kl = TaskSpec::new(TaskKind::Distribution, 3);
        let yd: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        finite_diff_check(&kl, &x, &Labels::Distribution(yd));
    }

    fn separable_blobs(n_per: usize, seed: u64) -> (EmbeddingTable, Labels) {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n_per * 2 {
            let class = i % 2;
            let center = if class == 0 { -2.0 } else { 2.0 };
            rows.push(vec![
                center + rng.gen_range(-0.5..0.5),
                -center + rng.gen_range(-0.5..0.5),
            ]);
            ys.push(class);
        }
        (table(rows), Labels::Class(ys))
    }

    #[test]
    fn separable_blobs_reach_99_percent() {
        let (x, y) = separable_blobs(100, 3);
        let (xv, yv) = separable_blobs(20, 4);
        let task = TaskSpec::new(TaskKind::Classification, 2);
        let cfg = ProbeConfig { max_epochs: 200, ..Default::default() };
        let model = train_linear_probe(&x, &y, &xv, &yv, &task, &cfg, 1).unwrap();
        let preds = model.predict(&x, &task).unwrap();
        let m = crate::eval::metrics::compute_metrics(&preds, &y, &task).unwrap();
        assert!(m["accuracy"] >= 0.99, "train accuracy {}", m["accuracy"]);
    }

    #[test]
    fn first_epoch_decreases_training_loss() {
        let (x, y) = separable_blobs(50, 9);
        let task = TaskSpec::new(TaskKind::Classification, 2);
        let idx: Vec<usize> = (0..x.n).collect();
        let before = batch_loss(&task, &vec![0.0; 4], &vec![0.0; 2], &x, &y, &idx).unwrap();
        let cfg = ProbeConfig { max_epochs: 1, ..Default::default() };
        let model = train_linear_probe(&x, &y, &x, &y, &task, &cfg, 2).unwrap();
        let sx = standardized(&x, &model.feat_mean, &model.feat_std);
        let after = batch_loss(&task, &model.weights, &model.bias, &sx, &y, &idx).unwrap();
        assert!(after < before, "loss {before} -> {after}");
    }
}
