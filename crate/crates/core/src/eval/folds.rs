//! Fold plans: k disjoint test folds covering all samples; the remaining
//! ids split into train/validation per fold.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::sampler::{seeded_rng, worker_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fold {
    pub test: Vec<usize>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

pub const DEFAULT_K_FOLDS: usize = 10;
pub const DEFAULT_TRAIN_FRAC: f64 = 0.9;
pub const DEFAULT_VAL_FRAC: f64 = 0.1;

pub fn make_folds(
    n: usize,
    k_folds: usize,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<FoldPlan> {
    if k_folds == 0 || n < k_folds {
        return Err(Error::Config(format!("need at least {k_folds} samples, have {n}")));
    }
    if !(train_frac > 0.0 && val_frac >= 0.0 && (train_frac + val_frac - 1.0).abs() < 1e-9) {
        return Err(Error::Config("train and validation fractions must sum to 1".into()));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut seeded_rng(seed));

    // near-equal test folds; the first n % k folds take one extra sample
    let base = n / k_folds;
    let extra = n % k_folds;
    let mut folds = Vec::with_capacity(k_folds);
    let mut offset = 0;
    for fi in 0..k_folds {
        let size = base + usize::from(fi < extra);
        let test: Vec<usize> = ids[offset..offset + size].to_vec();
        offset += size;
        let mut rest: Vec<usize> =
            ids.iter().copied().filter(|i| !test.contains(i)).collect();
        rest.shuffle(&mut seeded_rng(worker_seed(seed, fi as u64 + 1)));
        let train_count = (rest.len() as f64 * train_frac).round() as usize;
        let train = rest[..train_count].to_vec();
        let val = rest[train_count..].to_vec();
        folds.push(Fold { test, train, val });
    }
    Ok(FoldPlan { k_folds, train_frac, val_frac, seed, folds })
}
