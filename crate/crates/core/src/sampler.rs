//! Pretraining sampling weights and reproducible draws.
//!
//! Non-vegetated locations (mean NDVI below threshold in every season with
//! data) are downweighted; mountain locations are upweighted. Factors
//! compose multiplicatively. All draws use a seedable PCG-64 generator so
//! sequences are reproducible across platforms.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LocationAttributes {
    pub point_id: u64,
    pub mean_ndvi_per_season: [Option<f64>; 4],
    pub is_mountain: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightPolicy {
    pub nonveg_divisor: f64,
    pub nonveg_threshold: f64,
    pub mountain_multiplier: f64,
}

impl Default for WeightPolicy {
    fn default() -> Self {
        WeightPolicy { nonveg_divisor: 4.0, nonveg_threshold: 0.1, mountain_multiplier: 2.0 }
    }
}

impl WeightPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.nonveg_divisor > 0.0 && self.mountain_multiplier > 0.0) {
            return Err(Error::Config("weight factors must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized difference vegetation index from NIR (b8) and red (b4)
/// reflectances. Defined as 0 when both bands are zero.
pub fn ndvi(b8: f64, b4: f64) -> Result<f64> {
    if b8 < 0.0 || b4 < 0.0 {
        return Err(Error::Invalid(format!("negative reflectance: b8={b8}, b4={b4}")));
    }
    let sum = b8 + b4;
    if sum == 0.0 {
        Ok(0.0)
    } else {
        Ok((b8 - b4) / sum)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightFactors {
    pub non_vegetated: bool,
    pub mountain: bool,
    /// No seasonal NDVI available; the location was treated as vegetated.
    pub ndvi_missing: bool,
}

/// Sampling weight for one location. Starts at 1, divided for non-vegetated
/// cells, multiplied for mountains.
pub fn location_weight(attrs: &LocationAttributes, policy: &WeightPolicy) -> Result<(f64, WeightFactors)> {
    policy.validate()?;
    for v in attrs.mean_ndvi_per_season.iter().flatten() {
        if !(-1.0..=1.0).contains(v) {
            return Err(Error::Invalid(format!("NDVI {v} out of [-1,1]")));
        }
    }
    let present: Vec<f64> = attrs.mean_ndvi_per_season.iter().flatten().copied().collect();
    let ndvi_missing = present.is_empty();
    let non_vegetated = !ndvi_missing && present.iter().all(|v| *v < policy.nonveg_threshold);
    let mut weight = 1.0;
    if non_vegetated {
        weight /= policy.nonveg_divisor;
    }
    if attrs.is_mountain {
        weight *= policy.mountain_multiplier;
    }
    Ok((weight, WeightFactors { non_vegetated, mountain: attrs.is_mountain, ndvi_missing }))
}

/// Deterministic per-worker seed derivation (splitmix64 over base + index).
pub fn worker_seed(base: u64, worker: u64) -> u64 {
    let mut z = base.wrapping_add(worker.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

/// `n` categorical draws with replacement, probability proportional to
/// weight.
pub fn draw_locations(weights: &[f64], n: usize, rng: &mut Pcg64) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::Invalid("weights must be nonempty".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Invalid("all weights must be positive".into()));
    }
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// `m` distinct seasons via a partial Fisher-Yates shuffle: uniform over
/// ordered m-subsets, never repeating a season.
pub fn draw_seasons(available: &[usize], m: usize, rng: &mut Pcg64) -> Result<Vec<usize>> {
    if m == 0 || m > available.len() {
        return Err(Error::Invalid(format!(
            "cannot draw {m} distinct seasons from {} available",
            available.len()
        )));
    }
    let mut pool: Vec<usize> = available.to_vec();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
        out.push(pool[i]);
    }
    Ok(out)
}
