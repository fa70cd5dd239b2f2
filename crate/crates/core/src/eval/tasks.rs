//! Task constructors: biomass decile binning with a merged zero bin, and
//! the KL divergence used by distribution tasks.

use crate::{Error, Result};

const KL_EPS: f64 = 1e-12;

/// Kullback-Leibler divergence sum p_i ln(p_i / q_i), with 0 ln 0 = 0 and q
/// clamped below by 1e-12.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Invalid("distribution lengths differ".into()));
    }
    let mut sum = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi < 0.0 || *qi < 0.0 {
            return Err(Error::Invalid("distributions must be nonnegative".into()));
        }
        if *pi > 0.0 {
            sum += pi * (pi / qi.max(KL_EPS)).ln();
        }
    }
    Ok(sum)
}

#[derive(Debug, Clone)]
pub struct BinSpec {
    /// Interior edges; bin j holds values v with edges[j-1] <= v < edges[j].
    pub edges: Vec<f64>,
    pub n_bins: usize,
}

impl BinSpec {
    pub fn bin_of(&self, v: f64) -> usize {
        self.edges.iter().filter(|e| v >= **e).count()
    }
}

/// Global decile edges over every pixel of every image, with the first
/// three decile bins merged into one (they hold the zero-valued ground
/// pixels), leaving 8 bins. Each image maps to the proportion of its pixels
/// per bin.
pub fn biomassters_bins(
    images: &[Vec<f64>],
    n_deciles: usize,
) -> Result<(BinSpec, Vec<Vec<f64>>)> {
    if images.is_empty() {
        return Err(Error::Invalid("empty dataset".into()));
    }
    for (i, img) in images.iter().enumerate() {
        if img.is_empty() {
            return Err(Error::Invalid(format!("image {i} has no pixels")));
        }
    }
    if n_deciles < 4 {
        return Err(Error::Invalid("need at least 4 quantile bins".into()));
    }
    let mut all: Vec<f64> = images.iter().flatten().copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = all.len();
    // lower-value quantile edges at k/n_deciles, k = 1..n_deciles-1
    let decile_edges: Vec<f64> =
        (1..n_deciles).map(|k| all[k * n / n_deciles]).collect();
    // merging the first three bins drops the first two interior edges
    let edges: Vec<f64> = decile_edges[2..].to_vec();
    let spec = BinSpec { n_bins: edges.len() + 1, edges };
    let mut dists = Vec::with_capacity(images.len());
    for img in images {
        let mut counts = vec![0usize; spec.n_bins];
        for &v in img {
            counts[spec.bin_of(v).min(spec.n_bins - 1)] += 1;
        }
        dists.push(counts.iter().map(|c| *c as f64 / img.len() as f64).collect());
    }
    Ok((spec, dists))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_identities() {
        let p = vec![0.25, 0.25, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let kl = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((kl - 2f64.ln()).abs() < 1e-12);
        assert!(kl_divergence(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kl_nonnegative_random_pairs() {
        use rand::Rng;
        let mut rng = crate::sampler::seeded_rng(11);
        for _ in 0..1000 {
            let mut p: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut q: Vec<f64> = (0..8).map(|_| rng.gen_range(0.001..1.0)).collect();
            let ps: f64 = p.iter().sum();
            let qs: f64 = q.iter().sum();
            p.iter_mut().for_each(|v| *v /= ps);
            q.iter_mut().for_each(|v| *v /= qs);
            assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn zero_inflated_dataset_yields_eight_bins() {
        use rand::Rng;
        let mut rng = crate::sampler::seeded_rng(5);
        let images: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                (0..200)
                    .map(|_| {
                        // keep the zero fraction safely under 30% so the
                        // third decile edge is strictly positive
                        if rng.gen_bool(0.25) {
                            0.0
                        } else {
                            rng.gen_range(0.0001..100.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let (spec, dists) = biomassters_bins(&images, 10).unwrap();
        assert_eq!(spec.n_bins, 8);
        // all zeros land in the merged first bin
        assert_eq!(spec.bin_of(0.0), 0);
        for d in &dists {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_bin_image_is_one_hot() {
        let mut images: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 + 1.0; 10]).collect();
        images.push(vec![0.0; 30]); // zeros to anchor the lower deciles
        let (spec, dists) = biomassters_bins(&images, 10).unwrap();
        for d in &dists {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // a constant image concentrates in exactly one bin
        let hot: Vec<&f64> = dists[0].iter().filter(|v| **v > 0.0).collect();
        assert_eq!(hot.len(), 1);
        assert_eq!(*hot[0], 1.0);
        assert_eq!(spec.n_bins, 8);
    }

    #[test]
    fn empty_inputs_error() {
        assert!(biomassters_bins(&[], 10).is_err());
        assert!(biomassters_bins(&[vec![]], 10).is_err());
    }
}
