//! One-sample Kolmogorov-Smirnov testing and the reference distributions
//! used to check block uniformity and the Beta law of the hinge entries.

use serde::{Deserialize, Serialize};

use crate::distortion::sample_hinge;
use crate::error::{invalid, Result};
use crate::rng::SeededRng;
use crate::special::{kolmogorov_sf, regularized_incomplete_beta};
use crate::vector::{dot, fill_uniform_sphere};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// `sup |F_emp - F|`.
    pub statistic: f64,
    /// Asymptotic Kolmogorov p-value of `sqrt(n) * statistic`.
    pub p_value: f64,
    pub n: usize,
}

/// Two-sided one-sample KS test of `samples` against the continuous CDF `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.is_empty() {
        return invalid("KS test needs at least one sample");
    }
    if samples.iter().any(|x| x.is_nan()) {
        return invalid("KS samples contain NaN");
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut statistic = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        statistic = statistic.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_sf(n.sqrt() * statistic),
        n: sorted.len(),
    })
}

/// CDF of `Beta(a, b)` at `x`.
pub fn beta_cdf(a: f64, b: f64, x: f64) -> Result<f64> {
    regularized_incomplete_beta(a, b, x)
}

/// CDF of one coordinate of a uniform unit vector in `R^dim`:
/// `(1 + sign(t) I_{t^2}(1/2, (dim-1)/2)) / 2`.
pub fn sphere_coordinate_cdf(dim: usize, t: f64) -> Result<f64> {
    if dim < 2 {
        return invalid("sphere coordinate CDF needs dim >= 2");
    }
    if !(-1.0..=1.0).contains(&t) {
        return invalid(format!("coordinate {t} outside [-1, 1]"));
    }
    let i = regularized_incomplete_beta(0.5, (dim as f64 - 1.0) / 2.0, t * t)?;
    Ok(0.5 * (1.0 + t.signum() * i))
}

/// Which block to test and an optional deliberate distortion of it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockUniformityOptions {
    /// Zero-based block index.
    pub block_index: usize,
    /// Added to the block's first coordinate before normalizing; `0` for the null.
    pub skew: f64,
}

impl Default for BlockUniformityOptions {
    fn default() -> Self {
        Self {
            block_index: 0,
            skew: 0.0,
        }
    }
}

/// Draws `num_samples` uniform unit vectors in `R^(ML)`, normalizes block
/// `block_index` and tests its first coordinate against the coordinate
/// law of a uniform vector in `R^L`.
pub fn test_block_uniformity(
    num_samples: usize,
    m: usize,
    l: usize,
    opts: &BlockUniformityOptions,
    rng: &mut SeededRng,
) -> Result<KsResult> {
    if l < 2 || m == 0 || opts.block_index >= m {
        return invalid(format!(
            "need L >= 2 and block index < M (L={l}, M={m}, index={})",
            opts.block_index
        ));
    }
    let dim = m * l;
    let mut f = vec![0.0; dim];
    let mut coords = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        fill_uniform_sphere(&mut f, rng);
        let block = &mut f[opts.block_index * l..(opts.block_index + 1) * l];
        block[0] += opts.skew;
        coords.push((block[0] / dot(block, block).sqrt()).clamp(-1.0, 1.0));
    }
    ks_test(&coords, |t| sphere_coordinate_cdf(l, t).expect("t clamped"))
}

/// Tests `h_1^2` of sampled hinge vectors against `Beta(L/2, (ML - L)/2)`.
pub fn test_hinge_beta(num_samples: usize, m: usize, l: usize, rng: &mut SeededRng) -> Result<KsResult> {
    if m < 2 || l == 0 {
        return invalid("hinge Beta law needs M >= 2 and L >= 1");
    }
    let a = l as f64 / 2.0;
    let b = (m * l - l) as f64 / 2.0;
    let mut xs = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let h = sample_hinge(m, l, rng)?;
        xs.push(h.as_slice()[0].powi(2).min(1.0));
    }
    ks_test(&xs, |x| beta_cdf(a, b, x).expect("x in [0, 1]"))
}

/// Tests the normalized first coordinate of block `block_index` (length
/// `l`, zero-padded) of each recorded gradient against the uniform-sphere
/// coordinate law. All-zero blocks are skipped.
pub fn test_gradient_uniformity(gradients: &[Vec<f64>], l: usize, block_index: usize) -> Result<KsResult> {
    if l < 2 {
        return invalid("need L >= 2");
    }
    let mut coords = Vec::with_capacity(gradients.len());
    let mut block = vec![0.0; l];
    for g in gradients {
        let start = (block_index * l).min(g.len());
        let end = ((block_index + 1) * l).min(g.len());
        if start == end {
            return invalid(format!(
                "block {block_index} lies outside a gradient of dim {}",
                g.len()
            ));
        }
        block.fill(0.0);
        block[..end - start].copy_from_slice(&g[start..end]);
        let n = dot(&block, &block).sqrt();
        if n > 0.0 && n.is_finite() {
            coords.push((block[0] / n).clamp(-1.0, 1.0));
        }
    }
    ks_test(&coords, |t| sphere_coordinate_cdf(l, t).expect("t clamped"))
}

/// Pearson chi-square statistic of `values` in `[0, 1]` against the
/// uniform law over `bins` equal bins.
pub fn uniformity_chi_square(values: &[f64], bins: usize) -> Result<f64> {
    if values.is_empty() || bins < 2 {
        return invalid("need samples and at least two bins");
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return invalid(format!("value {v} outside [0, 1]"));
        }
        counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    Ok(counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_statistic() {
        let r = ks_test(&[0.5; 40], |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
        assert!(r.p_value < 1e-6);
        assert!(ks_test(&[], |x| x).is_err());
    }

    #[test]
    fn p_value_decreases_with_statistic() {
        let mut last = 1.0;
        for k in 0..60 {
            let shift = k as f64 * 0.002;
            let xs: Vec<f64> = (0..500).map(|i| ((i as f64 + 0.5) / 500.0 + shift).min(1.0)).collect();
            let r = ks_test(&xs, |x| x).unwrap();
            assert!(r.p_value <= last + 1e-15);
            last = r.p_value;
        }
    }

    #[test]
    fn beta_cdf_examples() {
        assert_eq!(beta_cdf(5.0, 45.0, 0.0).unwrap(), 0.0);
        assert_eq!(beta_cdf(5.0, 45.0, 1.0).unwrap(), 1.0);
        assert!((beta_cdf(1.0, 1.0, 0.5).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sphere_cdf_examples() {
        assert!((sphere_coordinate_cdf(7, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((sphere_coordinate_cdf(7, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(sphere_coordinate_cdf(7, -1.0).unwrap().abs() < 1e-15);
        for t in [-0.9, -0.3, 0.2, 2f64.sqrt() / 2.0, 0.99] {
            let arcsine = 0.5 + t.asin() / std::f64::consts::PI;
            assert!((sphere_coordinate_cdf(2, t).unwrap() - arcsine).abs() < 1e-10);
        }
        assert!((sphere_coordinate_cdf(2, 2f64.sqrt() / 2.0).unwrap() - 0.75).abs() < 1e-10);
        // dim 3: a coordinate is uniform on [-1, 1]
        for t in [-0.7, 0.1, 0.55] {
            assert!((sphere_coordinate_cdf(3, t).unwrap() - (t + 1.0) / 2.0).abs() < 1e-10);
        }
        assert!(sphere_coordinate_cdf(5, 1.2).is_err());
        assert!(sphere_coordinate_cdf(1, 0.3).is_err());
    }

    #[test]
    fn chi_square_counts() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert_eq!(uniformity_chi_square(&xs, 10).unwrap(), 0.0);
        let skewed = vec![0.05; 100];
        assert!((uniformity_chi_square(&skewed, 10).unwrap() - 900.0).abs() < 1e-9);
    }
}
