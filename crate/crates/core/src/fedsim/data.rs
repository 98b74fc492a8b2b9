//! Datasets: Gaussian-blob synthetic data, the IDX container used by MNIST,
//! and random sharding across workers.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;
use crate::vector::fill_uniform_sphere;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// `n` labelled feature vectors, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize, split: Split) -> Result<Self> {
        if labels.is_empty() || dim == 0 {
            return invalid("a dataset needs at least one example and one feature");
        }
        if features.len() != labels.len() * dim {
            return invalid(format!(
                "{} feature values do not form {} rows of {dim}",
                features.len(),
                labels.len()
            ));
        }
        if classes < 2 {
            return invalid("need at least two classes");
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return invalid(format!("label {y} not below class count {classes}"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite feature value");
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return invalid(format!("index {i} out of range"));
            }
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dim, self.classes, self.split)
    }

    /// The first `n` examples (or all of them).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

/// Gaussian blobs: class `c` has mean `separation * mu_c` for a random unit
/// `mu_c` and identity covariance. Labels are balanced and shuffled.
pub fn make_synthetic(
    classes: usize,
    dim: usize,
    n_train: usize,
    n_test: usize,
    separation: f64,
    rng: &mut SeededRng,
) -> Result<(Dataset, Dataset)> {
    if classes < 2 || dim < classes {
        return invalid(format!("need C >= 2 and d >= C, got C={classes}, d={dim}"));
    }
    if n_train == 0 || n_test == 0 {
        return invalid("both splits need examples");
    }
    if !separation.is_finite() || separation < 0.0 {
        return invalid("separation must be a nonnegative number");
    }
    let mut means = vec![0.0; classes * dim];
    for mu in means.chunks_exact_mut(dim) {
        fill_uniform_sphere(mu, rng);
        mu.iter_mut().for_each(|v| *v *= separation);
    }
    let draw = |n: usize, split: Split, rng: &mut SeededRng| {
        let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        labels.shuffle(rng);
        let mut features = Vec::with_capacity(n * dim);
        for &y in &labels {
            let mu = &means[y * dim..(y + 1) * dim];
            features.extend(mu.iter().map(|m| m + rng.normal()));
        }
        Dataset::new(features, labels, dim, classes, split)
    };
    let train = draw(n_train, Split::Train, rng)?;
    let test = draw(n_test, Split::Test, rng)?;
    Ok((train, test))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::IdxFormat(format!("{what}: truncated header")))
}

/// Parses an IDX image file (`u8` pixels) into `(count, rows*cols, pixels / 255)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxFormat(format!("images: bad magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if dim == 0 {
        return Err(Error::IdxFormat("images: zero-sized images".into()));
    }
    if body.len() != n * dim {
        return Err(Error::IdxFormat(format!(
            "images: header declares {n} x {rows} x {cols} pixels, file holds {}",
            body.len()
        )));
    }
    Ok((n, dim, body.iter().map(|&p| p as f64 / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxFormat(format!("labels: bad magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::IdxFormat(format!(
            "labels: header declares {n} labels, file holds {}",
            body.len()
        )));
    }
    Ok(body.iter().map(|&y| y as usize).collect())
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]`; the class
/// count is one more than the largest label, and at least 2.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let (n, dim, pixels) = parse_idx_images(&fs::read(images)?)?;
    let ys = parse_idx_labels(&fs::read(labels)?)?;
    if ys.len() != n {
        return Err(Error::IdxFormat(format!("{n} images but {} labels", ys.len())));
    }
    if n == 0 {
        return Err(Error::IdxFormat("empty IDX files".into()));
    }
    let classes = (ys.iter().max().unwrap() + 1).max(2);
    Dataset::new(pixels, ys, dim, classes, split)
}

/// A random permutation of `0..n` cut into `k` shards whose sizes differ by at most one.
pub fn partition_indices(n: usize, k: usize, rng: &mut SeededRng) -> Result<Vec<Vec<usize>>> {
    if k == 0 || n < k {
        return invalid(format!("cannot split {n} examples over {k} workers"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let (base, extra) = (n / k, n % k);
    let mut shards = Vec::with_capacity(k);
    let mut start = 0;
    for w in 0..k {
        let size = base + usize::from(w < extra);
        shards.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(shards)
}

pub fn partition(ds: &Dataset, k: usize, rng: &mut SeededRng) -> Result<Vec<Dataset>> {
    partition_indices(ds.len(), k, rng)?
        .iter()
        .map(|idx| ds.subset(idx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_balanced_and_deterministic() {
        let (a, t) = make_synthetic(4, 20, 103, 40, 2.0, &mut SeededRng::new(1)).unwrap();
        let (b, _) = make_synthetic(4, 20, 103, 40, 2.0, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.len(), t.len(), a.dim(), a.classes()), (103, 40, 20, 4));
        for c in 0..4 {
            let count = a.labels().iter().filter(|&&y| y == c).count();
            assert!((count as f64 - 103.0 / 4.0).abs() <= 1.0);
        }
        assert!(make_synthetic(5, 4, 10, 10, 1.0, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn partition_rules() {
        let shards = partition_indices(100, 10, &mut SeededRng::new(3)).unwrap();
        assert!(shards.iter().all(|s| s.len() == 10));
        let mut all: Vec<usize> = shards.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let odd = partition_indices(23, 5, &mut SeededRng::new(3)).unwrap();
        let sizes: Vec<usize> = odd.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        assert_eq!(odd, partition_indices(23, 5, &mut SeededRng::new(3)).unwrap());
        assert!(partition_indices(3, 5, &mut SeededRng::new(3)).is_err());
    }

    #[test]
    fn idx_header_errors() {
        assert!(matches!(parse_idx_images(&[0, 0, 8]), Err(Error::IdxFormat(_))));
        let mut bad = vec![0, 0, 8, 1];
        bad.extend_from_slice(&[0; 12]);
        assert!(matches!(parse_idx_images(&bad), Err(Error::IdxFormat(_))));
        let labels = [0, 0, 8, 1, 0, 0, 0, 3, 1, 2];
        assert!(matches!(parse_idx_labels(&labels), Err(Error::IdxFormat(_))));
    }
}
