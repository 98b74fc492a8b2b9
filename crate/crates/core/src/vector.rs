//! Dense real vectors, unit vectors and chordal geometry.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::SeededRng;

/// Unit-norm tolerance accepted by [`UnitVector::new`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A finite real vector of positive dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return invalid("vector must have positive dimension");
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return invalid(format!("entry {i} is not finite"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for RealVector {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RealVector> for Vec<f64> {
    fn from(v: RealVector) -> Self {
        v.0
    }
}

/// A vector with `| ||x|| - 1 | <= 1e-9`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps `entries`, which must already have unit norm.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return invalid("unit vector must have positive dimension");
        }
        let n = norm(&entries);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return invalid(format!("norm {n} is not 1"));
        }
        Ok(Self(entries))
    }

    /// Scales `entries` to unit norm. Fails on the zero vector.
    pub fn normalize(mut entries: Vec<f64>) -> Result<Self> {
        let n = norm(&entries);
        if !(n > 0.0 && n.is_finite()) {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        entries.iter_mut().for_each(|x| *x /= n);
        Ok(Self(entries))
    }

    /// The `i`-th canonical basis vector of dimension `dim`.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return invalid(format!("basis index {i} out of range for dim {dim}"));
        }
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|x| -x).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sqrt(1 - (x.y)^2)` for unit-norm slices, radicand clamped at zero.
pub fn chordal_from_dot(inner: f64) -> f64 {
    (1.0 - inner * inner).max(0.0).sqrt()
}

pub fn chordal_distance(x: &UnitVector, y: &UnitVector) -> Result<f64> {
    if x.dim() != y.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", x.dim(), y.dim()));
    }
    Ok(chordal_from_dot(dot(x.as_slice(), y.as_slice())))
}

pub fn sample_gaussian_vector(dim: usize, rng: &mut SeededRng) -> Result<RealVector> {
    if dim == 0 {
        return invalid("dim must be at least 1");
    }
    Ok(RealVector((0..dim).map(|_| rng.normal()).collect()))
}

/// Uniform draw from the unit sphere in `R^dim` (normalized Gaussian).
pub fn sample_uniform_sphere(dim: usize, rng: &mut SeededRng) -> Result<UnitVector> {
    if dim == 0 {
        return invalid("dim must be at least 1");
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if norm(&v) > 0.0 {
            return UnitVector::normalize(v);
        }
    }
}

/// Fills `out` with a uniform unit vector without allocating.
pub(crate) fn fill_uniform_sphere(out: &mut [f64], rng: &mut SeededRng) {
    loop {
        out.iter_mut().for_each(|x| *x = rng.normal());
        let n = norm(out);
        if n > 0.0 {
            out.iter_mut().for_each(|x| *x /= n);
            return;
        }
    }
}
