//! Grassmannian codebooks.
//!
//! Two kinds are supported:
//!
//! * **even-line** codebooks quantize normalized block gradients. Only the
//!   half `C+` of size `2^(bits-1)` is stored; the other half is its
//!   negation and is addressed with a separate sign bit.
//! * **positive** codebooks quantize the hinge vector. All `2^bits`
//!   codewords are stored and every entry is strictly positive.
//!
//! `C+` is designed by Grassmannian line packing (maximize the minimum
//! pairwise chordal distance) with a repulsion heuristic; the positive
//! codebook by a Lloyd iteration on the manifold.
//!
//! # File format
//!
//! All integers and floats little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `b"GQCB"` | 4 bytes |
//! | format version (= 1) | u32 |
//! | dim | u32 |
//! | kind (0 = even-line, 1 = positive) | u8 |
//! | bits | u32 |
//! | design seed | u64 |
//! | design iterations | u64 |
//! | min pairwise chordal distance | f64 |
//! | codeword count | u64 |
//! | codewords, row-major | count * dim * f64 |

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;
use crate::vector::{chordal_from_dot, dot, fill_uniform_sphere, UnitVector, UNIT_TOLERANCE};

/// Largest number of stored codewords any codebook may have.
pub const MAX_CODEWORDS: usize = 1 << 20;

pub const FILE_MAGIC: [u8; 4] = *b"GQCB";
pub const FILE_VERSION: u32 = 1;

/// Entries of positive codewords are kept at or above this floor.
const POSITIVE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodebookKind {
    EvenLine,
    Positive,
}

impl CodebookKind {
    fn tag(self) -> u8 {
        match self {
            CodebookKind::EvenLine => 0,
            CodebookKind::Positive => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(CodebookKind::EvenLine),
            1 => Ok(CodebookKind::Positive),
            t => Err(Error::CodebookFormat(format!("unknown codebook kind tag {t}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    pub seed: u64,
    pub iterations: u64,
    pub min_pairwise_chordal: f64,
}

/// Number of stored codewords for a codebook of `kind` with `bits` bits.
pub fn stored_count(kind: CodebookKind, bits: u32) -> Result<usize> {
    let exponent = match kind {
        CodebookKind::EvenLine => {
            if bits == 0 {
                return invalid("an even-line codebook needs at least the sign bit");
            }
            bits - 1
        }
        CodebookKind::Positive => bits,
    };
    if exponent > 20 {
        return Err(Error::ResourceLimit(format!(
            "{kind:?} codebook with {bits} bits needs 2^{exponent} stored codewords (cap 2^20)"
        )));
    }
    Ok(1usize << exponent)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrassmannCodebook {
    dim: usize,
    kind: CodebookKind,
    bits: u32,
    data: Vec<f64>,
    meta: DesignMeta,
}

/// Result of quantizing onto an even codebook.
#[derive(Clone, Debug, PartialEq)]
pub struct LineQuantization {
    pub index: usize,
    /// `+1.0` or `-1.0`.
    pub sign: f64,
    /// `sign * codeword`.
    pub codeword: UnitVector,
}

impl GrassmannCodebook {
    /// Builds a codebook from row-major codewords, checking every invariant.
    pub fn new(kind: CodebookKind, bits: u32, dim: usize, data: Vec<f64>, meta: DesignMeta) -> Result<Self> {
        if dim == 0 {
            return invalid("codebook dimension must be positive");
        }
        let count = stored_count(kind, bits)?;
        if data.len() != count * dim {
            return invalid(format!(
                "expected {count} codewords of dim {dim}, got {} values",
                data.len()
            ));
        }
        for (i, c) in data.chunks_exact(dim).enumerate() {
            let n = dot(c, c).sqrt();
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
                return invalid(format!("codeword {i} has norm {n}"));
            }
            if kind == CodebookKind::Positive && c.iter().any(|&x| x <= 0.0) {
                return invalid(format!("codeword {i} of a positive codebook has a non-positive entry"));
            }
        }
        Ok(Self {
            dim,
            kind,
            bits,
            data,
            meta,
        })
    }

    /// Same as [`GrassmannCodebook::new`] but fills in the min-distance meta field.
    pub fn from_codewords(
        kind: CodebookKind,
        bits: u32,
        dim: usize,
        data: Vec<f64>,
        seed: u64,
        iterations: u64,
    ) -> Result<Self> {
        let mut cb = Self::new(
            kind,
            bits,
            dim,
            data,
            DesignMeta {
                seed,
                iterations,
                min_pairwise_chordal: 1.0,
            },
        )?;
        cb.meta.min_pairwise_chordal = min_pairwise_chordal(&cb);
        Ok(cb)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn meta(&self) -> &DesignMeta {
        &self.meta
    }

    /// Number of stored codewords.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn codewords(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Index of the stored codeword with the largest `|x . c|` (lowest index on
    /// ties), and the inner product itself.
    pub fn nearest_line(&self, x: &[f64]) -> (usize, f64) {
        let mut best = 0;
        let mut best_abs = f64::NEG_INFINITY;
        let mut best_dot = 0.0;
        for (i, c) in self.codewords().enumerate() {
            let d = dot(x, c);
            if d.abs() > best_abs {
                best_abs = d.abs();
                best_dot = d;
                best = i;
            }
        }
        (best, best_dot)
    }

    /// Nearest line in `C+` by chordal distance; the sign makes `sign * c`
    /// the Euclidean-nearest member of `C+ U C-`.
    pub fn quantize_line(&self, x: &UnitVector) -> Result<LineQuantization> {
        if self.kind != CodebookKind::EvenLine {
            return invalid("quantize_line needs an even-line codebook");
        }
        self.check_dim(x.dim())?;
        let (index, d) = self.nearest_line(x.as_slice());
        let sign = if d >= 0.0 { 1.0 } else { -1.0 };
        let codeword = self.codeword(index).iter().map(|v| sign * v).collect();
        Ok(LineQuantization {
            index,
            sign,
            codeword: UnitVector::new(codeword)?,
        })
    }

    /// Nearest codeword of a positive codebook for a nonnegative unit `x`.
    pub fn quantize_positive(&self, x: &UnitVector) -> Result<(usize, UnitVector)> {
        if self.kind != CodebookKind::Positive {
            return invalid("quantize_positive needs a positive codebook");
        }
        self.check_dim(x.dim())?;
        if x.as_slice().iter().any(|&v| v < 0.0) {
            return invalid("quantize_positive input has negative entries");
        }
        let (index, _) = self.nearest_line(x.as_slice());
        Ok((index, UnitVector::new(self.codeword(index).to_vec())?))
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return invalid(format!("input dim {dim} != codebook dim {}", self.dim));
        }
        Ok(())
    }

    /// Mean squared chordal distance from `samples` (row-major) to the codebook.
    pub fn chordal_distortion(&self, samples: &[f64]) -> f64 {
        let n = samples.len() / self.dim;
        let total: f64 = samples
            .chunks_exact(self.dim)
            .map(|x| {
                let (_, d) = self.nearest_line(x);
                (1.0 - d * d).max(0.0)
            })
            .sum();
        total / n as f64
    }
}

/// Exact minimum pairwise chordal distance; `1` when fewer than two codewords.
pub fn min_pairwise_chordal(cb: &GrassmannCodebook) -> f64 {
    max_abs_coherence(&cb.data, cb.dim).map_or(1.0, chordal_from_dot)
}

/// `max_{i<j} |c_i . c_j|`, or `None` for fewer than two rows.
fn max_abs_coherence(data: &[f64], dim: usize) -> Option<f64> {
    let n = data.len() / dim;
    if n < 2 {
        return None;
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        let ci = &data[i * dim..(i + 1) * dim];
        for j in (i + 1)..n {
            let d = dot(ci, &data[j * dim..(j + 1) * dim]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    Some(worst)
}

/// Parameters of the line-packing design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingOptions {
    pub seed: u64,
    /// Repulsion iterations per restart.
    pub iterations: u64,
    /// Independent random starts; the best configuration wins.
    pub restarts: u32,
}

impl PackingOptions {
    pub fn new(seed: u64, iterations: u64) -> Self {
        Self {
            seed,
            iterations,
            restarts: 8,
        }
    }
}

/// Line packing with the default of 8 restarts.
pub fn design_line_packing(dim: usize, bits: u32, seed: u64, iterations: u64) -> Result<GrassmannCodebook> {
    design_line_packing_with(dim, bits, &PackingOptions::new(seed, iterations))
}

/// Designs `C+` of an even codebook by maximizing the minimum pairwise
/// chordal distance.
///
/// Each restart starts from uniform random lines and runs projected
/// repulsion steps: every line is pushed away from the others with weight
/// `sign(c_ij) * (|c_ij| / c_max)^q`, so the closest pairs dominate, then
/// renormalized. The step size shrinks whenever the best coherence has not
/// improved for a while. The best configuration seen at any step of any
/// restart is kept, so extra iterations never lower the recorded distance.
pub fn design_line_packing_with(dim: usize, bits: u32, opts: &PackingOptions) -> Result<GrassmannCodebook> {
    if dim == 0 {
        return invalid("dim must be positive");
    }
    if opts.restarts == 0 {
        return invalid("at least one restart is required");
    }
    let n = stored_count(CodebookKind::EvenLine, bits)?;
    if n == 1 {
        let data = UnitVector::basis(dim, 0)?.into_vec();
        return GrassmannCodebook::new(
            CodebookKind::EvenLine,
            bits,
            dim,
            data,
            DesignMeta {
                seed: opts.seed,
                iterations: opts.iterations,
                min_pairwise_chordal: 1.0,
            },
        );
    }
    if n > 1 << 14 {
        return Err(Error::ResourceLimit(format!(
            "line packing is quadratic in the codebook size; {n} lines is too many (use a random codebook)"
        )));
    }
    let root = SeededRng::new(opts.seed);
    let results: Vec<(f64, Vec<f64>)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.substream(r as u64);
            pack_once(n, dim, opts.iterations, &mut rng)
        })
        .collect();
    // lowest coherence wins, earliest restart on ties
    let (_, best) = results
        .into_iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .expect("restarts >= 1");
    GrassmannCodebook::from_codewords(CodebookKind::EvenLine, bits, dim, best, opts.seed, opts.iterations)
}

/// Starts smooth (spreads all lines) and sharpens towards the max-min
/// objective.
fn repulsion_power(iteration: u64) -> i32 {
    (POWER_START + (iteration / POWER_RAMP) as i32).min(POWER_END)
}

const POWER_START: i32 = 3;
const POWER_END: i32 = 61;
const POWER_RAMP: u64 = 50;
const PATIENCE: u64 = 500;

fn pack_once(n: usize, dim: usize, iterations: u64, rng: &mut SeededRng) -> (f64, Vec<f64>) {
    let mut x = vec![0.0; n * dim];
    for row in x.chunks_exact_mut(dim) {
        fill_uniform_sphere(row, rng);
    }
    let mut gram = vec![0.0; n * n];
    let mut force = vec![0.0; n * dim];
    let mut best = x.clone();
    let mut best_coh = f64::INFINITY;
    let mut step = 0.1;
    let mut stale = 0u64;

    for it in 0..=iterations {
        let mut coh = 0.0f64;
        for i in 0..n {
            let xi = &x[i * dim..(i + 1) * dim];
            for j in (i + 1)..n {
                let d = dot(xi, &x[j * dim..(j + 1) * dim]);
                gram[i * n + j] = d;
                gram[j * n + i] = d;
                coh = coh.max(d.abs());
            }
        }
        if coh < best_coh {
            best_coh = coh;
            best.copy_from_slice(&x);
            stale = 0;
        } else {
            stale += 1;
            if stale >= PATIENCE {
                step = (step * 0.7f64).max(1e-6);
                stale = 0;
            }
        }
        if it == iterations || coh == 0.0 {
            break;
        }
        let power = repulsion_power(it);
        force.iter_mut().for_each(|f| *f = 0.0);
        for i in 0..n {
            let fi = &mut force[i * dim..(i + 1) * dim];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let c = gram[i * n + j];
                let w = (c / coh).powi(power);
                let xj = &x[j * dim..(j + 1) * dim];
                fi.iter_mut().zip(xj).for_each(|(f, v)| *f += w * v);
            }
        }
        for i in 0..n {
            let xi = &mut x[i * dim..(i + 1) * dim];
            let fi = &force[i * dim..(i + 1) * dim];
            // tangent component only
            let radial = dot(fi, xi);
            xi.iter_mut().zip(fi).for_each(|(v, f)| *v -= step * (f - radial * *v));
            let nrm = dot(xi, xi).sqrt();
            xi.iter_mut().for_each(|v| *v /= nrm);
        }
    }
    (best_coh, best)
}

/// Even codebook whose `C+` is `2^(bits-1)` independent uniform lines.
pub fn random_line_codebook(dim: usize, bits: u32, seed: u64) -> Result<GrassmannCodebook> {
    if dim == 0 {
        return invalid("dim must be positive");
    }
    let n = stored_count(CodebookKind::EvenLine, bits)?;
    let mut rng = SeededRng::new(seed);
    let mut data = vec![0.0; n * dim];
    for row in data.chunks_exact_mut(dim) {
        fill_uniform_sphere(row, &mut rng);
    }
    GrassmannCodebook::from_codewords(CodebookKind::EvenLine, bits, dim, data, seed, 0)
}

/// Positive codebook of `2^bits` uniform directions folded into the positive orthant.
pub fn random_positive_codebook(dim: usize, bits: u32, seed: u64) -> Result<GrassmannCodebook> {
    if dim == 0 {
        return invalid("dim must be positive");
    }
    let n = stored_count(CodebookKind::Positive, bits)?;
    let mut rng = SeededRng::new(seed);
    let mut data = vec![0.0; n * dim];
    for row in data.chunks_exact_mut(dim) {
        fill_uniform_sphere(row, &mut rng);
        fold_positive(row);
    }
    GrassmannCodebook::from_codewords(CodebookKind::Positive, bits, dim, data, seed, 0)
}

/// `|x|` entrywise, floored at a tiny positive value, renormalized.
fn fold_positive(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.abs().max(POSITIVE_FLOOR));
    let n = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

/// Stopping rule of [`lloyd_positive`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LloydOptions {
    pub bits: u32,
    pub seed: u64,
    pub max_iterations: u64,
    /// Stop once the relative distortion improvement falls below this.
    pub tolerance: f64,
}

#[derive(Clone, Debug)]
pub struct LloydOutcome {
    pub codebook: GrassmannCodebook,
    /// Mean squared chordal distortion on the training set, starting with
    /// the initial codebook; non-increasing.
    pub distortion_history: Vec<f64>,
}

impl LloydOutcome {
    pub fn final_distortion(&self) -> f64 {
        *self.distortion_history.last().expect("history is never empty")
    }
}

const POWER_STEPS: usize = 50;
const POWER_TOLERANCE: f64 = 1e-10;

/// Lloyd design of a positive codebook on the Grassmann manifold.
///
/// Initial codewords are `2^bits` distinct training samples. Each round
/// partitions the samples by chordal distance, then replaces every codeword
/// by the dominant eigenvector of its cell's scatter matrix (power
/// iteration started from the current codeword), folded into the positive
/// orthant. An update that would raise its cell's distortion is rejected.
/// A codeword whose cell is empty is re-seeded with the training sample
/// farthest (chordal) from it.
pub fn lloyd_positive(samples: &[UnitVector], opts: &LloydOptions) -> Result<LloydOutcome> {
    let n_codewords = stored_count(CodebookKind::Positive, opts.bits)?;
    let Some(first) = samples.first() else {
        return invalid("no training samples");
    };
    let dim = first.dim();
    if samples.len() < n_codewords {
        return invalid(format!("{} samples cannot seed {n_codewords} codewords", samples.len()));
    }
    let mut flat = Vec::with_capacity(samples.len() * dim);
    for s in samples {
        if s.dim() != dim {
            return invalid("training samples have mixed dimensions");
        }
        if s.as_slice().iter().any(|&v| v < 0.0) {
            return invalid("training samples must be entrywise nonnegative");
        }
        flat.extend_from_slice(s.as_slice());
    }
    let n = samples.len();

    let mut rng = SeededRng::new(opts.seed);
    let mut cw = Vec::with_capacity(n_codewords * dim);
    for i in index::sample(&mut rng, n, n_codewords) {
        cw.extend_from_slice(&flat[i * dim..(i + 1) * dim]);
    }
    for row in cw.chunks_exact_mut(dim) {
        fold_positive(row);
    }

    let distortion = |cw: &[f64]| -> f64 {
        flat.chunks_exact(dim)
            .map(|x| {
                let (_, d) = nearest(cw, dim, x);
                (1.0 - d * d).max(0.0)
            })
            .sum::<f64>()
            / n as f64
    };

    let mut history = vec![distortion(&cw)];
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut scatter = vec![0.0; n_codewords * dim * dim];
        let mut counts = vec![0usize; n_codewords];
        for x in flat.chunks_exact(dim) {
            let (k, _) = nearest(&cw, dim, x);
            counts[k] += 1;
            let s = &mut scatter[k * dim * dim..(k + 1) * dim * dim];
            for (a, &xa) in x.iter().enumerate() {
                for (b, &xb) in x.iter().enumerate() {
                    s[a * dim + b] += xa * xb;
                }
            }
        }
        for k in 0..n_codewords {
            let current = cw[k * dim..(k + 1) * dim].to_vec();
            if counts[k] == 0 {
                let far = flat
                    .chunks_exact(dim)
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, x)| {
                        let d = dot(x, &current).abs();
                        if d < acc.1 {
                            (i, d)
                        } else {
                            acc
                        }
                    })
                    .0;
                let row = &mut cw[k * dim..(k + 1) * dim];
                row.copy_from_slice(&flat[far * dim..(far + 1) * dim]);
                fold_positive(row);
                continue;
            }
            let s = &scatter[k * dim * dim..(k + 1) * dim * dim];
            let mut v = dominant_eigenvector(s, dim, &current);
            fold_positive(&mut v);
            if quadratic_form(s, dim, &v) >= quadratic_form(s, dim, &current) {
                cw[k * dim..(k + 1) * dim].copy_from_slice(&v);
            }
        }
        let prev = *history.last().unwrap();
        let d = distortion(&cw);
        history.push(d);
        if prev <= 0.0 || (prev - d) / prev < opts.tolerance {
            break;
        }
    }
    let codebook =
        GrassmannCodebook::from_codewords(CodebookKind::Positive, opts.bits, dim, cw, opts.seed, iterations)?;
    Ok(LloydOutcome {
        codebook,
        distortion_history: history,
    })
}

fn nearest(cw: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in cw.chunks_exact(dim).enumerate() {
        let d = dot(x, c).abs();
        if d > best.1 {
            best = (i, d);
        }
    }
    best
}

fn quadratic_form(s: &[f64], dim: usize, v: &[f64]) -> f64 {
    (0..dim).map(|a| v[a] * dot(&s[a * dim..(a + 1) * dim], v)).sum()
}

fn dominant_eigenvector(s: &[f64], dim: usize, start: &[f64]) -> Vec<f64> {
    let mut v = start.to_vec();
    let mut next = vec![0.0; dim];
    for _ in 0..POWER_STEPS {
        for a in 0..dim {
            next[a] = dot(&s[a * dim..(a + 1) * dim], &v);
        }
        let nrm = dot(&next, &next).sqrt();
        if nrm == 0.0 {
            return v;
        }
        next.iter_mut().for_each(|x| *x /= nrm);
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    v
}

/// Writes `cb` in the versioned binary format.
pub fn write_codebook<W: Write>(cb: &GrassmannCodebook, mut w: W) -> Result<()> {
    w.write_all(&FILE_MAGIC)?;
    w.write_all(&FILE_VERSION.to_le_bytes())?;
    w.write_all(&(cb.dim as u32).to_le_bytes())?;
    w.write_all(&[cb.kind.tag()])?;
    w.write_all(&cb.bits.to_le_bytes())?;
    w.write_all(&cb.meta.seed.to_le_bytes())?;
    w.write_all(&cb.meta.iterations.to_le_bytes())?;
    w.write_all(&cb.meta.min_pairwise_chordal.to_le_bytes())?;
    w.write_all(&(cb.len() as u64).to_le_bytes())?;
    for v in &cb.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::CodebookFormat("truncated file".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_codebook<R: Read>(mut r: R) -> Result<GrassmannCodebook> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if magic != FILE_MAGIC {
        return Err(Error::CodebookFormat(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != FILE_VERSION {
        return Err(Error::CodebookFormat(format!(
            "unsupported format version {version} (expected {FILE_VERSION})"
        )));
    }
    let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let kind = CodebookKind::from_tag(read_array::<1, _>(&mut r)?[0])?;
    let bits = u32::from_le_bytes(read_array(&mut r)?);
    let seed = u64::from_le_bytes(read_array(&mut r)?);
    let iterations = u64::from_le_bytes(read_array(&mut r)?);
    let min_pairwise_chordal = f64::from_le_bytes(read_array(&mut r)?);
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let expected = stored_count(kind, bits).map_err(|e| Error::CodebookFormat(e.to_string()))?;
    if count != expected || dim == 0 {
        return Err(Error::CodebookFormat(format!(
            "header declares {count} codewords of dim {dim}, {kind:?} with {bits} bits needs {expected}"
        )));
    }
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count * dim {
        data.push(f64::from_le_bytes(read_array(&mut r)?));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::CodebookFormat(format!("{} trailing bytes", rest.len())));
    }
    GrassmannCodebook::new(
        kind,
        bits,
        dim,
        data,
        DesignMeta {
            seed,
            iterations,
            min_pairwise_chordal,
        },
    )
    .map_err(|e| Error::CodebookFormat(format!("invariant violated: {e}")))
}

pub fn save_codebook(cb: &GrassmannCodebook, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(48 + cb.data.len() * 8);
    write_codebook(cb, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<GrassmannCodebook> {
    let bytes = fs::read(path)?;
    read_codebook(bytes.as_slice())
}
