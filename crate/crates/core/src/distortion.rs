//! Monte-Carlo measurement of the distortion of each quantizer stage and of
//! the full codec, alongside the closed-form bounds they should respect.
//!
//! Trials are split into fixed chunks of [`CHUNK_TRIALS`]; chunk `c` draws
//! from substream `c` of the caller's generator and the per-chunk sums are
//! combined in chunk order, so results do not depend on the thread count.

use std::sync::Arc;

use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitalloc::{
    block_distortion_bounds, hinge_distortion_upper, hinge_reference, norm_distortion_upper, proposition2_radius,
    theorem1_bounds, BitAllocation, Theorem1Bounds,
};
use crate::codebook::{
    design_line_packing_with, lloyd_positive, random_line_codebook, CodebookKind, DesignMeta, GrassmannCodebook,
    LloydOptions, PackingOptions,
};
use crate::error::{invalid, Result};
use crate::quantizer::{decompose, QuantizerConfig, StageQuantizer};
use crate::rng::SeededRng;
use crate::vector::{dot, fill_uniform_sphere, squared_distance, UnitVector};

pub const CHUNK_TRIALS: usize = 2048;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
}

impl Estimate {
    fn from_sums(sum: f64, sumsq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sumsq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        let std_error = (var / nf).sqrt();
        Self {
            mean,
            std_error,
            ci95: 1.96 * std_error,
        }
    }
}

#[derive(Clone, Copy)]
struct Sums<const K: usize> {
    n: usize,
    sum: [f64; K],
    sumsq: [f64; K],
}

impl<const K: usize> Sums<K> {
    fn new() -> Self {
        Self {
            n: 0,
            sum: [0.0; K],
            sumsq: [0.0; K],
        }
    }

    fn add(&mut self, x: [f64; K]) {
        self.n += 1;
        for ((s, q), v) in self.sum.iter_mut().zip(&mut self.sumsq).zip(x) {
            *s += v;
            *q += v * v;
        }
    }

    fn merge(&mut self, other: &Self) {
        self.n += other.n;
        for k in 0..K {
            self.sum[k] += other.sum[k];
            self.sumsq[k] += other.sumsq[k];
        }
    }

    fn estimate(&self, k: usize) -> Estimate {
        Estimate::from_sums(self.sum[k], self.sumsq[k], self.n)
    }
}

/// Runs `trial` `trials` times over fixed chunks; `init` builds per-chunk scratch.
fn run_trials<const K: usize, S, I, F>(trials: usize, rng: &SeededRng, init: I, trial: F) -> Sums<K>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut SeededRng, &mut S) -> [f64; K] + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let parts: Vec<Sums<K>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng.substream(c as u64);
            let mut scratch = init();
            let mut acc = Sums::new();
            let count = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            for _ in 0..count {
                acc.add(trial(&mut stream, &mut scratch));
            }
            acc
        })
        .collect();
    let mut total = Sums::new();
    for p in &parts {
        total.merge(p);
    }
    total
}

fn check_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return invalid(format!("need at least {min} trials, got {trials}"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDistortion {
    /// `E[d_c^2(s, s_hat)]`.
    pub chordal: Estimate,
    /// `E[||s - s_hat||^2]`.
    pub euclid: Estimate,
    pub trials: usize,
}

/// Distortion of uniform unit vectors in `R^L` quantized by an even codebook.
pub fn mc_block_distortion(cb: &GrassmannCodebook, trials: usize, rng: &SeededRng) -> Result<BlockDistortion> {
    if cb.kind() != CodebookKind::EvenLine {
        return invalid("block distortion needs an even-line codebook");
    }
    check_trials(trials, 100)?;
    let dim = cb.dim();
    let sums = run_trials(
        trials,
        rng,
        || vec![0.0; dim],
        |r, s| {
            fill_uniform_sphere(s, r);
            let (i, d) = cb.nearest_line(s);
            let sign = if d >= 0.0 { 1.0 } else { -1.0 };
            let e: f64 = s.iter().zip(cb.codeword(i)).map(|(a, c)| (a - sign * c).powi(2)).sum();
            [(1.0 - d * d).max(0.0), e]
        },
    );
    Ok(BlockDistortion {
        chordal: sums.estimate(0),
        euclid: sums.estimate(1),
        trials,
    })
}

/// Hinge of an i.i.d. Gaussian vector in `R^(ML)`: `h_i = ||x_i|| / ||x||`.
pub fn sample_hinge(m: usize, l: usize, rng: &mut SeededRng) -> Result<UnitVector> {
    if m == 0 || l == 0 {
        return invalid("M and L must be positive");
    }
    let mut h = vec![0.0; m];
    fill_hinge(&mut h, &chi_squared(l)?, rng);
    UnitVector::new(h)
}

fn chi_squared(l: usize) -> Result<ChiSquared<f64>> {
    ChiSquared::new(l as f64).map_err(|e| crate::error::Error::InvalidArgument(format!("chi-square({l}): {e}")))
}

/// Squared block norms of a Gaussian vector are i.i.d. chi-square with `L`
/// degrees of freedom, so the hinge is drawn without the `ML` normals.
fn fill_hinge(h: &mut [f64], chi: &ChiSquared<f64>, rng: &mut SeededRng) {
    loop {
        for hi in h.iter_mut() {
            *hi = chi.sample(rng).sqrt();
        }
        let n = dot(h, h).sqrt();
        if n > 0.0 {
            h.iter_mut().for_each(|v| *v /= n);
            return;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HingeTail {
    /// Fraction of hinges with `d_c(h_ref, h) > radius`.
    pub probability: Estimate,
    /// Mean of `d_c(h_ref, h)`.
    pub distance: Estimate,
    pub radius: f64,
    pub trials: usize,
}

pub fn mc_hinge_tail(m: usize, l: usize, trials: usize, rng: &SeededRng) -> Result<HingeTail> {
    check_trials(trials, 10_000)?;
    if m < 50 {
        return invalid(format!("the concentration radius is stated for M >= 50, got M={m}"));
    }
    let radius = proposition2_radius(l)?;
    let chi = chi_squared(l)?;
    let href = 1.0 / (m as f64).sqrt();
    let sums = run_trials(
        trials,
        rng,
        || vec![0.0; m],
        |r, h| {
            fill_hinge(h, &chi, r);
            let d = h.iter().sum::<f64>() * href;
            let dc = (1.0 - d * d).max(0.0).sqrt();
            [if dc > radius { 1.0 } else { 0.0 }, dc]
        },
    );
    Ok(HingeTail {
        probability: sums.estimate(0),
        distance: sums.estimate(1),
        radius,
        trials,
    })
}

/// How the decoder reconstructs the hinge.
#[derive(Clone, Copy, Debug)]
pub enum HingeSource<'a> {
    Codebook(&'a GrassmannCodebook),
    /// The constant `(1/sqrt(M)) * 1`, no bits spent.
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HingeDistortion {
    pub chordal: Estimate,
    pub euclid: Estimate,
    pub trials: usize,
}

pub fn mc_hinge_distortion(
    source: HingeSource<'_>,
    m: usize,
    l: usize,
    trials: usize,
    rng: &SeededRng,
) -> Result<HingeDistortion> {
    check_trials(trials, 1000)?;
    if m == 0 || l == 0 {
        return invalid("M and L must be positive");
    }
    if let HingeSource::Codebook(cb) = source {
        if cb.kind() != CodebookKind::Positive || cb.dim() != m {
            return invalid("hinge codebook must be positive with dim M");
        }
    }
    let href = hinge_reference(m)?;
    let chi = chi_squared(l)?;
    let sums = run_trials(
        trials,
        rng,
        || vec![0.0; m],
        |r, h| {
            fill_hinge(h, &chi, r);
            let c = match source {
                HingeSource::Codebook(cb) => cb.codeword(cb.nearest_line(h).0),
                HingeSource::Reference => href.as_slice(),
            };
            let d = dot(h, c);
            [(1.0 - d * d).max(0.0), squared_distance(h, c)]
        },
    );
    Ok(HingeDistortion {
        chordal: sums.estimate(0),
        euclid: sums.estimate(1),
        trials,
    })
}

/// Per-stage and end-to-end distortion of a codec on i.i.d. unit Gaussian gradients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMeasurements {
    pub trials: usize,
    /// `E[(rho - rho_hat)^2]`.
    pub norm: Estimate,
    /// Block distortions averaged over the `M` blocks.
    pub block_chordal: Estimate,
    pub block_euclid: Estimate,
    pub hinge_chordal: Estimate,
    pub hinge_euclid: Estimate,
    /// `E[||f - f_hat||^2]` for the unit-norm gradient `f = g / rho`.
    pub normalized: Estimate,
    /// `E[||g - g_hat||^2]`.
    pub total: Estimate,
}

impl StageMeasurements {
    /// `D_s + D_h - D_s D_h / 2` from the measured Euclidean stage distortions.
    pub fn composed_normalized(&self) -> f64 {
        let (s, h) = (self.block_euclid.mean, self.hinge_euclid.mean);
        s + h - 0.5 * s * h
    }

    /// `|measured - composed| / measured` for the unit-norm gradient; 0 when both vanish.
    pub fn composition_relative_gap(&self) -> f64 {
        let measured = self.normalized.mean;
        let gap = (measured - self.composed_normalized()).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / measured
        }
    }
}

/// Draws `g ~ N(0, I_{ML})` and pushes it through the stages of `q`.
pub fn measure_stages<Q: StageQuantizer>(q: &Q, trials: usize, rng: &SeededRng) -> Result<StageMeasurements> {
    check_trials(trials, 1)?;
    let (m, l) = q.shape();
    let dim = m * l;
    struct Scratch {
        g: Vec<f64>,
        s_hat: Vec<f64>,
        h_hat: Vec<f64>,
    }
    let sums = run_trials(
        trials,
        rng,
        || Scratch {
            g: vec![0.0; dim],
            s_hat: vec![0.0; l],
            h_hat: vec![0.0; m],
        },
        |r, sc| {
            sc.g.iter_mut().for_each(|v| *v = r.normal());
            let dec = decompose(&sc.g, m, l).expect("finite gaussian draw");
            let rho_hat = q.norm_hat(dec.rho);
            q.hinge_hat(dec.hinge.as_slice(), &mut sc.h_hat);
            let h = dec.hinge.as_slice();
            let dh = dot(h, &sc.h_hat);
            let mut block_c = 0.0;
            let mut block_e = 0.0;
            let mut normalized = 0.0;
            let mut total = 0.0;
            for (i, s) in dec.blocks.iter().enumerate() {
                let s = s.as_slice();
                q.block_hat(s, &mut sc.s_hat);
                let d = dot(s, &sc.s_hat);
                block_c += (1.0 - d * d).max(0.0);
                block_e += squared_distance(s, &sc.s_hat);
                for (j, (&sv, &shv)) in s.iter().zip(&sc.s_hat).enumerate() {
                    let f = h[i] * sv;
                    let f_hat = sc.h_hat[i] * shv;
                    normalized += (f - f_hat).powi(2);
                    total += (sc.g[i * l + j] - rho_hat * f_hat).powi(2);
                }
            }
            [
                (dec.rho - rho_hat).powi(2),
                block_c / m as f64,
                block_e / m as f64,
                (1.0 - dh * dh).max(0.0),
                squared_distance(h, &sc.h_hat),
                normalized,
                total,
            ]
        },
    );
    Ok(StageMeasurements {
        trials,
        norm: sums.estimate(0),
        block_chordal: sums.estimate(1),
        block_euclid: sums.estimate(2),
        hinge_chordal: sums.estimate(3),
        hinge_euclid: sums.estimate(4),
        normalized: sums.estimate(5),
        total: sums.estimate(6),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub block_lower: f64,
    pub block_upper: f64,
    /// Absent when `M < 2`.
    pub hinge_upper: Option<f64>,
    pub norm_upper: f64,
    pub theorem1: Option<Theorem1Bounds>,
}

/// Everything measured for one codec configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub m: usize,
    pub l: usize,
    pub allocation: BitAllocation,
    pub rho_max: f64,
    pub block_codebook: DesignMeta,
    pub hinge_codebook: Option<DesignMeta>,
    pub seed: u64,
    pub stages: StageMeasurements,
    pub mse_total: f64,
    /// `mse_total / (ML)`.
    pub mse_per_dim: f64,
    pub ln_mse_per_dim: f64,
    /// Standard error of `ln_mse_per_dim` (delta method).
    pub ln_mse_std_error: f64,
    pub composed_normalized: f64,
    pub composition_relative_gap: f64,
    pub bounds: Bounds,
}

/// Full-codec Monte Carlo on unit Gaussian gradients of dimension `ML`.
pub fn mc_full_mse(cfg: &QuantizerConfig, trials: usize, rng: &SeededRng) -> Result<DistortionReport> {
    check_trials(trials, 1000)?;
    let (m, l) = (cfg.m(), cfg.l());
    if cfg.dim() != m * l {
        return invalid("the Gaussian source needs dim = M*L (no padding)");
    }
    let stages = measure_stages(cfg, trials, rng)?;
    let alloc = cfg.allocation();
    let (block_lower, block_upper) = block_distortion_bounds(l.max(2), alloc.b_s)?;
    let bounds = Bounds {
        block_lower,
        block_upper,
        hinge_upper: hinge_distortion_upper(l, m, alloc.b_h).ok(),
        norm_upper: norm_distortion_upper(alloc.b_rho, cfg.rho_max())?,
        theorem1: theorem1_bounds(m, l, alloc.budget).ok(),
    };
    let ml = (m * l) as f64;
    let mse_total = stages.total.mean;
    Ok(DistortionReport {
        m,
        l,
        allocation: alloc.clone(),
        rho_max: cfg.rho_max(),
        block_codebook: *cfg.block_codebook().meta(),
        hinge_codebook: cfg.hinge_codebook().map(|cb| *cb.meta()),
        seed: rng.seed(),
        stages,
        mse_total,
        mse_per_dim: mse_total / ml,
        ln_mse_per_dim: (mse_total / ml).ln(),
        ln_mse_std_error: stages.total.std_error / mse_total,
        composed_normalized: stages.composed_normalized(),
        composition_relative_gap: stages.composition_relative_gap(),
        bounds,
    })
}

/// How the codebooks of a [`QuantizerConfig`] are designed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookDesign {
    pub seed: u64,
    pub packing_iterations: u64,
    pub packing_restarts: u32,
    /// Above this many lines `C+` is drawn uniformly at random instead of packed.
    pub max_packed_lines: usize,
    /// Hinge training samples for the Lloyd design.
    pub lloyd_samples: usize,
    pub lloyd_iterations: u64,
    pub lloyd_tolerance: f64,
}

impl Default for CodebookDesign {
    fn default() -> Self {
        Self {
            seed: 1,
            packing_iterations: 20_000,
            packing_restarts: 8,
            max_packed_lines: 256,
            lloyd_samples: 10_000,
            lloyd_iterations: 100,
            lloyd_tolerance: 1e-6,
        }
    }
}

/// Block codebook: line packing, or random lines beyond `max_packed_lines`.
pub fn design_block_codebook(l: usize, b_s: u32, design: &CodebookDesign) -> Result<GrassmannCodebook> {
    let seed = crate::rng::derive_seed(design.seed, 1);
    let lines = crate::codebook::stored_count(CodebookKind::EvenLine, b_s)?;
    if lines > design.max_packed_lines {
        return random_line_codebook(l, b_s, seed);
    }
    design_line_packing_with(
        l,
        b_s,
        &PackingOptions {
            seed,
            iterations: design.packing_iterations,
            restarts: design.packing_restarts,
        },
    )
}

/// Hinge codebook trained by Lloyd on Gaussian hinge samples of shape `(M, L)`.
pub fn design_hinge_codebook(m: usize, l: usize, b_h: u32, design: &CodebookDesign) -> Result<GrassmannCodebook> {
    let mut rng = SeededRng::new(crate::rng::derive_seed(design.seed, 2));
    let samples = (0..design.lloyd_samples)
        .map(|_| sample_hinge(m, l, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let out = lloyd_positive(
        &samples,
        &LloydOptions {
            bits: b_h,
            seed: crate::rng::derive_seed(design.seed, 3),
            max_iterations: design.lloyd_iterations,
            tolerance: design.lloyd_tolerance,
        },
    )?;
    Ok(out.codebook)
}

/// Designs both codebooks and assembles a config for gradients of dimension `dim`.
pub fn build_config(
    dim: usize,
    allocation: BitAllocation,
    rho_max: f64,
    design: &CodebookDesign,
) -> Result<QuantizerConfig> {
    let (m, l) = (allocation.m, allocation.l);
    let block = Arc::new(design_block_codebook(l, allocation.b_s, design)?);
    let hinge = if allocation.b_h > 0 {
        Some(Arc::new(design_hinge_codebook(m, l, allocation.b_h, design)?))
    } else {
        None
    };
    QuantizerConfig::new(dim, allocation, block, hinge, rho_max)
}
