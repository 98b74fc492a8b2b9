//! Bit allocation between the norm, block and hinge quantizers, and the
//! closed-form distortion bounds the allocation is built on.
//!
//! The asymptotic residual terms of the bounds (`o(1)`, `O(L^-3/2)`) are not
//! computable and are left out everywhere; comparisons against Monte-Carlo
//! measurements carry explicit slack instead.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantizer::default_rho_max;
use crate::vector::UnitVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Closed-form optimum of the relaxed problem, floored and repaired.
    Scheme1,
    /// Norm bits from the closed form, everything else to the blocks, no
    /// hinge bits (the decoder uses the constant reference hinge).
    Scheme2,
    /// Bits chosen by hand.
    Manual,
}

/// `(B_rho, B_s, B_h)` together with the budget and shape they were derived for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitAllocation {
    pub scheme: Scheme,
    pub m: usize,
    pub l: usize,
    /// Total budget `B`; at least the payload, the rest is unused.
    pub budget: u64,
    pub b_rho: u32,
    /// Bits per block, sign bit included.
    pub b_s: u32,
    pub b_h: u32,
    /// Lagrange multiplier of the closed form; absent for manual allocations.
    pub lambda_star: Option<f64>,
}

impl BitAllocation {
    /// An allocation whose budget is exactly its payload.
    pub fn manual(m: usize, l: usize, b_rho: u32, b_s: u32, b_h: u32) -> Result<Self> {
        if m == 0 || l == 0 {
            return invalid("M and L must be positive");
        }
        if b_s == 0 {
            return invalid("every block needs at least its sign bit (B_s >= 1)");
        }
        let mut alloc = Self {
            scheme: Scheme::Manual,
            m,
            l,
            budget: 0,
            b_rho,
            b_s,
            b_h,
            lambda_star: None,
        };
        alloc.budget = alloc.payload_bits();
        Ok(alloc)
    }

    /// `B_rho + M * B_s + B_h`.
    pub fn payload_bits(&self) -> u64 {
        self.b_rho as u64 + self.m as u64 * self.b_s as u64 + self.b_h as u64
    }

    pub fn leftover(&self) -> u64 {
        self.budget - self.payload_bits()
    }

    /// Block bits per gradient coefficient, `B_s / L`.
    pub fn bits_per_coefficient(&self) -> f64 {
        self.b_s as f64 / self.l as f64
    }
}

/// `beta_L = (1 + L^(-1/16)) / (1 - L^(-1/16))`.
pub fn beta_l(l: f64) -> f64 {
    let q = l.powf(-1.0 / 16.0);
    (1.0 + q) / (1.0 - q)
}

fn check_shape(m: usize, l: usize) -> Result<()> {
    if m < 2 || l < 2 {
        return invalid(format!("need M >= 2 and L >= 2, got M={m}, L={l}"));
    }
    Ok(())
}

/// `log2(lambda*)` of the closed-form allocation, term by term.
pub fn log2_lambda_star(m: usize, l: usize, budget: u64) -> Result<f64> {
    check_shape(m, l)?;
    if budget == 0 {
        return invalid("bit budget must be positive");
    }
    let (mf, lf) = (m as f64, l as f64);
    let ml = mf * lf;
    let rho_term = (default_rho_max(m, l) / 2.0).log2();
    Ok(2.0 / ml * rho_term
        + (lf - 1.0) / lf * (2.0 * lf / (lf - 1.0)).log2()
        + 2.0 / lf
        + 1.0 / ml
        + 2.0 * (mf - 1.0) / ml * (2.0 / (mf - 1.0)).log2()
        + (mf - 1.0) / ml * (beta_l(lf) * mf * lf.sqrt()).log2()
        + LN_2.log2()
        - 2.0 * budget as f64 / ml)
}

pub fn lambda_star(m: usize, l: usize, budget: u64) -> Result<f64> {
    Ok(log2_lambda_star(m, l, budget)?.exp2())
}

/// Real-valued `(B_rho, B_s, B_h)` before flooring, for a given `log2(lambda)`.
pub fn real_allocation(m: usize, l: usize, log2_lambda: f64) -> (f64, f64, f64) {
    let (mf, lf) = (m as f64, l as f64);
    let log2_ln2 = LN_2.log2();
    let b_rho = (default_rho_max(m, l) / 2.0).log2() + 0.5 * log2_ln2 + 0.5 - 0.5 * log2_lambda;
    let hl = (lf - 1.0) / 2.0;
    let b_s = hl * (2.0 * lf / (lf - 1.0)).log2() + 1.0 + hl * log2_ln2 - hl * log2_lambda;
    let hm = (mf - 1.0) / 2.0;
    let b_h =
        hm * (2.0 / (mf - 1.0)).log2() + hm * (beta_l(lf) * mf * lf.sqrt()).log2() + hm * log2_ln2 - hm * log2_lambda;
    (b_rho, b_s, b_h)
}

/// Objective of the relaxed allocation problem: the sum of the norm, block
/// and hinge distortion upper bounds for a unit-variance Gaussian gradient.
pub fn allocation_objective(m: usize, l: usize, b_rho: f64, b_s: f64, b_h: f64) -> f64 {
    let (mf, lf) = (m as f64, l as f64);
    let e_g = mf * lf;
    let rho_max = default_rho_max(m, l);
    rho_max * rho_max / 4.0 * (-2.0 * b_rho).exp2()
        + e_g * (-2.0 * (b_s - 1.0) / (lf - 1.0)).exp2()
        + e_g * beta_l(lf) * (-2.0 * b_h / (mf - 1.0)).exp2() / lf.sqrt()
}

fn infeasible(msg: String) -> Error {
    Error::InfeasibleBudget(msg)
}

/// Closed-form allocation with floors, clamped to `B_rho >= 0`, `B_s >= 1`,
/// `B_h >= 0`. When the floored sum still exceeds `B`, `B_s` is decremented
/// (down to 1), then `B_h`, then `B_rho`, until it fits.
pub fn scheme1(m: usize, l: usize, budget: u64) -> Result<BitAllocation> {
    let log2_lambda = log2_lambda_star(m, l, budget)?;
    if budget < m as u64 {
        return Err(infeasible(format!(
            "B={budget} cannot give each of the M={m} blocks its sign bit"
        )));
    }
    let (r, s, h) = real_allocation(m, l, log2_lambda);
    let clamp = |x: f64, lo: f64| x.floor().max(lo).min(u32::MAX as f64) as u32;
    let mut alloc = BitAllocation {
        scheme: Scheme::Scheme1,
        m,
        l,
        budget,
        b_rho: clamp(r, 0.0),
        b_s: clamp(s, 1.0),
        b_h: clamp(h, 0.0),
        lambda_star: Some(log2_lambda.exp2()),
    };
    let m64 = m as u64;
    let excess = |a: &BitAllocation| a.payload_bits().saturating_sub(budget);
    let e = excess(&alloc);
    if e > 0 {
        let cut = e.div_ceil(m64).min(alloc.b_s as u64 - 1);
        alloc.b_s -= cut as u32;
    }
    let e = excess(&alloc);
    if e > 0 {
        alloc.b_h -= e.min(alloc.b_h as u64) as u32;
    }
    let e = excess(&alloc);
    if e > 0 {
        alloc.b_rho -= e.min(alloc.b_rho as u64) as u32;
    }
    debug_assert!(alloc.payload_bits() <= budget);
    Ok(alloc)
}

/// Practical allocation: `B_rho` from the closed form (or `b_rho` when
/// given), clamped to `[1, B - M]`; `B_s = floor((B - B_rho) / M)`;
/// `B_h = 0`. The `(B - B_rho) mod M` leftover bits are unused.
pub fn scheme2(m: usize, l: usize, budget: u64, b_rho: Option<u32>) -> Result<BitAllocation> {
    let log2_lambda = log2_lambda_star(m, l, budget)?;
    let m64 = m as u64;
    if budget <= m64 {
        return Err(infeasible(format!(
            "B={budget} must exceed M={m} to fit the norm and one sign bit per block"
        )));
    }
    let max_rho = budget - m64;
    let b_rho = match b_rho {
        Some(b) if b as u64 > max_rho => {
            return Err(infeasible(format!(
                "B_rho={b} leaves fewer than M={m} bits out of B={budget}"
            )))
        }
        Some(b) => b,
        None => {
            let (r, _, _) = real_allocation(m, l, log2_lambda);
            r.floor().clamp(1.0, max_rho as f64) as u32
        }
    };
    let b_s = (budget - b_rho as u64) / m64;
    Ok(BitAllocation {
        scheme: Scheme::Scheme2,
        m,
        l,
        budget,
        b_rho,
        b_s: b_s.min(u32::MAX as u64) as u32,
        b_h: 0,
        lambda_star: Some(log2_lambda.exp2()),
    })
}

/// `(lower, upper)` on the chordal distortion of a uniform unit vector in
/// `R^L` under a `B_s`-bit even line-packing codebook.
pub fn block_distortion_bounds(l: usize, b_s: u32) -> Result<(f64, f64)> {
    if l < 2 || b_s == 0 {
        return invalid(format!("need L >= 2 and B_s >= 1, got L={l}, B_s={b_s}"));
    }
    let lf = l as f64;
    let upper = (-2.0 * (b_s as f64 - 1.0) / (lf - 1.0)).exp2();
    Ok(((lf - 1.0) / (lf + 1.0) * upper, upper))
}

/// Upper bound on the hinge chordal distortion, `L^(-1/2) (beta_L 2^(-2 B_h/(M-1)) + 1)`.
pub fn hinge_distortion_upper(l: usize, m: usize, b_h: u32) -> Result<f64> {
    check_shape(m, l)?;
    let lf = l as f64;
    Ok((beta_l(lf) * (-2.0 * b_h as f64 / (m as f64 - 1.0)).exp2() + 1.0) / lf.sqrt())
}

/// Radius of the chordal ball around the reference hinge that holds the
/// hinge with high probability, `sqrt(2 / (1 + 2 L^(1/4)))`.
pub fn proposition2_radius(l: usize) -> Result<f64> {
    if l == 0 {
        return invalid("L must be positive");
    }
    Ok((2.0 / (1.0 + 2.0 * (l as f64).powf(0.25))).sqrt())
}

/// `(1/sqrt(M)) * 1`.
pub fn hinge_reference(m: usize) -> Result<UnitVector> {
    if m == 0 {
        return invalid("M must be positive");
    }
    UnitVector::new(vec![1.0 / (m as f64).sqrt(); m])
}

/// Constant gap between the upper and lower rate-distortion bounds.
///
/// Note the norm term uses `ML + sqrt(ML)`, unlike the `ML + sqrt(2ML)` of
/// the norm range; kept as stated. The gap is negative for `L` below about
/// 50, where the bound is not meaningful.
pub fn c_gap(m: usize, l: usize) -> Result<f64> {
    check_shape(m, l)?;
    let (mf, lf) = (m as f64, l as f64);
    let ml = mf * lf;
    let b = beta_l(lf);
    let t = (2.0 * lf / (lf - 1.0)).ln();
    Ok(LN_2 - t
        + 2.0 / ml * ((ml + ml.sqrt()) / 2.0).ln()
        + (lf - 1.0) / lf * t
        + 2.0 / lf * LN_2
        + 2.0 * (mf - 1.0) / ml * (2.0 / (mf - 1.0)).ln()
        + LN_2 / ml
        + (mf - 1.0) / ml * (b * mf * lf.sqrt()).ln()
        + 2.0 * (b + 1.0) / lf.sqrt()
        - 2.0 * (b + 1.0) * (b + 1.0) / lf)
}

/// Bounds on `ln(MSE / (ML))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bounds {
    pub lower: f64,
    pub upper: f64,
    pub c_gap: f64,
    /// False when `B > ML`: the bounds are only claimed for under one bit per coefficient.
    pub in_regime: bool,
}

pub fn theorem1_bounds(m: usize, l: usize, budget: u64) -> Result<Theorem1Bounds> {
    let gap = c_gap(m, l)?;
    let ml = (m * l) as f64;
    let lower = -2.0 * LN_2 / ml * budget as f64;
    Ok(Theorem1Bounds {
        lower,
        upper: gap + lower,
        c_gap: gap,
        in_regime: budget as f64 <= ml,
    })
}

/// Like [`theorem1_bounds`] but refuses budgets outside the low-resolution regime.
pub fn theorem1_bounds_strict(m: usize, l: usize, budget: u64) -> Result<Theorem1Bounds> {
    let b = theorem1_bounds(m, l, budget)?;
    if !b.in_regime {
        return Err(Error::OutOfRegime(format!(
            "B={budget} exceeds ML={} (more than one bit per coefficient)",
            m * l
        )));
    }
    Ok(b)
}

/// `(Delta/2)^2` with `Delta = rho_max / 2^B_rho`.
pub fn norm_distortion_upper(b_rho: u32, rho_max: f64) -> Result<f64> {
    if !(rho_max > 0.0 && rho_max.is_finite()) {
        return invalid("rho_max must be positive and finite");
    }
    let half = rho_max * (-(b_rho as f64) - 1.0).exp2();
    Ok(half * half)
}
