//! The hierarchical codec: decomposition of a gradient into norm, blocks
//! and hinge, stage-wise quantization, reconstruction and the packed bit
//! layout.
//!
//! # Wire format
//!
//! A code is a bit stream, most significant bit first:
//!
//! 1. the norm index, `B_rho` bits;
//! 2. for each block in order, the sign bit (`0` for `+1`, `1` for `-1`)
//!    followed by the line index in `B_s - 1` bits;
//! 3. the hinge index, `B_h` bits (absent when `B_h = 0`).
//!
//! The stream is zero-padded to `ceil((B_rho + M*B_s + B_h) / 8)` bytes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bitalloc::{hinge_reference, BitAllocation};
use crate::codebook::{CodebookKind, GrassmannCodebook};
use crate::error::{invalid, Error, Result};
use crate::vector::{dot, RealVector, UnitVector};

/// Blocks with a smaller norm are treated as zero blocks.
pub const DEGENERATE_BLOCK_NORM: f64 = 1e-12;

/// Widest norm index the codec supports.
pub const MAX_NORM_BITS: u32 = 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// `Plus` for `x >= 0`.
    pub fn of(x: f64) -> Self {
        if x >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn bit(self) -> u64 {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub fn from_bit(bit: u64) -> Self {
        if bit == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Norm range used when nothing better is known: `ML + sqrt(2ML)`, the
/// mean plus one standard deviation of `||g||^2` for a unit Gaussian `g`.
pub fn default_rho_max(m: usize, l: usize) -> f64 {
    let ml = (m * l) as f64;
    ml + (2.0 * ml).sqrt()
}

/// A gradient split into norm, unit blocks and unit hinge.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub rho: f64,
    pub blocks: Vec<UnitVector>,
    pub hinge: UnitVector,
}

impl Decomposition {
    /// `rho * [h_1 s_1, ..., h_M s_M]` truncated to `dim`.
    pub fn reassemble(&self, dim: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.blocks.len() * self.blocks[0].dim());
        for (s, h) in self.blocks.iter().zip(self.hinge.as_slice()) {
            out.extend(s.as_slice().iter().map(|v| self.rho * h * v));
        }
        out.truncate(dim);
        out
    }
}

/// Zero-pads `g` to `M*L` and splits it into `rho`, `M` unit blocks of
/// length `L` and the hinge of block norms.
///
/// A block with norm below [`DEGENERATE_BLOCK_NORM`] becomes `e_1` with
/// hinge entry 0 (the hinge is renormalized). For `g = 0` every block is
/// `e_1`, the hinge is `(1/sqrt(M)) * 1` and `rho = 0`.
pub fn decompose(g: &[f64], m: usize, l: usize) -> Result<Decomposition> {
    if m == 0 || l == 0 {
        return invalid("M and L must be positive");
    }
    if g.is_empty() || g.len() > m * l {
        return invalid(format!("gradient of dim {} does not fit M*L = {}", g.len(), m * l));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return invalid("gradient has non-finite entries");
    }
    let rho = dot(g, g).sqrt();
    let mut blocks = Vec::with_capacity(m);
    let mut hinge = vec![0.0; m];
    let mut padded = vec![0.0; l];
    for (i, h) in hinge.iter_mut().enumerate() {
        let start = (i * l).min(g.len());
        let end = ((i + 1) * l).min(g.len());
        padded.iter_mut().for_each(|v| *v = 0.0);
        padded[..end - start].copy_from_slice(&g[start..end]);
        let block_norm = if rho > 0.0 {
            dot(&padded, &padded).sqrt() / rho
        } else {
            0.0
        };
        if block_norm < DEGENERATE_BLOCK_NORM {
            blocks.push(UnitVector::basis(l, 0)?);
        } else {
            *h = block_norm;
            blocks.push(UnitVector::normalize(padded.clone())?);
        }
    }
    let hinge = if hinge.iter().all(|&h| h == 0.0) {
        hinge_reference(m)?
    } else {
        UnitVector::normalize(hinge)?
    };
    Ok(Decomposition { rho, blocks, hinge })
}

/// Uniform quantizer on `[0, rho_max]` with `2^B_rho` cells and midpoint
/// reconstruction; values above `rho_max` fall into the top cell.
pub fn quantize_norm(rho: f64, b_rho: u32, rho_max: f64) -> Result<(u64, f64)> {
    if !(rho.is_finite() && rho >= 0.0) {
        return invalid(format!("norm must be a nonnegative finite number, got {rho}"));
    }
    if b_rho > MAX_NORM_BITS {
        return invalid(format!("B_rho = {b_rho} exceeds {MAX_NORM_BITS}"));
    }
    if !(rho_max > 0.0 && rho_max.is_finite()) {
        return invalid("rho_max must be positive and finite");
    }
    let cells = 1u64 << b_rho;
    let delta = rho_max / cells as f64;
    let index = ((rho / delta).floor() as u64).min(cells - 1);
    Ok((index, norm_reconstruction(index, b_rho, rho_max)))
}

/// Midpoint of norm cell `index`.
pub fn norm_reconstruction(index: u64, b_rho: u32, rho_max: f64) -> f64 {
    let delta = rho_max * (-(b_rho as f64)).exp2();
    (index as f64 + 0.5) * delta
}

/// Output of [`QuantizerConfig::encode`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HierarchicalCode {
    pub norm_index: u64,
    pub line_indices: Vec<u32>,
    pub signs: Vec<Sign>,
    pub hinge_index: Option<u32>,
}

/// One reconstruction per stage; implemented by the real codec and by
/// test doubles.
pub trait StageQuantizer: Sync {
    /// `(M, L)`.
    fn shape(&self) -> (usize, usize);
    fn norm_hat(&self, rho: f64) -> f64;
    /// Writes the reconstruction of unit block `s` into `out`.
    fn block_hat(&self, s: &[f64], out: &mut [f64]);
    /// Writes the reconstruction of hinge `h` into `out`.
    fn hinge_hat(&self, h: &[f64], out: &mut [f64]);
}

/// Infinite-resolution stages: every input is reproduced exactly.
#[derive(Clone, Copy, Debug)]
pub struct Passthrough {
    pub m: usize,
    pub l: usize,
}

impl StageQuantizer for Passthrough {
    fn shape(&self) -> (usize, usize) {
        (self.m, self.l)
    }

    fn norm_hat(&self, rho: f64) -> f64 {
        rho
    }

    fn block_hat(&self, s: &[f64], out: &mut [f64]) {
        out.copy_from_slice(s);
    }

    fn hinge_hat(&self, h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(h);
    }
}

/// Everything the codec needs: shape, bit allocation, codebooks and norm range.
#[derive(Clone, Debug)]
pub struct QuantizerConfig {
    dim: usize,
    allocation: BitAllocation,
    block_codebook: Arc<GrassmannCodebook>,
    hinge_codebook: Option<Arc<GrassmannCodebook>>,
    rho_max: f64,
}

impl QuantizerConfig {
    pub fn new(
        dim: usize,
        allocation: BitAllocation,
        block_codebook: Arc<GrassmannCodebook>,
        hinge_codebook: Option<Arc<GrassmannCodebook>>,
        rho_max: f64,
    ) -> Result<Self> {
        let (m, l) = (allocation.m, allocation.l);
        if dim == 0 || dim > m * l {
            return invalid(format!("dim {dim} must be in 1..=M*L = {}", m * l));
        }
        if allocation.b_rho > MAX_NORM_BITS {
            return invalid(format!("B_rho = {} exceeds {MAX_NORM_BITS}", allocation.b_rho));
        }
        if block_codebook.kind() != CodebookKind::EvenLine
            || block_codebook.dim() != l
            || block_codebook.bits() != allocation.b_s
        {
            return invalid(format!(
                "block codebook must be even-line, dim L={l}, {} bits; got {:?}, dim {}, {} bits",
                allocation.b_s,
                block_codebook.kind(),
                block_codebook.dim(),
                block_codebook.bits()
            ));
        }
        match (&hinge_codebook, allocation.b_h) {
            (None, 0) => {}
            (Some(cb), b_h) if b_h > 0 => {
                if cb.kind() != CodebookKind::Positive || cb.dim() != m || cb.bits() != b_h {
                    return invalid(format!(
                        "hinge codebook must be positive, dim M={m}, {b_h} bits; got {:?}, dim {}, {} bits",
                        cb.kind(),
                        cb.dim(),
                        cb.bits()
                    ));
                }
            }
            (None, _) => return invalid("B_h > 0 needs a hinge codebook"),
            (Some(_), _) => return invalid("a hinge codebook was given but B_h = 0"),
        }
        if !(rho_max > 0.0 && rho_max.is_finite()) {
            return invalid("rho_max must be positive and finite");
        }
        Ok(Self {
            dim,
            allocation,
            block_codebook,
            hinge_codebook,
            rho_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.allocation.m
    }

    pub fn l(&self) -> usize {
        self.allocation.l
    }

    pub fn allocation(&self) -> &BitAllocation {
        &self.allocation
    }

    pub fn block_codebook(&self) -> &GrassmannCodebook {
        &self.block_codebook
    }

    pub fn hinge_codebook(&self) -> Option<&GrassmannCodebook> {
        self.hinge_codebook.as_deref()
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    /// `B_rho + M * B_s + B_h`.
    pub fn payload_bits(&self) -> u64 {
        self.allocation.payload_bits()
    }

    pub fn packed_len(&self) -> usize {
        self.payload_bits().div_ceil(8) as usize
    }

    pub fn encode(&self, g: &[f64]) -> Result<HierarchicalCode> {
        if g.len() != self.dim {
            return invalid(format!("gradient dim {} != configured dim {}", g.len(), self.dim));
        }
        let dec = decompose(g, self.m(), self.l())?;
        let (norm_index, _) = quantize_norm(dec.rho, self.allocation.b_rho, self.rho_max)?;
        let mut line_indices = Vec::with_capacity(self.m());
        let mut signs = Vec::with_capacity(self.m());
        for s in &dec.blocks {
            let (index, d) = self.block_codebook.nearest_line(s.as_slice());
            line_indices.push(index as u32);
            signs.push(Sign::of(d));
        }
        let hinge_index = self
            .hinge_codebook
            .as_ref()
            .map(|cb| cb.nearest_line(dec.hinge.as_slice()).0 as u32);
        Ok(HierarchicalCode {
            norm_index,
            line_indices,
            signs,
            hinge_index,
        })
    }

    fn check_code(&self, code: &HierarchicalCode) -> Result<()> {
        let corrupt = |msg: String| Err(Error::CorruptCode(msg));
        let m = self.m();
        if code.line_indices.len() != m || code.signs.len() != m {
            return corrupt(format!(
                "expected {m} blocks, got {} line indices and {} signs",
                code.line_indices.len(),
                code.signs.len()
            ));
        }
        if code.norm_index >> self.allocation.b_rho != 0 {
            return corrupt(format!("norm index {} out of range", code.norm_index));
        }
        let lines = self.block_codebook.len();
        if let Some(&bad) = code.line_indices.iter().find(|&&i| i as usize >= lines) {
            return corrupt(format!("line index {bad} out of range (< {lines})"));
        }
        match (code.hinge_index, &self.hinge_codebook) {
            (None, None) => Ok(()),
            (Some(i), Some(cb)) if (i as usize) < cb.len() => Ok(()),
            (Some(i), Some(_)) => corrupt(format!("hinge index {i} out of range")),
            (Some(_), None) => corrupt("hinge index present but B_h = 0".into()),
            (None, Some(_)) => corrupt("hinge index missing".into()),
        }
    }

    /// `rho_hat * [h_hat_1 s_hat_1, ..., h_hat_M s_hat_M]`, padding removed.
    pub fn decode(&self, code: &HierarchicalCode) -> Result<RealVector> {
        self.check_code(code)?;
        let rho_hat = norm_reconstruction(code.norm_index, self.allocation.b_rho, self.rho_max);
        let reference;
        let hinge: &[f64] = match (&self.hinge_codebook, code.hinge_index) {
            (Some(cb), Some(i)) => cb.codeword(i as usize),
            _ => {
                reference = hinge_reference(self.m())?;
                reference.as_slice()
            }
        };
        let mut out = Vec::with_capacity(self.m() * self.l());
        for ((&index, sign), h) in code.line_indices.iter().zip(&code.signs).zip(hinge) {
            let scale = rho_hat * h * sign.value();
            out.extend(self.block_codebook.codeword(index as usize).iter().map(|c| scale * c));
        }
        out.truncate(self.dim);
        RealVector::new(out)
    }

    /// `decode(encode(g))`.
    pub fn quantize(&self, g: &[f64]) -> Result<RealVector> {
        self.decode(&self.encode(g)?)
    }

    pub fn pack(&self, code: &HierarchicalCode) -> Result<Vec<u8>> {
        self.check_code(code)?;
        let line_bits = self.allocation.b_s - 1;
        let mut w = BitWriter::with_capacity(self.packed_len());
        w.push(code.norm_index, self.allocation.b_rho);
        for (&index, sign) in code.line_indices.iter().zip(&code.signs) {
            w.push(sign.bit(), 1);
            w.push(index as u64, line_bits);
        }
        if let Some(i) = code.hinge_index {
            w.push(i as u64, self.allocation.b_h);
        }
        Ok(w.finish())
    }

    pub fn unpack(&self, bytes: &[u8]) -> Result<HierarchicalCode> {
        if bytes.len() != self.packed_len() {
            return Err(Error::CorruptCode(format!(
                "expected {} bytes, got {}",
                self.packed_len(),
                bytes.len()
            )));
        }
        let mut r = BitReader::new(bytes);
        let norm_index = r.read(self.allocation.b_rho);
        let line_bits = self.allocation.b_s - 1;
        let mut line_indices = Vec::with_capacity(self.m());
        let mut signs = Vec::with_capacity(self.m());
        for _ in 0..self.m() {
            signs.push(Sign::from_bit(r.read(1)));
            line_indices.push(r.read(line_bits) as u32);
        }
        let hinge_index = (self.allocation.b_h > 0).then(|| r.read(self.allocation.b_h) as u32);
        if !r.rest_is_zero() {
            return Err(Error::CorruptCode("nonzero padding bits".into()));
        }
        let code = HierarchicalCode {
            norm_index,
            line_indices,
            signs,
            hinge_index,
        };
        self.check_code(&code)?;
        Ok(code)
    }
}

impl StageQuantizer for QuantizerConfig {
    fn shape(&self) -> (usize, usize) {
        (self.m(), self.l())
    }

    fn norm_hat(&self, rho: f64) -> f64 {
        quantize_norm(rho, self.allocation.b_rho, self.rho_max)
            .expect("config validated")
            .1
    }

    fn block_hat(&self, s: &[f64], out: &mut [f64]) {
        let (index, d) = self.block_codebook.nearest_line(s);
        let sign = Sign::of(d).value();
        out.iter_mut()
            .zip(self.block_codebook.codeword(index))
            .for_each(|(o, c)| *o = sign * c);
    }

    fn hinge_hat(&self, h: &[f64], out: &mut [f64]) {
        match &self.hinge_codebook {
            Some(cb) => out.copy_from_slice(cb.codeword(cb.nearest_line(h).0)),
            None => out.fill(1.0 / (self.m() as f64).sqrt()),
        }
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn with_capacity(n: usize) -> Self {
        Self {
            bytes: Vec::with_capacity(n),
            used: 8,
        }
    }

    /// Appends the low `width` bits of `value`, most significant first.
    fn push(&mut self, value: u64, width: u32) {
        for k in (0..width).rev() {
            if self.used == 8 {
                self.bytes.push(0);
                self.used = 0;
            }
            let bit = ((value >> k) & 1) as u8;
            *self.bytes.last_mut().unwrap() |= bit << (7 - self.used);
            self.used += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn read(&mut self, width: u32) -> u64 {
        let mut v = 0u64;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        v
    }

    fn rest_is_zero(&mut self) -> bool {
        let total = self.bytes.len() * 8;
        let rest = total - self.pos;
        self.read(rest as u32) == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{design_line_packing, random_positive_codebook};
    use crate::rng::SeededRng;
    use crate::vector::sample_gaussian_vector;

    fn config(dim: usize, m: usize, l: usize, b_rho: u32, b_s: u32, b_h: u32) -> QuantizerConfig {
        let alloc = BitAllocation::manual(m, l, b_rho, b_s, b_h).unwrap();
        let cs = Arc::new(design_line_packing(l, b_s, 1, 200).unwrap());
        let ch = (b_h > 0).then(|| Arc::new(random_positive_codebook(m, b_h, 2).unwrap()));
        QuantizerConfig::new(dim, alloc, cs, ch, default_rho_max(m, l)).unwrap()
    }

    #[test]
    fn decompose_three_four_five() {
        let d = decompose(&[3.0, 0.0, 0.0, 4.0], 2, 2).unwrap();
        assert_eq!(d.rho, 5.0);
        assert_eq!(d.blocks[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(d.blocks[1].as_slice(), &[0.0, 1.0]);
        assert!((d.hinge.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((d.hinge.as_slice()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn decompose_zero_and_padding() {
        let d = decompose(&[0.0; 6], 3, 2).unwrap();
        assert_eq!(d.rho, 0.0);
        assert!(d.blocks.iter().all(|b| b.as_slice() == [1.0, 0.0]));
        assert_eq!(d.hinge, hinge_reference(3).unwrap());

        let g = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -1.0];
        let d = decompose(&g, 2, 4).unwrap();
        let sum: f64 = d.hinge.as_slice().iter().map(|h| h * h).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // second block: [0, 1.5, -1, 0] / rho
        let rho = dot(&g, &g).sqrt();
        assert!((d.hinge.as_slice()[1] - (1.5f64.powi(2) + 1.0).sqrt() / rho).abs() < 1e-12);
        assert_eq!(d.blocks[1].as_slice()[3], 0.0);

        assert!(decompose(&g, 2, 3).is_err());
        assert!(decompose(&[f64::NAN], 1, 1).is_err());
    }

    #[test]
    fn degenerate_block_becomes_e1() {
        let d = decompose(&[0.0, 0.0, 1.0, 1.0], 2, 2).unwrap();
        assert_eq!(d.blocks[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(d.hinge.as_slice(), &[0.0, 1.0]);
        let back = d.reassemble(4);
        assert!(back
            .iter()
            .zip([0.0, 0.0, 1.0, 1.0])
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn norm_quantizer_examples() {
        assert_eq!(quantize_norm(3.0, 2, 8.0).unwrap(), (1, 3.0));
        assert_eq!(quantize_norm(100.0, 2, 8.0).unwrap(), (3, 7.0));
        assert_eq!(quantize_norm(0.0, 2, 8.0).unwrap(), (0, 1.0));
        assert_eq!(quantize_norm(8.0, 2, 8.0).unwrap(), (3, 7.0));
        assert_eq!(quantize_norm(5.0, 0, 8.0).unwrap(), (0, 4.0));
        assert!(quantize_norm(-1.0, 2, 8.0).is_err());
        let mut rng = SeededRng::new(3);
        for _ in 0..1000 {
            let rho = rng.uniform() * 11.0;
            let (_, r) = quantize_norm(rho, 5, 11.0).unwrap();
            assert!((rho - r).abs() <= 11.0 / 64.0 + 1e-15);
        }
    }

    #[test]
    fn default_rho_max_examples() {
        assert!((default_rho_max(10, 10) - 114.142_135_623_730_95).abs() < 1e-10);
        assert_eq!(default_rho_max(1, 2), 4.0);
        assert!((default_rho_max(50, 10) - 531.622_776_601_683_8).abs() < 1e-10);
    }

    #[test]
    fn config_validation() {
        let alloc = BitAllocation::manual(2, 4, 8, 3, 0).unwrap();
        let cs = Arc::new(design_line_packing(4, 3, 1, 10).unwrap());
        assert!(QuantizerConfig::new(8, alloc.clone(), cs.clone(), None, 10.0).is_ok());
        assert!(QuantizerConfig::new(9, alloc.clone(), cs.clone(), None, 10.0).is_err());
        assert!(QuantizerConfig::new(8, alloc.clone(), cs.clone(), None, 0.0).is_err());
        let ch = Arc::new(random_positive_codebook(2, 2, 0).unwrap());
        assert!(QuantizerConfig::new(8, alloc, cs.clone(), Some(ch.clone()), 10.0).is_err());
        let alloc = BitAllocation::manual(2, 4, 8, 4, 2).unwrap();
        assert!(QuantizerConfig::new(8, alloc.clone(), cs, Some(ch.clone()), 10.0).is_err());
        let cs = Arc::new(design_line_packing(4, 4, 1, 10).unwrap());
        assert!(QuantizerConfig::new(8, alloc.clone(), cs.clone(), None, 10.0).is_err());
        assert!(QuantizerConfig::new(8, alloc, cs, Some(ch), 10.0).is_ok());
    }

    #[test]
    fn all_zero_code_decodes_to_repeated_first_codeword() {
        let cfg = config(8, 2, 4, 3, 3, 0);
        let code = HierarchicalCode {
            norm_index: 0,
            line_indices: vec![0, 0],
            signs: vec![Sign::Plus, Sign::Plus],
            hinge_index: None,
        };
        let g = cfg.decode(&code).unwrap();
        let scale = cfg.rho_max() / 16.0 / 2f64.sqrt();
        let c0 = cfg.block_codebook().codeword(0);
        for (i, v) in g.as_slice().iter().enumerate() {
            assert!((v - scale * c0[i % 4]).abs() < 1e-12);
        }
        assert_eq!(cfg.pack(&code).unwrap(), vec![0u8; 2]);
    }

    #[test]
    fn packed_length_arithmetic() {
        let cfg = config(6, 2, 3, 4, 3, 2);
        assert_eq!(cfg.payload_bits(), 12);
        assert_eq!(cfg.packed_len(), 2);
    }

    #[test]
    fn sign_equivariance_and_scale_covariance() {
        let cfg = config(10, 3, 4, 10, 4, 2);
        let mut rng = SeededRng::new(17);
        for _ in 0..200 {
            let g = sample_gaussian_vector(10, &mut rng).unwrap().into_vec();
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            let a = cfg.encode(&g).unwrap();
            let b = cfg.encode(&neg).unwrap();
            assert_eq!(a.line_indices, b.line_indices);
            assert_eq!(a.norm_index, b.norm_index);
            assert_eq!(a.hinge_index, b.hinge_index);
            let flipped: Vec<Sign> = a.signs.iter().map(|s| s.flip()).collect();
            assert_eq!(b.signs, flipped);
            let da = cfg.decode(&a).unwrap();
            let db = cfg.decode(&b).unwrap();
            assert!(da.as_slice().iter().zip(db.as_slice()).all(|(x, y)| x == &-y));

            let scaled: Vec<f64> = g.iter().map(|v| 3.7 * v).collect();
            let c = cfg.encode(&scaled).unwrap();
            assert_eq!(
                (a.line_indices, a.signs, a.hinge_index),
                (c.line_indices, c.signs, c.hinge_index)
            );
        }
    }

    #[test]
    fn decode_rejects_bad_codes() {
        let cfg = config(8, 2, 4, 3, 3, 0);
        let good = HierarchicalCode {
            norm_index: 7,
            line_indices: vec![3, 0],
            signs: vec![Sign::Minus, Sign::Plus],
            hinge_index: None,
        };
        assert!(cfg.decode(&good).is_ok());
        let mut bad = good.clone();
        bad.norm_index = 8;
        assert!(matches!(cfg.decode(&bad), Err(Error::CorruptCode(_))));
        let mut bad = good.clone();
        bad.line_indices[1] = 4;
        assert!(matches!(cfg.decode(&bad), Err(Error::CorruptCode(_))));
        let mut bad = good.clone();
        bad.hinge_index = Some(0);
        assert!(matches!(cfg.decode(&bad), Err(Error::CorruptCode(_))));
        let mut bad = good;
        bad.signs.pop();
        assert!(matches!(cfg.decode(&bad), Err(Error::CorruptCode(_))));
    }

    #[test]
    fn unpack_rejects_bad_lengths_and_padding() {
        let cfg = config(8, 2, 4, 3, 3, 0);
        assert_eq!(cfg.packed_len(), 2);
        assert!(matches!(cfg.unpack(&[0]), Err(Error::CorruptCode(_))));
        assert!(matches!(cfg.unpack(&[0, 0, 0]), Err(Error::CorruptCode(_))));
        // 9 payload bits, the last 7 must be zero
        assert!(matches!(cfg.unpack(&[0, 1]), Err(Error::CorruptCode(_))));
        assert!(cfg.unpack(&[0xff, 0x80]).is_ok());
    }

    #[test]
    fn stage_quantizer_matches_codec() {
        let cfg = config(12, 3, 4, 9, 5, 3);
        let mut rng = SeededRng::new(4);
        for _ in 0..100 {
            let g = sample_gaussian_vector(12, &mut rng).unwrap().into_vec();
            let direct = cfg.quantize(&g).unwrap();
            let dec = decompose(&g, 3, 4).unwrap();
            let rho = cfg.norm_hat(dec.rho);
            let mut h = vec![0.0; 3];
            cfg.hinge_hat(dec.hinge.as_slice(), &mut h);
            let mut s = vec![0.0; 4];
            let mut out = Vec::new();
            for (b, hi) in dec.blocks.iter().zip(&h) {
                cfg.block_hat(b.as_slice(), &mut s);
                out.extend(s.iter().map(|v| rho * hi * v));
            }
            assert!(direct.as_slice().iter().zip(&out).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
}
