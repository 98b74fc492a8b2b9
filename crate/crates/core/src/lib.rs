//! Hierarchical Grassmannian quantization of high-dimensional stochastic
//! gradients.
//!
//! A gradient `g` is split into its norm `rho`, `M` unit-norm blocks of
//! length `L` and a unit-norm *hinge* vector holding the block norms. The
//! norm goes through a uniform scalar quantizer, each block through an even
//! Grassmannian codebook (sign bit plus line index) and the hinge through a
//! positive Grassmannian codebook, or is replaced by the constant reference
//! `(1/sqrt(M)) * 1` when no hinge bits are spent.
//!
//! Modules:
//!
//! * [`rng`], [`vector`], [`special`]: seeded randomness, unit vectors and
//!   chordal geometry, incomplete beta function.
//! * [`codebook`]: line packing and Lloyd design, nearest-codeword search,
//!   the binary codebook file format.
//! * [`quantizer`]: decomposition, encode/decode and the packed bit layout.
//! * [`bitalloc`]: closed-form bit allocation and distortion bounds.
//! * [`distortion`]: Monte-Carlo measurement of every distortion term.
//! * [`stats`]: Kolmogorov-Smirnov machinery and reference CDFs.
//! * [`fedsim`]: federated SGD on softmax regression with pluggable
//!   gradient compression.

pub mod bitalloc;
pub mod codebook;
pub mod distortion;
pub mod error;
pub mod fedsim;
pub mod quantizer;
pub mod rng;
pub mod special;
pub mod stats;
pub mod vector;

pub use bitalloc::{BitAllocation, Scheme};
pub use codebook::{CodebookKind, DesignMeta, GrassmannCodebook};
pub use error::{Error, Result};
pub use quantizer::{HierarchicalCode, QuantizerConfig, Sign};
pub use rng::SeededRng;
pub use vector::{RealVector, UnitVector};
