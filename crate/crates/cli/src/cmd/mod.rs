pub mod bitalloc;
pub mod codebook;
pub mod distortion;
pub mod fedsim;
pub mod stats;
