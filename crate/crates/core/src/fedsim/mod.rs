//! Federated SGD on softmax regression with pluggable uplink compression.
//!
//! Each iteration every worker computes a mini-batch gradient on its own
//! shard, compresses it (none, signSGD, or the hierarchical codec), the
//! server averages the decoded gradients in worker order and takes an SGD
//! step. Worker `k` at iteration `n` draws from substream `(n, k)` of the
//! run seed, so traces do not depend on the thread count.

mod data;
mod model;
mod train;

pub use data::{
    load_idx, make_synthetic, parse_idx_images, parse_idx_labels, partition, partition_indices, Dataset, Split,
};
pub use model::{
    aggregate, evaluate, full_gradient, local_gradient, loss_and_gradient, sgd_step, sign_aggregate, sign_compress,
    Model,
};
pub use train::{
    load_dataset, run_training, AllocationSpec, CompressionScheme, DatasetSpec, EvalRecord, FedConfig, QuantizerSpec,
    RhoMax, RhoMaxMode, TrainingTrace, WARMUP_ITERATIONS,
};

use crate::error::{Error, Result};

/// Convergence bound on the average squared gradient norm after `N`
/// iterations with `K` workers:
/// `sqrt(l0) (mse/(2K) + sigma^2/(2K) + F0 - F*) / (sqrt(N) - sqrt(l0)/(2K))`.
pub fn theorem2_bound(mse: f64, k: usize, n: usize, l0: f64, sigma_sq_norm: f64, f0: f64, f_star: f64) -> Result<f64> {
    if mse < 0.0 || l0 < 0.0 || sigma_sq_norm < 0.0 || f0 < f_star || k == 0 {
        return Err(Error::InvalidArgument(
            "need nonnegative mse, l0, sigma^2, K >= 1 and F0 >= F*".into(),
        ));
    }
    let kf = k as f64;
    let denom = (n as f64).sqrt() - l0.sqrt() / (2.0 * kf);
    if denom <= 0.0 {
        return Err(Error::OutOfRegime(format!(
            "sqrt(N) = {} does not exceed sqrt(l0)/(2K)",
            (n as f64).sqrt()
        )));
    }
    Ok(l0.sqrt() * (mse / (2.0 * kf) + sigma_sq_norm / (2.0 * kf) + f0 - f_star) / denom)
}
