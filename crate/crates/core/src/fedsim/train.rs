//! The federated training loop and its configuration.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{load_idx, make_synthetic, partition, Dataset, Split};
use super::model::{
    aggregate, evaluate, full_gradient, local_gradient, sgd_step, sign_aggregate, sign_compress, Model,
};
use crate::bitalloc::{scheme1, scheme2, BitAllocation};
use crate::distortion::{design_block_codebook, design_hinge_codebook, CodebookDesign};
use crate::error::{invalid, Error, Result};
use crate::quantizer::{default_rho_max, QuantizerConfig};
use crate::rng::SeededRng;
use crate::vector::dot;

/// Substream labels of the run seed.
const STREAM_DATA: u64 = 1;
const STREAM_PARTITION: u64 = 2;
const STREAM_WARMUP: u64 = 3;
const STREAM_CODEBOOK: u64 = 4;
const STREAM_TRAIN: u64 = 5;

/// Iterations of uncompressed SGD used to calibrate `rho_max = auto`.
pub const WARMUP_ITERATIONS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompressionScheme {
    /// Full-precision gradients (64 bits per coefficient).
    None,
    /// signSGD, one bit per coefficient.
    Sign,
    /// The hierarchical Grassmannian codec.
    Hierarchical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        classes: usize,
        features: usize,
        train: usize,
        test: usize,
        separation: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Keep only the first examples of each split.
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AllocationSpec {
    Manual {
        b_rho: u32,
        b_s: u32,
        b_h: u32,
    },
    Scheme1 {
        budget: u64,
    },
    Scheme2 {
        budget: u64,
        #[serde(default)]
        b_rho: Option<u32>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoMaxMode {
    /// Twice the largest worker-gradient norm seen in a short uncompressed warmup.
    Auto,
    /// `ML + sqrt(2ML)`.
    Default,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoMax {
    Fixed(f64),
    Mode(RhoMaxMode),
}

fn default_rho_max_spec() -> RhoMax {
    RhoMax::Mode(RhoMaxMode::Auto)
}

/// Serializable description of the hierarchical codec; the number of blocks
/// is `ceil(dim / block_length)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    pub block_length: usize,
    pub allocation: AllocationSpec,
    #[serde(default = "default_rho_max_spec")]
    pub rho_max: RhoMax,
    /// Codebook seed; derived from the run seed when absent.
    #[serde(default)]
    pub codebook_seed: Option<u64>,
    #[serde(default = "default_packing_iterations")]
    pub packing_iterations: u64,
    #[serde(default = "default_packing_restarts")]
    pub packing_restarts: u32,
}

fn default_packing_iterations() -> u64 {
    20_000
}

fn default_packing_restarts() -> u32 {
    8
}

impl QuantizerSpec {
    pub fn allocation_for(&self, dim: usize) -> Result<BitAllocation> {
        let l = self.block_length;
        if l == 0 {
            return invalid("block_length must be positive");
        }
        let m = dim.div_ceil(l);
        match self.allocation {
            AllocationSpec::Manual { b_rho, b_s, b_h } => BitAllocation::manual(m, l, b_rho, b_s, b_h),
            AllocationSpec::Scheme1 { budget } => scheme1(m, l, budget),
            AllocationSpec::Scheme2 { budget, b_rho } => scheme2(m, l, budget, b_rho),
        }
    }

    /// Designs the codebooks for gradients of dimension `dim`.
    pub fn build(&self, dim: usize, rho_max: f64, run_seed: u64) -> Result<QuantizerConfig> {
        let allocation = self.allocation_for(dim)?;
        let design = CodebookDesign {
            seed: self
                .codebook_seed
                .unwrap_or_else(|| SeededRng::new(run_seed).substream(STREAM_CODEBOOK).seed()),
            packing_iterations: self.packing_iterations,
            packing_restarts: self.packing_restarts,
            ..CodebookDesign::default()
        };
        let block = Arc::new(design_block_codebook(allocation.l, allocation.b_s, &design)?);
        let hinge = if allocation.b_h > 0 {
            Some(Arc::new(design_hinge_codebook(
                allocation.m,
                allocation.l,
                allocation.b_h,
                &design,
            )?))
        } else {
            None
        };
        QuantizerConfig::new(dim, allocation, block, hinge, rho_max)
    }
}

fn default_eval_every() -> usize {
    10
}

fn default_eta() -> f64 {
    0.05
}

/// Everything that defines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    /// Number of workers `K`.
    pub workers: usize,
    /// Number of iterations `N`.
    pub iterations: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub batch_size: usize,
    pub scheme: CompressionScheme,
    #[serde(default)]
    pub quantizer: Option<QuantizerSpec>,
    /// signSGD server rule: sign of the vote sum instead of the mean.
    #[serde(default)]
    pub majority_vote: bool,
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Keep every uncompressed gradient of worker 0 in the trace.
    #[serde(default)]
    pub record_gradients: bool,
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.iterations == 0 {
            return invalid("workers and iterations must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return invalid("eta must be positive");
        }
        if self.eval_every == 0 || self.batch_size == 0 {
            return invalid("eval_every and batch_size must be positive");
        }
        match (self.scheme, &self.quantizer) {
            (CompressionScheme::Hierarchical, None) => invalid("the hierarchical scheme needs a [quantizer] section"),
            (CompressionScheme::Hierarchical, Some(_)) | (_, None) => Ok(()),
            (_, Some(_)) => invalid("a [quantizer] section is only valid with scheme = \"hierarchical\""),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Number of model updates applied so far.
    pub iteration: usize,
    /// Mean cross-entropy on the full training set.
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Bits one worker has sent so far.
    pub bits_uplinked_per_worker: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub config: FedConfig,
    /// Model dimension `d * C`.
    pub dim: usize,
    /// Uplink bits per worker per iteration.
    pub bits_per_iteration: u64,
    pub allocation: Option<BitAllocation>,
    pub rho_max: Option<f64>,
    pub records: Vec<EvalRecord>,
    pub final_theta: Vec<f64>,
    /// Worker 0's uncompressed gradients, when requested.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub gradients: Vec<Vec<f64>>,
}

impl TrainingTrace {
    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.test_accuracy)
    }
}

/// Training and test sets for a dataset spec.
pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::Synthetic {
            classes,
            features,
            train,
            test,
            separation,
        } => {
            let mut rng = SeededRng::new(seed).substream(STREAM_DATA);
            make_synthetic(*classes, *features, *train, *test, *separation, &mut rng)
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit,
            test_limit,
        } => {
            let mut train = load_idx(train_images, train_labels, Split::Train)?;
            let mut test = load_idx(test_images, test_labels, Split::Test)?;
            if let Some(n) = train_limit {
                train = train.truncated(*n)?;
            }
            if let Some(n) = test_limit {
                test = test.truncated(*n)?;
            }
            let classes = train.classes().max(test.classes());
            let relabel = |ds: Dataset| {
                let feats: Vec<f64> = (0..ds.len()).flat_map(|i| ds.features(i).to_vec()).collect();
                Dataset::new(feats, ds.labels().to_vec(), ds.dim(), classes, ds.split())
            };
            Ok((relabel(train)?, relabel(test)?))
        }
    }
}

enum Compressor {
    None,
    Sign { majority_vote: bool },
    Hierarchical(QuantizerConfig),
}

/// Largest worker-gradient norm over a short uncompressed run, times two.
fn calibrate_rho_max(cfg: &FedConfig, shards: &[Dataset], dim: usize, classes: usize) -> Result<f64> {
    let root = SeededRng::new(cfg.seed).substream(STREAM_WARMUP);
    let mut model = Model::zeros(dim, classes);
    let mut max_norm = 0.0f64;
    for it in 0..WARMUP_ITERATIONS {
        let grads = worker_gradients(&model, shards, cfg.batch_size, &root.substream(it as u64))?;
        for (_, g) in &grads {
            max_norm = max_norm.max(dot(g, g).sqrt());
        }
        let mean = aggregate(&grads.iter().map(|(_, g)| g.as_slice()).collect::<Vec<_>>())?;
        sgd_step(model.theta_mut(), &mean, cfg.eta)?;
    }
    if !(max_norm > 0.0 && max_norm.is_finite()) {
        return invalid("warmup gradients vanished; set rho_max explicitly");
    }
    Ok(2.0 * max_norm)
}

fn worker_gradients(
    model: &Model,
    shards: &[Dataset],
    batch: usize,
    iter_rng: &SeededRng,
) -> Result<Vec<(f64, Vec<f64>)>> {
    shards
        .par_iter()
        .enumerate()
        .map(|(k, shard)| {
            let mut rng = iter_rng.substream(k as u64);
            local_gradient(model, shard, batch.min(shard.len()), &mut rng)
        })
        .collect()
}

/// Runs federated SGD; deterministic given the config.
pub fn run_training(cfg: &FedConfig) -> Result<TrainingTrace> {
    cfg.validate()?;
    let (train, test) = load_dataset(&cfg.dataset, cfg.seed)?;
    let (d, classes) = (train.dim(), train.classes());
    if test.dim() != d {
        return invalid("train and test feature dimensions differ");
    }
    let mut part_rng = SeededRng::new(cfg.seed).substream(STREAM_PARTITION);
    let shards = partition(&train, cfg.workers, &mut part_rng)?;
    let dim = d * classes;

    let compressor = match cfg.scheme {
        CompressionScheme::None => Compressor::None,
        CompressionScheme::Sign => Compressor::Sign {
            majority_vote: cfg.majority_vote,
        },
        CompressionScheme::Hierarchical => {
            let spec = cfg.quantizer.as_ref().expect("validated");
            let alloc = spec.allocation_for(dim)?;
            let rho_max = match spec.rho_max {
                RhoMax::Fixed(v) => v,
                RhoMax::Mode(RhoMaxMode::Default) => default_rho_max(alloc.m, alloc.l),
                RhoMax::Mode(RhoMaxMode::Auto) => calibrate_rho_max(cfg, &shards, d, classes)?,
            };
            Compressor::Hierarchical(spec.build(dim, rho_max, cfg.seed)?)
        }
    };
    let (bits_per_iteration, allocation, rho_max) = match &compressor {
        Compressor::None => (64 * dim as u64, None, None),
        Compressor::Sign { .. } => (dim as u64, None, None),
        Compressor::Hierarchical(q) => (q.payload_bits(), Some(q.allocation().clone()), Some(q.rho_max())),
    };

    let train_rng = SeededRng::new(cfg.seed).substream(STREAM_TRAIN);
    let mut model = Model::zeros(d, classes);
    let mut records = Vec::new();
    let mut gradients = Vec::new();
    let record = |model: &Model, iteration: usize| -> Result<EvalRecord> {
        let (train_loss, _) = full_gradient(model, &train)?;
        let (test_accuracy, test_loss) = evaluate(model, &test)?;
        Ok(EvalRecord {
            iteration,
            train_loss,
            test_accuracy,
            test_loss,
            bits_uplinked_per_worker: bits_per_iteration * iteration as u64,
        })
    };
    records.push(record(&model, 0)?);

    for it in 0..cfg.iterations {
        let grads = worker_gradients(&model, &shards, cfg.batch_size, &train_rng.substream(it as u64))?;
        if let Some((loss, _)) = grads
            .iter()
            .find(|(loss, g)| !loss.is_finite() || g.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Diverged {
                iteration: it,
                loss: *loss,
            });
        }
        if cfg.record_gradients {
            gradients.push(grads[0].1.clone());
        }
        let update = match &compressor {
            Compressor::None => aggregate(&grads.iter().map(|(_, g)| g.as_slice()).collect::<Vec<_>>())?,
            Compressor::Sign { majority_vote } => {
                let signs: Vec<Vec<i8>> = grads.iter().map(|(_, g)| sign_compress(g)).collect();
                sign_aggregate(&signs, *majority_vote)?
            }
            Compressor::Hierarchical(q) => {
                let decoded = grads
                    .par_iter()
                    .map(|(_, g)| q.decode(&q.encode(g)?).map(|v| v.into_vec()))
                    .collect::<Result<Vec<_>>>()?;
                aggregate(&decoded)?
            }
        };
        sgd_step(model.theta_mut(), &update, cfg.eta)?;
        if model.theta().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: it + 1,
                loss: f64::NAN,
            });
        }
        let done = it + 1;
        if done % cfg.eval_every == 0 || done == cfg.iterations {
            let r = record(&model, done)?;
            if !r.train_loss.is_finite() {
                return Err(Error::Diverged {
                    iteration: done,
                    loss: r.train_loss,
                });
            }
            records.push(r);
        }
    }

    Ok(TrainingTrace {
        config: cfg.clone(),
        dim,
        bits_per_iteration,
        allocation,
        rho_max,
        records,
        final_theta: model.theta().to_vec(),
        gradients,
    })
}
