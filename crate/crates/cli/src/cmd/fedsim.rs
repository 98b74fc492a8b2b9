use std::path::{Path, PathBuf};
use std::time::Instant;

use grassq_core::fedsim::{run_training, CompressionScheme, FedConfig, TrainingTrace};
use grassq_core::BitAllocation;
use serde::Serialize;

use crate::manifest::{create_dir, print_json, read_file, usage, write_file, write_manifest, CliResult};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// TOML training config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Switching away from `hierarchical` drops the `[quantizer]` section.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    /// Write worker 0's uncompressed gradients to `gradients.jsonl`.
    #[arg(long = "dump-gradients")]
    dump_gradients: bool,
    /// Run none, sign and hierarchical into sub-directories of `--out-dir`.
    #[arg(long, conflicts_with = "scheme")]
    compare: bool,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    None,
    Sign,
    Hierarchical,
}

impl From<SchemeArg> for CompressionScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::None => CompressionScheme::None,
            SchemeArg::Sign => CompressionScheme::Sign,
            SchemeArg::Hierarchical => CompressionScheme::Hierarchical,
        }
    }
}

#[derive(Serialize)]
struct Summary {
    scheme: CompressionScheme,
    seed: u64,
    dim: usize,
    bits_per_iteration: u64,
    bits_per_coefficient: f64,
    allocation: Option<BitAllocation>,
    rho_max: Option<f64>,
    final_iteration: usize,
    final_test_accuracy: f64,
    final_test_loss: f64,
    final_train_loss: f64,
}

fn summary(trace: &TrainingTrace) -> Summary {
    let last = trace.records.last().expect("iteration 0 is always recorded");
    Summary {
        scheme: trace.config.scheme,
        seed: trace.config.seed,
        dim: trace.dim,
        bits_per_iteration: trace.bits_per_iteration,
        bits_per_coefficient: trace.bits_per_iteration as f64 / trace.dim as f64,
        allocation: trace.allocation.clone(),
        rho_max: trace.rho_max,
        final_iteration: last.iteration,
        final_test_accuracy: last.test_accuracy,
        final_test_loss: last.test_loss,
        final_train_loss: last.train_loss,
    }
}

fn with_scheme(mut cfg: FedConfig, scheme: CompressionScheme) -> CliResult<FedConfig> {
    if scheme != CompressionScheme::Hierarchical {
        cfg.quantizer = None;
    } else if cfg.quantizer.is_none() {
        return usage("the hierarchical scheme needs a [quantizer] section in the config");
    }
    cfg.scheme = scheme;
    Ok(cfg)
}

fn run_one(cfg: &FedConfig, dir: &Path, argv: &[String], started: Instant) -> CliResult<Summary> {
    create_dir(dir)?;
    let trace = run_training(cfg)?;
    let mut jsonl = String::new();
    let mut csv = csv::Writer::from_writer(Vec::new());
    for r in &trace.records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
        csv.serialize(r)?;
    }
    let csv = csv.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    let mut outputs = vec![dir.join("trace.jsonl"), dir.join("trace.csv"), dir.join("summary.json")];
    write_file(&outputs[0], jsonl)?;
    write_file(&outputs[1], csv)?;
    let s = summary(&trace);
    write_file(&outputs[2], serde_json::to_string_pretty(&s)? + "\n")?;
    if cfg.record_gradients {
        let mut dump = String::new();
        for g in &trace.gradients {
            dump.push_str(&serde_json::to_string(g)?);
            dump.push('\n');
        }
        outputs.push(dir.join("gradients.jsonl"));
        write_file(&outputs[3], dump)?;
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(
        &dir.join("manifest.json"),
        "fedsim",
        argv,
        cfg,
        Some(cfg.seed),
        &refs,
        started,
    )?;
    Ok(s)
}

pub fn run(args: Args, argv: &[String]) -> CliResult<()> {
    let started = Instant::now();
    let text = read_file(&args.config)?;
    let text = String::from_utf8(text).map_err(|_| crate::manifest::CliError::Usage("config is not UTF-8".into()))?;
    let mut cfg = FedConfig::from_toml(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(k) = args.workers {
        cfg.workers = k;
    }
    if let Some(eta) = args.eta {
        cfg.eta = eta;
    }
    cfg.record_gradients |= args.dump_gradients;
    if let Some(s) = args.scheme {
        cfg = with_scheme(cfg, s.into())?;
    }
    if args.compare {
        let mut all = Vec::new();
        for (name, scheme) in [
            ("none", CompressionScheme::None),
            ("sign", CompressionScheme::Sign),
            ("hierarchical", CompressionScheme::Hierarchical),
        ] {
            let c = with_scheme(cfg.clone(), scheme)?;
            c.validate()?;
            all.push(run_one(&c, &args.out_dir.join(name), argv, started)?);
        }
        return print_json(&all);
    }
    cfg.validate()?;
    print_json(&run_one(&cfg, &args.out_dir, argv, started)?)
}
