use std::path::PathBuf;
use std::time::Instant;

use clap::ValueEnum;
use grassq_core::codebook::{design_line_packing_with, lloyd_positive, write_codebook, LloydOptions, PackingOptions};
use grassq_core::distortion::sample_hinge;
use grassq_core::SeededRng;
use serde::Serialize;

use crate::manifest::{print_json, sidecar, usage, write_file, write_manifest, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Even block codebook by line packing.
    Line,
    /// Positive hinge codebook by Lloyd on sampled hinge vectors.
    Lloyd,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Codeword dimension (L for line, M for lloyd; defaults to --samples-M there).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    bits: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Repulsion iterations (line) or maximum Lloyd rounds (lloyd).
    #[arg(long, default_value_t = 20_000)]
    iters: u64,
    #[arg(long, default_value_t = 8)]
    restarts: u32,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long = "samples-M", alias = "samples-m")]
    samples_m: Option<usize>,
    #[arg(long = "samples-L", alias = "samples-l")]
    samples_l: Option<usize>,
    #[arg(long = "samples-n", default_value_t = 10_000)]
    samples_n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Summary {
    kind: Kind,
    dim: usize,
    bits: u32,
    codewords: usize,
    min_pairwise_chordal: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_distortion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distortion_history: Option<Vec<f64>>,
}

pub fn run(args: Args, argv: &[String]) -> CliResult<()> {
    let started = Instant::now();
    let (cb, history) = match args.kind {
        Kind::Line => {
            let Some(dim) = args.dim else {
                return usage("--dim is required for --kind line");
            };
            let opts = PackingOptions {
                seed: args.seed,
                iterations: args.iters,
                restarts: args.restarts,
            };
            (design_line_packing_with(dim, args.bits, &opts)?, None)
        }
        Kind::Lloyd => {
            let (Some(m), Some(l)) = (args.samples_m, args.samples_l) else {
                return usage("--kind lloyd needs --samples-M and --samples-L");
            };
            if args.dim.is_some_and(|d| d != m) {
                return usage("--dim must equal --samples-M for a hinge codebook");
            }
            let mut rng = SeededRng::new(args.seed).substream(0);
            let samples = (0..args.samples_n)
                .map(|_| sample_hinge(m, l, &mut rng))
                .collect::<grassq_core::Result<Vec<_>>>()?;
            let out = lloyd_positive(
                &samples,
                &LloydOptions {
                    bits: args.bits,
                    seed: args.seed,
                    max_iterations: args.iters,
                    tolerance: args.tolerance,
                },
            )?;
            (out.codebook, Some(out.distortion_history))
        }
    };
    let mut bytes = Vec::new();
    write_codebook(&cb, &mut bytes)?;
    write_file(&args.out, bytes)?;
    let manifest = sidecar(&args.out);
    write_manifest(
        &manifest,
        "codebook",
        argv,
        &args,
        Some(args.seed),
        &[&args.out],
        started,
    )?;
    print_json(&Summary {
        kind: args.kind,
        dim: cb.dim(),
        bits: cb.bits(),
        codewords: cb.len(),
        min_pairwise_chordal: cb.meta().min_pairwise_chordal,
        final_distortion: history.as_ref().and_then(|h| h.last().copied()),
        distortion_history: history,
    })
}
