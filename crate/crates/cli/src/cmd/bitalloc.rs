use std::path::PathBuf;
use std::time::Instant;

use grassq_core::bitalloc::{
    beta_l, block_distortion_bounds, hinge_distortion_upper, norm_distortion_upper, proposition2_radius, scheme1,
    scheme2, theorem1_bounds, Theorem1Bounds,
};
use grassq_core::quantizer::default_rho_max;
use grassq_core::BitAllocation;
use serde::Serialize;

use crate::manifest::{print_json, sidecar, usage, write_file, write_manifest, CliResult};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Number of blocks.
    #[arg(long = "M", alias = "m")]
    m: usize,
    /// Block length.
    #[arg(long = "L", alias = "l")]
    l: usize,
    /// Total bit budget.
    #[arg(long = "B", alias = "b")]
    b: u64,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    scheme: u8,
    /// Scheme 2 only: fix the norm bits instead of using the closed form.
    #[arg(long = "b-rho")]
    b_rho: Option<u32>,
    /// Norm range for the norm-distortion bound (default ML + sqrt(2ML)).
    #[arg(long = "rho-max")]
    rho_max: Option<f64>,
    /// Also write the JSON (and a manifest) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BlockBounds {
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct AllBounds {
    block: BlockBounds,
    hinge_upper: f64,
    norm_upper: f64,
    theorem1: Theorem1Bounds,
    proposition2_radius: f64,
    beta_l: f64,
}

#[derive(Serialize)]
struct Output {
    allocation: BitAllocation,
    payload_bits: u64,
    leftover: u64,
    bits_per_coefficient: f64,
    log2_lambda_star: Option<f64>,
    rho_max: f64,
    bounds: AllBounds,
}

pub fn run(args: Args, argv: &[String]) -> CliResult<()> {
    let started = Instant::now();
    let alloc = match args.scheme {
        1 if args.b_rho.is_some() => return usage("--b-rho only applies to --scheme 2"),
        1 => scheme1(args.m, args.l, args.b)?,
        _ => scheme2(args.m, args.l, args.b, args.b_rho)?,
    };
    let rho_max = args.rho_max.unwrap_or_else(|| default_rho_max(args.m, args.l));
    let (lower, upper) = block_distortion_bounds(args.l, alloc.b_s)?;
    let out = Output {
        payload_bits: alloc.payload_bits(),
        leftover: alloc.leftover(),
        bits_per_coefficient: alloc.bits_per_coefficient(),
        log2_lambda_star: alloc.lambda_star.map(f64::log2),
        rho_max,
        bounds: AllBounds {
            block: BlockBounds { lower, upper },
            hinge_upper: hinge_distortion_upper(args.l, args.m, alloc.b_h)?,
            norm_upper: norm_distortion_upper(alloc.b_rho, rho_max)?,
            theorem1: theorem1_bounds(args.m, args.l, args.b)?,
            proposition2_radius: proposition2_radius(args.l)?,
            beta_l: beta_l(args.l as f64),
        },
        allocation: alloc,
    };
    if let Some(path) = &args.out {
        write_file(path, serde_json::to_string_pretty(&out)? + "\n")?;
        write_manifest(&sidecar(path), "bitalloc", argv, &args, None, &[path], started)?;
    }
    print_json(&out)
}
