use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use grassq_core::distortion::{build_config, mc_full_mse, CodebookDesign, DistortionReport};
use grassq_core::quantizer::default_rho_max;
use grassq_core::{BitAllocation, SeededRng};
use serde::Serialize;

use crate::manifest::{create_dir, print_json, usage, write_file, write_manifest, CliResult};

/// Every grid point uses the same seed, so neighbouring points share
/// codebook designs and Monte-Carlo draws (common random numbers).
#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Number of blocks (comma-separated list).
    #[arg(long = "M", alias = "m", value_delimiter = ',', required = true)]
    m: Vec<usize>,
    /// Block length (comma-separated list).
    #[arg(long = "L", alias = "l", value_delimiter = ',', required = true)]
    l: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    bs: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    bh: Vec<u32>,
    #[arg(long = "b-rho", value_delimiter = ',', default_value = "26")]
    b_rho: Vec<u32>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Line-packing iterations for the block codebook.
    #[arg(long, default_value_t = 20_000)]
    iters: u64,
    #[arg(long, default_value_t = 8)]
    restarts: u32,
    /// Block codebooks with more lines than this are drawn at random.
    #[arg(long = "max-packed-lines", default_value_t = 256)]
    max_packed_lines: usize,
    #[arg(long = "lloyd-samples", default_value_t = 10_000)]
    lloyd_samples: usize,
    /// Norm range; defaults to ML + sqrt(2ML) per grid point.
    #[arg(long = "rho-max")]
    rho_max: Option<f64>,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

const CSV_HEADER: &str = "M,L,b_rho,b_s,b_h,budget,trials,block_chordal,block_chordal_ci95,block_euclid,hinge_chordal,\
hinge_chordal_ci95,hinge_euclid,norm,normalized,composed_normalized,composition_relative_gap,mse_total,mse_per_dim,\
ln_mse_per_dim,ln_mse_std_error,bound_block_lower,bound_block_upper,bound_hinge_upper,bound_norm_upper,\
theorem1_lower,theorem1_upper";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_row(r: &DistortionReport) -> String {
    let s = &r.stages;
    let a = &r.allocation;
    let mut row = String::new();
    let _ = write!(
        row,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.m,
        r.l,
        a.b_rho,
        a.b_s,
        a.b_h,
        a.budget,
        s.trials,
        s.block_chordal.mean,
        s.block_chordal.ci95,
        s.block_euclid.mean,
        s.hinge_chordal.mean,
        s.hinge_chordal.ci95,
        s.hinge_euclid.mean,
        s.norm.mean,
        s.normalized.mean,
        r.composed_normalized,
        r.composition_relative_gap,
        r.mse_total,
        r.mse_per_dim,
        r.ln_mse_per_dim,
        r.ln_mse_std_error,
        r.bounds.block_lower,
        r.bounds.block_upper,
        opt(r.bounds.hinge_upper),
        r.bounds.norm_upper,
        opt(r.bounds.theorem1.map(|t| t.lower)),
        opt(r.bounds.theorem1.map(|t| t.upper)),
    );
    row
}

pub fn run(args: Args, argv: &[String]) -> CliResult<()> {
    let started = Instant::now();
    if args.bs.is_empty() || args.bh.is_empty() || args.b_rho.is_empty() {
        return usage("empty bit list");
    }
    create_dir(&args.out_dir)?;
    let design = CodebookDesign {
        seed: args.seed,
        packing_iterations: args.iters,
        packing_restarts: args.restarts,
        max_packed_lines: args.max_packed_lines,
        lloyd_samples: args.lloyd_samples,
        ..CodebookDesign::default()
    };
    let rng = SeededRng::new(args.seed);
    let mut jsonl = String::new();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut points = 0usize;
    for &m in &args.m {
        for &l in &args.l {
            let rho_max = args.rho_max.unwrap_or_else(|| default_rho_max(m, l));
            for &b_rho in &args.b_rho {
                for &b_s in &args.bs {
                    for &b_h in &args.bh {
                        let alloc = BitAllocation::manual(m, l, b_rho, b_s, b_h)?;
                        let cfg = build_config(m * l, alloc, rho_max, &design)?;
                        let report = mc_full_mse(&cfg, args.trials, &rng)?;
                        jsonl.push_str(&serde_json::to_string(&report)?);
                        jsonl.push('\n');
                        csv.push_str(&csv_row(&report));
                        csv.push('\n');
                        points += 1;
                        eprintln!(
                            "M={m} L={l} b_rho={b_rho} b_s={b_s} b_h={b_h}: ln(mse/dim) = {:.4}",
                            report.ln_mse_per_dim
                        );
                    }
                }
            }
        }
    }
    let reports = args.out_dir.join("reports.jsonl");
    let summary = args.out_dir.join("summary.csv");
    write_file(&reports, jsonl)?;
    write_file(&summary, csv)?;
    let manifest = args.out_dir.join("manifest.json");
    write_manifest(
        &manifest,
        "distortion",
        argv,
        &args,
        Some(args.seed),
        &[&reports, &summary],
        started,
    )?;
    print_json(&serde_json::json!({
        "grid_points": points,
        "reports": reports.display().to_string(),
        "summary": summary.display().to_string(),
    }))
}
