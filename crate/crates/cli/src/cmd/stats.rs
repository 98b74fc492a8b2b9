use std::path::PathBuf;

use clap::ValueEnum;
use grassq_core::stats::{test_block_uniformity, test_gradient_uniformity, test_hinge_beta, BlockUniformityOptions};
use grassq_core::SeededRng;
use serde::Serialize;

use crate::manifest::{print_json, read_file, usage, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Test {
    /// First coordinate of a normalized block vs the sphere-coordinate law.
    BlockUniformity,
    /// `h_1^2` vs `Beta(L/2, (ML - L)/2)`.
    HingeBeta,
    /// Same statistic as block-uniformity on gradients dumped by `fedsim`.
    GradientUniformity,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, value_enum)]
    test: Test,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    #[arg(long = "L", alias = "l")]
    l: usize,
    #[arg(long = "block-index", default_value_t = 0)]
    block_index: usize,
    /// Added to the block's first coordinate (power check; block-uniformity only).
    #[arg(long, default_value_t = 0.0)]
    skew: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// `gradients.jsonl` written by `fedsim --dump-gradients`.
    #[arg(long = "trace-gradients")]
    trace_gradients: Option<PathBuf>,
}

#[derive(Serialize)]
struct Output {
    test: Test,
    statistic: f64,
    p_value: f64,
    n: usize,
}

pub fn run(args: Args, _argv: &[String]) -> CliResult<()> {
    let mut rng = SeededRng::new(args.seed);
    let r = match args.test {
        Test::BlockUniformity | Test::HingeBeta => {
            let Some(m) = args.m else {
                return usage("--M is required for this test");
            };
            if args.test == Test::HingeBeta {
                test_hinge_beta(args.n, m, args.l, &mut rng)?
            } else {
                let opts = BlockUniformityOptions {
                    block_index: args.block_index,
                    skew: args.skew,
                };
                test_block_uniformity(args.n, m, args.l, &opts, &mut rng)?
            }
        }
        Test::GradientUniformity => {
            let Some(path) = &args.trace_gradients else {
                return usage("--trace-gradients is required for gradient-uniformity");
            };
            let bytes = read_file(path)?;
            let text =
                String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{}: not UTF-8", path.display())))?;
            let gradients = text
                .lines()
                .filter(|line| !line.trim().is_empty())
                .map(serde_json::from_str::<Vec<f64>>)
                .collect::<Result<Vec<_>, _>>()?;
            if gradients.is_empty() {
                return usage(format!("{}: no gradients", path.display()));
            }
            test_gradient_uniformity(&gradients, args.l, args.block_index)?
        }
    };
    print_json(&Output {
        test: args.test,
        statistic: r.statistic,
        p_value: r.p_value,
        n: r.n,
    })
}
