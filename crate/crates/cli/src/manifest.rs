//! Run manifests and the error type shared by all subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use grassq_core::rng::RNG_ALGORITHM;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] grassq_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use grassq_core::Error as E;
        match self {
            CliError::Core(E::InfeasibleBudget(_) | E::Diverged { .. } | E::OutOfRegime(_)) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub subcommand: &'a str,
    pub command_line: &'a [String],
    pub config: &'a C,
    pub seed: Option<u64>,
    pub tool_version: &'static str,
    pub rng: &'static str,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Writes the manifest for a run started at `started` to `path`.
pub fn write_manifest<C: Serialize>(
    path: &Path,
    subcommand: &str,
    argv: &[String],
    config: &C,
    seed: Option<u64>,
    outputs: &[&Path],
    started: Instant,
) -> CliResult<()> {
    let manifest = RunManifest {
        subcommand,
        command_line: argv,
        config,
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        rng: RNG_ALGORITHM,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(path, text)
}

/// `<path>.manifest.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Pretty JSON on stdout; a closed pipe (`| head`) is not an error.
pub fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}
