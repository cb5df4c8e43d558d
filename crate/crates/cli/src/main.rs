//! `xlpool`: cross-layer pooled descriptors from NPY activation dumps.
//!
//! Results only ever go to files; stdout carries the selftest report and
//! stderr carries logs. Exit codes: 0 ok, 1 i/o, 2 schema, shape or argument
//! error, 3 selftest failure.

mod commands;
mod manifest;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Schema(String),
    SelftestFailed,
}

impl CliError {
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
            CliError::Schema(m) => CliError::Schema(format!("{what}: {m}")),
            other => other,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Schema(_) => 2,
            CliError::SelftestFailed => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Schema(m) => f.write_str(m),
            CliError::SelftestFailed => f.write_str("selftest failed"),
        }
    }
}

impl From<xlpool_core::Error> for CliError {
    fn from(e: xlpool_core::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Schema(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "xlpool", version, about = "Cross-layer pooled image descriptors")]
struct Cli {
    /// Worker threads for per-image work (0 = all cores).
    #[arg(long, global = true, env = "XLPOOL_JOBS", default_value_t = 0)]
    jobs: usize,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy, Default)]
pub struct NormFlags {
    /// Per-channel l2 normalization.
    #[arg(long)]
    pub l2: bool,
    /// Signed square root after l2.
    #[arg(long)]
    pub power: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pool one local/guide pair into a descriptor.
    Pool {
        #[arg(long)]
        local: PathBuf,
        #[arg(long)]
        guide: PathBuf,
        /// PCA bundle directory applied to the local layer.
        #[arg(long)]
        pca: Option<PathBuf>,
        #[command(flatten)]
        norm: NormFlags,
        /// Max over spatial units instead of sum.
        #[arg(long)]
        max: bool,
        /// Also write the sign-quantized payload as `<out stem>.trits`.
        #[arg(long)]
        quantize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a PCA model on local-layer features.
    PcaFit {
        /// Manifest whose local tensors are the training set.
        #[arg(long, conflicts_with = "input")]
        manifest: Option<PathBuf>,
        /// Local tensor files (repeatable).
        #[arg(long)]
        input: Vec<PathBuf>,
        /// Output dimension; defaults to the input dimension.
        #[arg(long = "pca-dim", conflicts_with_all = ["target_dim", "k"])]
        pca_dim: Option<usize>,
        /// Total descriptor size to aim for; requires --k.
        #[arg(long, requires = "k")]
        target_dim: Option<usize>,
        /// Guide-layer channel count used with --target-dim.
        #[arg(long, requires = "target_dim")]
        k: Option<usize>,
        #[arg(long, default_value_t = xlpool_core::postprocess::DEFAULT_MAX_PCA_SAMPLES)]
        max_samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply normalization or quantization to an existing descriptor.
    Postprocess {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        norm: NormFlags,
        #[arg(long)]
        quantize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spatial pyramid pooling of one layer, or two layers concatenated.
    Spm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        input2: Option<PathBuf>,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
        level: u8,
        #[arg(long, value_enum, default_value_t = Method::SumSqrt)]
        method: Method,
        /// l2-normalize the whole output vector.
        #[arg(long)]
        l2: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a sign-quantized gallery index from a manifest.
    Index {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        pca: Option<PathBuf>,
        #[command(flatten)]
        norm: NormFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank an index against one query pair; results go to --out as JSON.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        local: PathBuf,
        #[arg(long)]
        guide: PathBuf,
        #[arg(long)]
        k_channels: usize,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        pca: Option<PathBuf>,
        /// Pick channels per gallery entry instead of from the query.
        #[arg(long)]
        gallery_side: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Linear kernel between two directories of 1-D descriptors.
    Gram {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle checks.
    Selftest {
        /// Index file to use for the round-trip check.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Max,
    SumSqrt,
}

fn run(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::Schema(format!("cannot start {} workers: {e}", cli.jobs)))?;
    match cli.command {
        Command::Pool { local, guide, pca, norm, max, quantize, out } => {
            commands::pool(&local, &guide, pca.as_deref(), norm, max, quantize, &out)
        }
        Command::PcaFit { manifest, input, pca_dim, target_dim, k, max_samples, out } => {
            let dim = match (pca_dim, target_dim, k) {
                (Some(d), _, _) => commands::PcaDim::Fixed(d),
                (None, Some(t), Some(k)) => commands::PcaDim::Target { total: t, channels: k },
                _ => commands::PcaDim::Full,
            };
            commands::pca_fit(manifest.as_deref(), &input, dim, max_samples, &out)
        }
        Command::Postprocess { input, norm, quantize, out } => commands::postprocess(&input, norm, quantize, &out),
        Command::Spm { input, input2, level, method, l2, out } => {
            commands::spm(&input, input2.as_deref(), level, method, l2, &out)
        }
        Command::Index { pairs, pca, norm, out } => commands::index(&pairs, pca.as_deref(), norm, &out),
        Command::Query { index, local, guide, k_channels, top, pca, gallery_side, out } => {
            commands::query(&index, &local, &guide, k_channels, top, pca.as_deref(), gallery_side, &out)
        }
        Command::Gram { a, b, out } => commands::gram(&a, &b, &out),
        Command::Selftest { fixture } => commands::selftest(cli.seed, fixture.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xlpool: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
