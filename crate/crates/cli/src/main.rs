//! `fakemark` command-line tool.
//!
//! Exit codes: 0 success, 2 usage error, 3 invalid input or parameters,
//! 4 I/O or generator-service failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "fakemark",
    version,
    about = "Fingerprint tabular data with groups of fake tuples and trace leaked copies",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct TableArgs {
    /// Input table (CSV)
    #[arg(long)]
    pub db: PathBuf,
    /// The CSV has no header row; columns are named col0, col1, ...
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Assign sparse-priority watermarks to users and start a metadata file
    Assign {
        /// Number of users, named u000, u001, ...
        #[arg(long, conflicts_with = "user_ids", required_unless_present = "user_ids")]
        users: Option<usize>,
        /// Explicit comma-separated user ids, in priority order
        #[arg(long, value_delimiter = ',')]
        user_ids: Option<Vec<String>>,
        /// Fake tuples per group
        #[arg(long, default_value_t = 5)]
        x: usize,
        /// Base seed stored in the metadata (default generation and embedding seed)
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the fake tuple groups for a table and store them in the metadata
    Genfake {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        meta: PathBuf,
        /// Synthetic key column (name or index): excluded from matching and
        /// given fresh identifiers on fake rows
        #[arg(long)]
        key_column: Option<String>,
        /// Text-generation service; when absent the statistical mimic is used
        #[arg(long, env = "FAKEMARK_GENERATOR_ENDPOINT")]
        endpoint: Option<String>,
        /// Service timeout in seconds
        #[arg(long, env = "FAKEMARK_GENERATOR_TIMEOUT", default_value_t = 30)]
        timeout: u64,
        #[arg(long, default_value_t = 16)]
        max_retries: usize,
        /// Generation seed [default: the metadata seed]
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the updated metadata [default: overwrite --meta]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce one user's watermarked copy
    Embed {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        user: String,
        /// Placement seed [default: metadata seed XOR the user's codebook index]
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read the watermark from a (possibly attacked) copy and name suspects
    Extract {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Delete a random share of rows
    Attack {
        #[command(flatten)]
        table: TableArgs,
        /// Share of rows to delete, in [0, 1]
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form robustness predictions as CSV
    Theory {
        /// Rows in the table
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        x: usize,
        /// Watermark length [default: ceil(log2 n_u)]
        #[arg(long = "L")]
        len: Option<usize>,
        #[arg(long = "n-u", default_value_t = 50)]
        n_u: usize,
        /// Deletion ratios: start:stop:step, or a comma-separated list
        #[arg(long, default_value = "0.1:0.9:0.1")]
        p: String,
        /// Output file [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation grid and write per-trial results
    Experiment(ExperimentArgs),
    /// Embed with the combination-based comparison scheme
    BaselineEmbed {
        #[command(flatten)]
        table: TableArgs,
        /// Metadata from `assign`, used for the codebook, x and key column
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        user: String,
        /// Baseline secrets file; created on first use, reused afterwards
        #[arg(long)]
        marks: PathBuf,
        /// Secret classification key, needed when --marks does not exist yet
        #[arg(long, env = "FAKEMARK_BASELINE_KEY", hide_env_values = true)]
        key: Option<String>,
        /// Seed for generating the baseline fakes [default: the metadata seed]
        #[arg(long)]
        fake_seed: Option<u64>,
        /// Anchor selection seed [default: metadata seed XOR the user's codebook index]
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a baseline watermark and rank suspects by Hamming distance
    BaselineExtract {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        marks: PathBuf,
        /// Seed of the coin that decides groups with no surviving evidence
        #[arg(long, default_value_t = 0)]
        coin_seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Write the bundled synthetic traffic-stop table
    Sample {
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKind,
    /// Grid file (JSON): x_values, p_values, n_u_values, trials, base_seed,
    /// key_column. Missing fields take the defaults n_u=50, x=5,
    /// p=0.1..0.9, 50 trials; transparency defaults to n_u=10,20,...,100.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Table to run on [default: the synthetic sample]
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long, requires = "db")]
    pub no_header: bool,
    /// Rows of the synthetic sample when --db is absent
    #[arg(long, default_value_t = 10_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 7)]
    pub sample_seed: u64,
    /// Overrides the grid's key column; "none" disables it
    #[arg(long)]
    pub key_column: Option<String>,
    /// Overrides the grid's base seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results CSV [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Aggregated series per (scheme, n_u, x, p) for plotting
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Robustness,
    Transparency,
    Comparison,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Human,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fakemark: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
