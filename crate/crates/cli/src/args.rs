use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "disparity-audit", about = "Locate subgroups that receive disparate outcomes")]
pub struct Cli {
    /// Worker threads (default: available parallelism). Output does not
    /// depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an audit and write the report.
    Audit(AuditArgs),
    /// Write a synthetic benchmark dataset as CSV with a schema sidecar.
    Generate(GenerateArgs),
    /// Measure location rates over a parameter sweep.
    Benchmark(BenchmarkArgs),
    /// Re-render text or DOT output from a saved JSON report.
    Render(RenderArgs),
}

#[derive(Debug, Args, Default)]
pub struct AuditArgs {
    /// CSV dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Column-role declaration (TOML). Defaults to the `<data>.schema.toml`
    /// sidecar, else roles are inferred.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// TOML config with keys named like these flags, or a saved JSON report
    /// whose resolved parameters are reused. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Outcome column when roles are inferred.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Truth-label column when roles are inferred.
    #[arg(long)]
    pub truth: Option<String>,
    /// statistical-parity or equalized-odds.
    #[arg(long)]
    pub metric: Option<String>,
    /// Comma-separated sensitive attributes (default: all).
    #[arg(long, value_delimiter = ',')]
    pub sensitive: Option<Vec<String>>,
    /// confidence or magnitude.
    #[arg(long)]
    pub rank: Option<String>,
    #[arg(long)]
    pub n_groups: Option<usize>,
    /// Master seed; falls back to DISPARITY_AUDIT_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub min_node_size: Option<usize>,
    #[arg(long)]
    pub min_leaf_size: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// bonferroni or univariate.
    #[arg(long)]
    pub multiplicity: Option<String>,
    #[arg(long)]
    pub fdr_level: Option<f64>,
    /// Dataset id recorded in the report (default: the file stem).
    #[arg(long)]
    pub dataset_id: Option<String>,
    /// JSON report path; `-` writes it to stdout instead of the text table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text report path.
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Directory for one DOT file per selected tree.
    #[arg(long)]
    pub dot_dir: Option<PathBuf>,
    /// Record the current time (or SOURCE_DATE_EPOCH) in the report.
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// dataset1 or dataset2.
    pub generator: String,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Age-interval width (dataset1).
    #[arg(long)]
    pub w: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Three comma-separated probabilities (dataset1).
    #[arg(long, value_delimiter = ',')]
    pub race_probs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub gender_probs: Option<Vec<f64>>,
    /// CSV path; the schema sidecar and ground truth are written next to
    /// it. Without it the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// TOML benchmark config.
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub rhos: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ws: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// forest or single-tree.
    #[arg(long)]
    pub engine_variant: Option<String>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// per-bound or interval-distance.
    #[arg(long)]
    pub tolerance_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV path; without it the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Saved JSON report.
    #[arg(long)]
    pub report: PathBuf,
    /// text or json.
    #[arg(long, default_value = "text")]
    pub format: String,
    /// Output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dot_dir: Option<PathBuf>,
}
