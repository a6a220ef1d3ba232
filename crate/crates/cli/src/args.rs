use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use dataplan_core::cost::CostBasis;

#[derive(Debug, Parser)]
#[command(
    name = "dataplan",
    version,
    about = "Fit utility-vs-compute scaling laws for data sources and plan acquisition budgets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one log-linear scaling law per source.
    Fit(FitArgs),
    /// Rank sources by predicted delta at a compute budget.
    Rank(RankArgs),
    /// Report where each pair of fitted laws crosses.
    Crossover(CrossoverArgs),
    /// Split a compute budget across sources.
    Allocate(AllocateArgs),
    /// Price a data source in FLOPs.
    Cost(CostArgs),
    /// Distinct n-gram ratio and n-gram entropy of a corpus.
    Diversity(DiversityArgs),
    /// Write a synthetic manifest drawn from known scaling laws.
    Simulate(SimulateArgs),
}

fn basis_parser() -> impl TypedValueParser<Value = CostBasis> {
    PossibleValuesParser::new(["curation-only", "total"])
        .map(|s| s.parse::<CostBasis>().expect("restricted to known values"))
}

/// Floating-point flag accepting scientific notation; must be finite.
fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_real(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {s}"))
    }
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    let v = parse_real(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got {s}"))
    }
}

/// Integer flag that also accepts scientific notation such as `7e9`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    let v = parse_real(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("'{s}' is not a non-negative integer"))
    }
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// Experiment manifest (JSON); `-` reads standard input.
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Only use tasks whose id matches this glob; repeatable.
    #[arg(long = "tasks", value_name = "GLOB")]
    pub tasks: Vec<String>,
    /// Cost basis for the compute axis.
    #[arg(long, default_value = "total", value_parser = basis_parser())]
    pub basis: CostBasis,
    /// Drop each source's N smallest-compute points before fitting.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub drop_smallest: usize,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the CSV here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Also render points and fitted laws as an SVG plot.
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: ManifestArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub input: ManifestArgs,
    /// Compute budget in FLOPs.
    #[arg(long, value_name = "FLOPS", value_parser = parse_positive)]
    pub budget: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CrossoverArgs {
    #[command(flatten)]
    pub input: ManifestArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub input: ManifestArgs,
    /// Total compute to distribute, in FLOPs.
    #[arg(long, value_name = "FLOPS", value_parser = parse_positive)]
    pub c_max: f64,
    /// Also search the budget grid exhaustively and report the utility gap.
    #[arg(long)]
    pub with_oracle: bool,
    /// Grid steps per unit budget for the oracle.
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub resolution: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Tinygsm,
    TinygsmMind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Mbf,
    Synthetic,
    Rephrase,
    ZeroCost,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "kind", "zero_cost"])))]
#[command(group(ArgGroup::new("size").required(true).args(["steps", "tokens"])))]
pub struct CostArgs {
    /// Closed-form math-domain dataset.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Source kind, as in the manifest `kind` field.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Shorthand for `--kind zero-cost`.
    #[arg(long)]
    pub zero_cost: bool,
    #[arg(long, value_name = "K", value_parser = parse_non_negative, conflicts_with = "preset")]
    pub expansion_factor: Option<f64>,
    #[arg(long, value_name = "N", value_parser = parse_count, conflicts_with = "preset")]
    pub generator_params: Option<u64>,
    #[arg(long, value_name = "FLOPS", value_parser = parse_non_negative, conflicts_with = "preset")]
    pub annotator_per_token_flops: Option<f64>,
    #[arg(long, value_name = "FLOPS", value_parser = parse_non_negative, conflicts_with = "preset")]
    pub annotator_training_flops: Option<f64>,
    #[arg(long, value_name = "R", value_parser = parse_real, conflicts_with = "preset")]
    pub mbf_recall: Option<f64>,
    /// Parameters of the model being annealed.
    #[arg(long, value_name = "N", value_parser = parse_count, default_value = "7e9")]
    pub param_count: u64,
    #[arg(long, value_name = "N", default_value_t = 256)]
    pub batch_size: u64,
    #[arg(long, value_name = "N", default_value_t = 8192)]
    pub sequence_length: u64,
    #[arg(long, value_name = "R", value_parser = parse_real, default_value = "0.1")]
    pub upsample_ratio: f64,
    #[arg(long, value_name = "E", value_parser = parse_real, default_value = "1")]
    pub epochs: f64,
    /// Annealing length in optimizer steps.
    #[arg(long, value_name = "N", value_parser = parse_count)]
    pub steps: Option<u64>,
    /// Curated tokens drawn from the source (its upsampled share of the run).
    #[arg(long, value_name = "T", value_parser = parse_non_negative)]
    pub tokens: Option<f64>,
    #[arg(long, default_value = "total", value_parser = basis_parser())]
    pub basis: CostBasis,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusFormat {
    /// UTF-8 text, one document per line, whitespace-separated tokens.
    Text,
    /// Per document: u32 LE token count, then that many u32 LE token ids.
    Binary,
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    /// Corpus file; `-` reads standard input.
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Largest n-gram order.
    #[arg(long, value_name = "N", default_value_t = 4)]
    pub n_max: usize,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Text)]
    pub format: CorpusFormat,
    /// Keep n-grams from spanning documents.
    #[arg(long)]
    pub per_document: bool,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    /// Two sources whose ranking reverses inside the steps grid.
    RankFlip,
    /// Sources with random intercepts and slopes.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    InverseSqrt,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ScenarioArg::RankFlip)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the Gaussian noise on every delta and on the
    /// baseline seeds.
    #[arg(long, value_name = "SIGMA", value_parser = parse_non_negative, default_value = "0")]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Constant)]
    pub noise_schedule: ScheduleArg,
    /// Source count for the random scenario.
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub sources: usize,
    /// Basis in which the ground-truth laws are expressed.
    #[arg(long, default_value = "total", value_parser = basis_parser())]
    pub basis: CostBasis,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Write the ground-truth parameters as CSV.
    #[arg(long, value_name = "PATH")]
    pub truth_out: Option<PathBuf>,
}
