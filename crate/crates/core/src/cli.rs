//! Command-line front end: `prune`, `sweep` and `gen`.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::embedding::Pooling;
use crate::harness::{generate_scenario, rho_grid, scenario_batch, sweep, ScenarioParams, SweepConfig};
use crate::io::{read_emb, write_emb};
use crate::pipeline::{prune, BudgetSpec, PruneConfig, PruneResult, StageTimings, Strategy};
use crate::rng::GENERATOR_ID;
use crate::selection::Provenance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Version of the `prune` JSON document layout.
pub const OUTPUT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "tokenprune", version, about = "Prompt-aware visual token pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Prune one visual embedding matrix.
    Prune(PruneArgs),
    /// Sweep strategies and ratios over synthetic scenarios.
    Sweep(SweepArgs),
    /// Write one synthetic scenario to disk.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ResultFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatrixFormat {
    Emb,
    Csv,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("size").required(true).args(["prune_rate", "budget"])))]
struct PruneArgs {
    /// Visual token embeddings (.emb or .csv).
    #[arg(long)]
    visual: PathBuf,
    /// Prompt token embeddings; required by zspa and relevance.
    #[arg(long)]
    prompt: Option<PathBuf>,
    #[arg(long, default_value = "zspa", value_parser = ["zspa", "divprune", "relevance", "random"])]
    strategy: String,
    /// Fraction of visual tokens to drop, in [0, 1).
    #[arg(long)]
    prune_rate: Option<f64>,
    /// Number of visual tokens to keep.
    #[arg(long)]
    budget: Option<usize>,
    /// Share of the budget given to the relevance core.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    #[arg(long, default_value = "mean", value_parser = ["mean", "max", "none"])]
    pooling: String,
    /// Seed for the random strategy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ResultFormat::Json)]
    format: ResultFormat,
    /// Include per-stage wall-clock timings in JSON output.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 0.2)]
    relevant_fraction: f64,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long, default_value_t = 0.8)]
    decoy_similarity: f64,
    #[arg(long, default_value_t = 8)]
    prompt_tokens: usize,
}

impl ScenarioArgs {
    fn params(&self) -> ScenarioParams {
        ScenarioParams {
            n: self.n,
            d: self.d,
            clusters: self.clusters,
            relevant_fraction: self.relevant_fraction,
            sigma: self.sigma,
            decoy_similarity: self.decoy_similarity,
            prompt_tokens: self.prompt_tokens,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of scenario seeds averaged per cell.
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    /// First scenario seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "zspa,divprune,relevance,random",
          value_parser = ["zspa", "divprune", "relevance", "random"])]
    strategies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.9")]
    prune_rates: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    rho_min: f64,
    #[arg(long, default_value_t = 0.9)]
    rho_max: f64,
    #[arg(long, default_value_t = 0.1)]
    rho_step: f64,
    #[arg(long, default_value = "mean", value_parser = ["mean", "max", "none"])]
    pooling: String,
    /// Write the CSV report here; a table still goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving visual.*, prompt.* and relevant_mask.txt.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = MatrixFormat::Emb)]
    format: MatrixFormat,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl<E: std::fmt::Display> From<E> for CliError
where
    E: Into<Box<dyn std::error::Error>>,
{
    fn from(e: E) -> Self {
        CliError::Data(e.to_string())
    }
}

/// JSON document written by `prune`.
#[derive(Debug, Serialize)]
pub struct PruneOutput<'a> {
    pub format_version: u32,
    pub strategy: Strategy,
    pub config: &'a PruneConfig,
    pub token_count: usize,
    pub budget: usize,
    pub core_count: usize,
    pub diversity_count: usize,
    pub kept_indices: &'a [usize],
    pub provenance: &'a [Provenance],
    pub scores: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<StageTimings>,
}

impl<'a> PruneOutput<'a> {
    pub fn new(result: &'a PruneResult, with_timings: bool) -> Self {
        Self {
            format_version: OUTPUT_FORMAT_VERSION,
            strategy: result.config.strategy,
            config: &result.config,
            token_count: result.token_count,
            budget: result.budget,
            core_count: result.count(Provenance::Core),
            diversity_count: result.count(Provenance::Diversity),
            kept_indices: &result.kept_indices,
            provenance: &result.provenance,
            scores: result.relevance_scores.as_deref(),
            generator: (result.config.strategy == Strategy::Random).then_some(GENERATOR_ID),
            timings_ms: with_timings.then_some(result.timings),
        }
    }
}

/// Renders a prune result as pretty JSON with a trailing newline.
pub fn result_json(result: &PruneResult, with_timings: bool) -> String {
    let mut s = serde_json::to_string_pretty(&PruneOutput::new(result, with_timings)).expect("serialisable");
    s.push('\n');
    s
}

/// Renders a prune result as `rank,index,provenance,score` rows.
pub fn result_csv(result: &PruneResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "index", "provenance", "score"]).expect("in-memory write");
    for (rank, (&idx, prov)) in result.kept_indices.iter().zip(&result.provenance).enumerate() {
        let score = result
            .relevance_scores
            .as_ref()
            .map(|s| s[idx].to_string())
            .unwrap_or_default();
        w.write_record([rank.to_string(), idx.to_string(), prov.as_str().to_string(), score])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn parse_strategy(s: &str) -> Strategy {
    s.parse().expect("restricted by clap")
}

fn parse_pooling(s: &str) -> Pooling {
    s.parse().expect("restricted by clap")
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run_prune(args: PruneArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let strategy = parse_strategy(&args.strategy);
    if strategy.needs_prompt() && args.prompt.is_none() {
        return Err(CliError::Usage(format!("--strategy {strategy} requires --prompt")));
    }
    let budget = match (args.prune_rate, args.budget) {
        (Some(rate), None) => BudgetSpec::PruneRate(rate),
        (None, Some(b)) => BudgetSpec::Budget(b),
        _ => unreachable!("clap enforces exactly one of --prune-rate/--budget"),
    };
    let config = PruneConfig {
        strategy,
        budget,
        ratio: args.ratio,
        pooling: parse_pooling(&args.pooling),
        seed: args.seed,
    };
    let visual = read_emb(&args.visual)?;
    let prompt = match (&args.prompt, strategy.needs_prompt()) {
        (Some(path), true) => Some(read_emb(path)?),
        _ => None,
    };
    let result = prune(prompt.as_ref(), &visual, &config)?;
    let text = match args.format {
        ResultFormat::Json => result_json(&result, args.timings),
        ResultFormat::Csv => result_csv(&result),
    };
    emit(args.out.as_deref(), &text, stdout)?;
    let t = result.timings;
    writeln!(
        stderr,
        "kept {} of {} tokens in {:.3} ms (pool {:.3}, score {:.3}, core {:.3}, diversity {:.3})",
        result.kept_indices.len(),
        result.token_count,
        t.total_ms,
        t.pooling_ms,
        t.scoring_ms,
        t.core_ms,
        t.diversity_ms
    )?;
    Ok(())
}

fn run_sweep(args: SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    if args.rho_step.is_nan() || args.rho_step <= 0.0 || args.rho_min > args.rho_max {
        return Err(CliError::Usage("rho grid needs rho-min <= rho-max and a positive step".into()));
    }
    let scenarios = scenario_batch(&args.scenario.params(), args.seed, args.seeds)?;
    let config = SweepConfig {
        strategies: args.strategies.iter().map(|s| parse_strategy(s)).collect(),
        rhos: rho_grid(args.rho_min, args.rho_max, args.rho_step),
        prune_rates: args.prune_rates,
        pooling: parse_pooling(&args.pooling),
    };
    let report = sweep(&scenarios, &config)?;
    match (&args.out, args.format) {
        (Some(path), _) => {
            std::fs::write(path, report.to_csv())?;
            stdout.write_all(report.to_table().as_bytes())?;
        }
        (None, ReportFormat::Csv) => stdout.write_all(report.to_csv().as_bytes())?,
        (None, ReportFormat::Table) => stdout.write_all(report.to_table().as_bytes())?,
    }
    Ok(())
}

fn run_gen(args: GenArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scenario = generate_scenario(&args.scenario.params(), args.seed)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let (visual_path, prompt_path) = match args.format {
        MatrixFormat::Emb => (args.out_dir.join("visual.emb"), args.out_dir.join("prompt.emb")),
        MatrixFormat::Csv => (args.out_dir.join("visual.csv"), args.out_dir.join("prompt.csv")),
    };
    match args.format {
        MatrixFormat::Emb => {
            write_emb(&scenario.visual, &visual_path)?;
            write_emb(&scenario.prompt, &prompt_path)?;
        }
        MatrixFormat::Csv => {
            std::fs::write(&visual_path, matrix_csv(&scenario.visual))?;
            std::fs::write(&prompt_path, matrix_csv(&scenario.prompt))?;
        }
    }
    let mask: String = scenario
        .relevant_mask
        .iter()
        .map(|&r| if r { "1\n" } else { "0\n" })
        .collect();
    std::fs::write(args.out_dir.join("relevant_mask.txt"), mask)?;
    writeln!(
        stdout,
        "wrote {} ({}x{}), {} ({}x{}), relevant_mask.txt ({} relevant)",
        visual_path.display(),
        scenario.visual.rows(),
        scenario.visual.cols(),
        prompt_path.display(),
        scenario.prompt.rows(),
        scenario.prompt.cols(),
        scenario.relevant_mask.iter().filter(|&&r| r).count()
    )?;
    Ok(())
}

fn matrix_csv(m: &crate::embedding::EmbeddingMatrix) -> String {
    let mut out = String::new();
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let outcome = match cli.command {
        Command::Prune(args) => run_prune(args, stdout, stderr),
        Command::Sweep(args) => run_sweep(args, stdout),
        Command::Gen(args) => run_gen(args, stdout),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let mut cmd = Cli::command();
            let _ = writeln!(stderr, "error: {msg}\n\n{}", cmd.render_usage());
            EXIT_USAGE
        }
        Err(CliError::Data(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_DATA
        }
    }
}
