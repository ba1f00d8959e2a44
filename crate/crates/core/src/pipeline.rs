//! End-to-end pruning runs: the prompt-aware strategy and its baselines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedding::{pool, EmbeddingMatrix, Pooling};
use crate::error::{PruneError, Result};
use crate::rng::SplitMix64;
use crate::selection::{
    compute_budget, greedy_diversity_extend, relevance_scores, split_budget, top_k_select, BudgetSplit,
    Provenance, SelectionState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Relevance core set extended by greedy diversity picks.
    Zspa,
    /// Pure greedy diversity, prompt ignored.
    Divprune,
    /// Relevance top-k only.
    #[serde(rename = "relevance")]
    RelevanceOnly,
    /// Uniform sample without replacement.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Zspa, Strategy::Divprune, Strategy::RelevanceOnly, Strategy::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Zspa => "zspa",
            Strategy::Divprune => "divprune",
            Strategy::RelevanceOnly => "relevance",
            Strategy::Random => "random",
        }
    }

    pub fn needs_prompt(self) -> bool {
        matches!(self, Strategy::Zspa | Strategy::RelevanceOnly)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "zspa" => Ok(Strategy::Zspa),
            "divprune" => Ok(Strategy::Divprune),
            "relevance" | "relevance_only" => Ok(Strategy::RelevanceOnly),
            "random" => Ok(Strategy::Random),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// How many tokens to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSpec {
    /// Fraction of tokens to drop, in `[0, 1)`.
    PruneRate(f64),
    /// Absolute token count, at least 1.
    Budget(usize),
}

impl BudgetSpec {
    /// Budget for `n` visual tokens, capped at `n`.
    pub fn resolve(self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(PruneError::EmptyVisual);
        }
        match self {
            BudgetSpec::PruneRate(rate) => compute_budget(n, rate),
            BudgetSpec::Budget(0) => Err(PruneError::BudgetZero),
            BudgetSpec::Budget(b) => Ok(b.min(n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub strategy: Strategy,
    pub budget: BudgetSpec,
    /// Share of the budget given to the relevance core (zspa only).
    pub ratio: f64,
    pub pooling: Pooling,
    /// Seed for the random baseline.
    pub seed: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Zspa,
            budget: BudgetSpec::PruneRate(0.9),
            ratio: 0.5,
            pooling: Pooling::Mean,
            seed: 0,
        }
    }
}

impl PruneConfig {
    pub fn zspa(budget: BudgetSpec, ratio: f64, pooling: Pooling) -> Self {
        Self {
            strategy: Strategy::Zspa,
            budget,
            ratio,
            pooling,
            ..Self::default()
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Wall-clock milliseconds per stage. Informational only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub pooling_ms: f64,
    pub scoring_ms: f64,
    pub core_ms: f64,
    pub diversity_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    /// Core tokens by descending relevance, then diversity tokens in pick
    /// order (or sampled tokens in draw order).
    pub kept_indices: Vec<usize>,
    pub provenance: Vec<Provenance>,
    /// One score per visual token; absent for prompt-free strategies.
    pub relevance_scores: Option<Vec<f64>>,
    /// Core/diversity split; absent for the random baseline.
    pub split: Option<BudgetSplit>,
    pub budget: usize,
    pub token_count: usize,
    pub config: PruneConfig,
    pub timings: StageTimings,
}

impl PruneResult {
    pub fn count(&self, which: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == which).count()
    }

    pub fn core_indices(&self) -> Vec<usize> {
        self.indices_with(Provenance::Core)
    }

    pub fn diversity_indices(&self) -> Vec<usize> {
        self.indices_with(Provenance::Diversity)
    }

    fn indices_with(&self, which: Provenance) -> Vec<usize> {
        self.kept_indices
            .iter()
            .zip(&self.provenance)
            .filter(|(_, &p)| p == which)
            .map(|(&i, _)| i)
            .collect()
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn identity_result(n: usize, config: PruneConfig, scores: Option<Vec<f64>>, timings: StageTimings) -> PruneResult {
    PruneResult {
        kept_indices: (0..n).collect(),
        provenance: vec![Provenance::Core; n],
        relevance_scores: scores,
        split: Some(BudgetSplit {
            budget: n,
            core_count: n,
            diversity_count: 0,
            ratio: config.ratio,
        }),
        budget: n,
        token_count: n,
        config,
        timings,
    }
}

/// Runs the strategy named in `config`. `prompt` may be `None` for the
/// prompt-free strategies.
pub fn prune(prompt: Option<&EmbeddingMatrix>, visual: &EmbeddingMatrix, config: &PruneConfig) -> Result<PruneResult> {
    match config.strategy {
        Strategy::Zspa | Strategy::RelevanceOnly => {
            let prompt = prompt.ok_or(PruneError::MissingPrompt(config.strategy.as_str()))?;
            let mut cfg = *config;
            if cfg.strategy == Strategy::RelevanceOnly {
                cfg.ratio = 1.0;
            }
            let mut result = zspa_prune(prompt, visual, &cfg)?;
            result.config = *config;
            Ok(result)
        }
        Strategy::Divprune => {
            let budget = config.budget.resolve(visual.rows())?;
            let mut result = baseline_divprune(visual, budget)?;
            result.config = *config;
            Ok(result)
        }
        Strategy::Random => {
            let budget = config.budget.resolve(visual.rows())?;
            let mut result = baseline_random(visual, budget, config.seed)?;
            result.config = *config;
            Ok(result)
        }
    }
}

/// Prompt-aware pruning: pool the prompt, score every visual token, keep the
/// `round(ratio * budget)` most relevant as the core, then fill the rest of
/// the budget with greedy max-min diversity picks.
///
/// Runs in O(n·d) for scoring plus O(budget·n·d) for the greedy stage.
pub fn zspa_prune(prompt: &EmbeddingMatrix, visual: &EmbeddingMatrix, config: &PruneConfig) -> Result<PruneResult> {
    let total = Instant::now();
    if prompt.cols() != visual.cols() {
        return Err(PruneError::DimensionMismatch {
            expected: prompt.cols(),
            found: visual.cols(),
        });
    }
    let n = visual.rows();
    let budget = config.budget.resolve(n)?;
    let split = split_budget(budget, config.ratio)?;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let pooled = pool(prompt, config.pooling)?;
    timings.pooling_ms = ms_since(t);

    let t = Instant::now();
    let scores = relevance_scores(&pooled, visual)?;
    timings.scoring_ms = ms_since(t);

    if budget >= n {
        timings.total_ms = ms_since(total);
        return Ok(identity_result(n, *config, Some(scores.into_vec()), timings));
    }

    let t = Instant::now();
    let core = top_k_select(&scores, split.core_count)?;
    let state = SelectionState::with_core(n, &core)?;
    timings.core_ms = ms_since(t);

    let t = Instant::now();
    let state = greedy_diversity_extend(visual, state, split.diversity_count)?;
    timings.diversity_ms = ms_since(t);

    let (kept_indices, provenance) = state.into_parts();
    timings.total_ms = ms_since(total);
    Ok(PruneResult {
        kept_indices,
        provenance,
        relevance_scores: Some(scores.into_vec()),
        split: Some(split),
        budget,
        token_count: n,
        config: *config,
        timings,
    })
}

/// Pure diversity baseline: centroid seed then `budget - 1` greedy picks.
pub fn baseline_divprune(visual: &EmbeddingMatrix, budget: usize) -> Result<PruneResult> {
    let total = Instant::now();
    let n = visual.rows();
    let budget = BudgetSpec::Budget(budget).resolve(n)?;
    let config = PruneConfig {
        strategy: Strategy::Divprune,
        budget: BudgetSpec::Budget(budget),
        ratio: 0.0,
        ..PruneConfig::default()
    };
    let mut timings = StageTimings::default();
    if budget >= n {
        timings.total_ms = ms_since(total);
        return Ok(identity_result(n, config, None, timings));
    }
    let t = Instant::now();
    let state = greedy_diversity_extend(visual, SelectionState::new(n), budget)?;
    timings.diversity_ms = ms_since(t);
    let (kept_indices, provenance) = state.into_parts();
    timings.total_ms = ms_since(total);
    Ok(PruneResult {
        kept_indices,
        provenance,
        relevance_scores: None,
        split: Some(split_budget(budget, 0.0)?),
        budget,
        token_count: n,
        config,
        timings,
    })
}

/// Relevance-only baseline: the top `budget` tokens by relevance.
pub fn baseline_relevance_only(
    prompt: &EmbeddingMatrix,
    visual: &EmbeddingMatrix,
    budget: usize,
    pooling: Pooling,
) -> Result<PruneResult> {
    let config = PruneConfig::zspa(BudgetSpec::Budget(budget), 1.0, pooling).with_strategy(Strategy::RelevanceOnly);
    prune(Some(prompt), visual, &config)
}

/// Uniform random baseline drawn with [`SplitMix64`](crate::rng::SplitMix64).
pub fn baseline_random(visual: &EmbeddingMatrix, budget: usize, seed: u64) -> Result<PruneResult> {
    let total = Instant::now();
    let n = visual.rows();
    let budget = BudgetSpec::Budget(budget).resolve(n)?;
    let config = PruneConfig {
        strategy: Strategy::Random,
        budget: BudgetSpec::Budget(budget),
        seed,
        ..PruneConfig::default()
    };
    let mut timings = StageTimings::default();
    if budget >= n {
        timings.total_ms = ms_since(total);
        return Ok(identity_result(n, config, None, timings));
    }
    let kept_indices = SplitMix64::new(seed).sample_indices(n, budget);
    timings.total_ms = ms_since(total);
    Ok(PruneResult {
        provenance: vec![Provenance::Sampled; kept_indices.len()],
        kept_indices,
        relevance_scores: None,
        split: None,
        budget,
        token_count: n,
        config,
        timings,
    })
}
