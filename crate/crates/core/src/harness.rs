//! Planted-cluster scenarios, proxy quality metrics and the ratio sweep.
//!
//! A scenario has one prompt-aligned cluster (the ground-truth relevant
//! tokens) and several decoy clusters whose centres sit at a fixed cosine
//! to the relevant centre. Relevance is judged by cluster membership, never
//! by a cosine threshold, so recall does not depend on the scorer under test.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_from_parts, dot, mean_pool, sq_norm, EmbeddingMatrix, Pooling};
use crate::error::{PruneError, Result};
use crate::par;
use crate::pipeline::{prune, BudgetSpec, PruneConfig, PruneResult, Strategy};
use crate::rng::SplitMix64;
use crate::selection::relevance_scores;

/// Knobs for [`generate_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Visual tokens.
    pub n: usize,
    /// Embedding dimension.
    pub d: usize,
    /// Total clusters including the relevant one.
    pub clusters: usize,
    /// Fraction of visual tokens in the relevant cluster.
    pub relevant_fraction: f64,
    /// Expected Euclidean norm of the per-token noise.
    pub sigma: f64,
    /// Cosine between each decoy centre and the relevant centre.
    pub decoy_similarity: f64,
    /// Prompt tokens sampled around the relevant centre.
    pub prompt_tokens: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n: 100,
            d: 32,
            clusters: 5,
            relevant_fraction: 0.2,
            sigma: 0.3,
            decoy_similarity: 0.8,
            prompt_tokens: 8,
        }
    }
}

impl ScenarioParams {
    fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(PruneError::DegenerateParams(msg.to_string()));
        if self.n < 2 {
            return fail("n must be at least 2");
        }
        if self.d < 2 {
            return fail("d must be at least 2");
        }
        if self.clusters < 2 {
            return fail("need the relevant cluster plus at least one decoy");
        }
        if !(self.relevant_fraction > 0.0 && self.relevant_fraction < 1.0) {
            return fail("relevant fraction must lie strictly between 0 and 1");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail("sigma must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.decoy_similarity) {
            return fail("decoy similarity must lie in [0, 1)");
        }
        if self.prompt_tokens == 0 {
            return fail("need at least one prompt token");
        }
        Ok(())
    }

    /// Number of relevant tokens, always in `1..n`.
    pub fn relevant_count(&self) -> usize {
        ((self.relevant_fraction * self.n as f64).round() as usize).clamp(1, self.n - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub seed: u64,
    pub prompt: EmbeddingMatrix,
    pub visual: EmbeddingMatrix,
    pub relevant_mask: Vec<bool>,
    pub relevant_center: Vec<f32>,
    /// Mean-pooled relevance of every visual token; the yardstick for
    /// `relevance_coverage` regardless of the strategy being scored.
    pub reference_scores: Vec<f64>,
}

impl Scenario {
    pub fn relevant_indices(&self) -> Vec<usize> {
        self.relevant_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| r.then_some(i))
            .collect()
    }
}

fn gaussian_vec(rng: &mut SplitMix64, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.next_gaussian()).collect()
}

fn normalize(v: &mut [f64]) {
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if len > 0.0 {
        v.iter_mut().for_each(|x| *x /= len);
    }
}

fn random_unit(rng: &mut SplitMix64, d: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, d);
        if v.iter().any(|&x| x != 0.0) {
            normalize(&mut v);
            return v;
        }
    }
}

/// Noisy sample around `center`, rescaled by a magnitude in `[0.5, 2)`.
fn sample_token(rng: &mut SplitMix64, center: &[f64], sigma: f64) -> Vec<f32> {
    let per_coord = sigma / (center.len() as f64).sqrt();
    let noisy: Vec<f64> = center.iter().map(|&c| c + per_coord * rng.next_gaussian()).collect();
    let magnitude = 0.5 + 1.5 * rng.next_f64();
    noisy.iter().map(|&x| (x * magnitude) as f32).collect()
}

/// Draws a planted-cluster scenario. Deterministic in `(params, seed)`.
pub fn generate_scenario(params: &ScenarioParams, seed: u64) -> Result<Scenario> {
    params.validate()?;
    let (n, d) = (params.n, params.d);
    let mut rng = SplitMix64::new(seed);

    let relevant = random_unit(&mut rng, d);
    let mut centers = vec![relevant.clone()];
    let a = params.decoy_similarity;
    let b = (1.0 - a * a).sqrt();
    for _ in 1..params.clusters {
        // Component orthogonal to the relevant centre, then mix.
        let mut u = random_unit(&mut rng, d);
        let proj: f64 = u.iter().zip(&relevant).map(|(x, y)| x * y).sum();
        u.iter_mut().zip(&relevant).for_each(|(x, y)| *x -= proj * y);
        normalize(&mut u);
        centers.push(relevant.iter().zip(&u).map(|(r, o)| a * r + b * o).collect());
    }

    let relevant_count = params.relevant_count();
    let decoys = params.clusters - 1;
    let mut labels: Vec<usize> = (0..n)
        .map(|i| if i < relevant_count { 0 } else { 1 + (i - relevant_count) % decoys })
        .collect();
    rng.shuffle(&mut labels);

    let mut data = Vec::with_capacity(n * d);
    for &label in &labels {
        data.extend(sample_token(&mut rng, &centers[label], params.sigma));
    }
    let visual = EmbeddingMatrix::new(n, d, data)?;

    let mut prompt_data = Vec::with_capacity(params.prompt_tokens * d);
    for _ in 0..params.prompt_tokens {
        prompt_data.extend(sample_token(&mut rng, &relevant, params.sigma));
    }
    let prompt = EmbeddingMatrix::new(params.prompt_tokens, d, prompt_data)?;

    let reference_scores = relevance_scores(&mean_pool(&prompt)?, &visual)?.into_vec();
    Ok(Scenario {
        params: *params,
        seed,
        prompt,
        visual,
        relevant_mask: labels.iter().map(|&l| l == 0).collect(),
        relevant_center: relevant.iter().map(|&x| x as f32).collect(),
        reference_scores,
    })
}

/// Proxy quality of one kept set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean reference relevance over kept tokens.
    pub relevance_coverage: f64,
    /// Smallest `1 - cosine` over kept pairs; 2 when fewer than two tokens.
    pub dispersion: f64,
    /// `|kept ∩ relevant| / min(|kept|, |relevant|)`.
    pub oracle_recall: f64,
    pub runtime_ms: f64,
}

/// Metrics for an arbitrary kept index list.
pub fn evaluate_indices(kept: &[usize], scenario: &Scenario) -> Metrics {
    let visual = &scenario.visual;
    let coverage = if kept.is_empty() {
        0.0
    } else {
        kept.iter().map(|&i| scenario.reference_scores[i]).sum::<f64>() / kept.len() as f64
    };

    let norms: Vec<f64> = kept.iter().map(|&i| sq_norm(visual.row(i))).collect();
    let mut dispersion = 2.0f64;
    for a in 0..kept.len() {
        for b in a + 1..kept.len() {
            let cos = cosine_from_parts(dot(visual.row(kept[a]), visual.row(kept[b])), norms[a], norms[b]);
            dispersion = dispersion.min(1.0 - cos);
        }
    }

    let relevant_total = scenario.relevant_mask.iter().filter(|&&r| r).count();
    let hits = kept.iter().filter(|&&i| scenario.relevant_mask[i]).count();
    let denom = kept.len().min(relevant_total);
    Metrics {
        relevance_coverage: coverage,
        dispersion: dispersion.clamp(0.0, 2.0),
        oracle_recall: if denom == 0 { 0.0 } else { hits as f64 / denom as f64 },
        runtime_ms: 0.0,
    }
}

pub fn evaluate(result: &PruneResult, scenario: &Scenario) -> Metrics {
    Metrics {
        runtime_ms: result.timings.total_ms,
        ..evaluate_indices(&result.kept_indices, scenario)
    }
}

/// Ratios `min, min+step, ..., max`, rounded to 1e-9 so that `0.1 * 3`
/// prints as `0.3`.
pub fn rho_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "step must be positive");
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| ((min + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub strategies: Vec<Strategy>,
    /// Only the zspa strategy is swept over ratios.
    pub rhos: Vec<f64>,
    pub prune_rates: Vec<f64>,
    pub pooling: Pooling,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::Zspa],
            rhos: rho_grid(0.1, 0.9, 0.1),
            prune_rates: vec![0.9],
            pooling: Pooling::Mean,
        }
    }
}

/// One averaged cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: Strategy,
    /// `None` for strategies without a ratio knob.
    pub rho: Option<f64>,
    pub prune_rate: f64,
    pub relevance_coverage: f64,
    pub dispersion: f64,
    pub oracle_recall: f64,
    pub runtime_ms: f64,
    /// Scenarios averaged into this row.
    pub runs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: [&str; 7] = [
    "strategy",
    "rho",
    "prune_rate",
    "relevance_coverage",
    "dispersion",
    "oracle_recall",
    "runtime_ms",
];

impl Report {
    pub fn row(&self, strategy: Strategy, rho: Option<f64>, prune_rate: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.rho == rho && r.prune_rate == prune_rate)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.strategy.to_string(),
                r.rho.map(|v| v.to_string()).unwrap_or_default(),
                r.prune_rate.to_string(),
                r.relevance_coverage.to_string(),
                r.dispersion.to_string(),
                r.oracle_recall.to_string(),
                r.runtime_ms.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>11}",
            "strategy", "rho", "prune_rate", "coverage", "dispersion", "recall", "runtime_ms"
        );
        for r in &self.rows {
            let rho = r.rho.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>10.3} {:>10.4} {:>10.4} {:>10.4} {:>11.3}",
                r.strategy, rho, r.prune_rate, r.relevance_coverage, r.dispersion, r.oracle_recall, r.runtime_ms
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    strategy: Strategy,
    rho: Option<f64>,
    prune_rate: f64,
}

/// Runs every (strategy, ratio, prune rate) cell on every scenario and
/// averages the metrics per cell. Rows follow the order of `config`.
pub fn sweep(scenarios: &[Scenario], config: &SweepConfig) -> Result<Report> {
    let mut cells = Vec::new();
    for &strategy in &config.strategies {
        let rhos: Vec<Option<f64>> = if strategy == Strategy::Zspa {
            config.rhos.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for rho in rhos {
            for &prune_rate in &config.prune_rates {
                cells.push(Cell { strategy, rho, prune_rate });
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..scenarios.len()).map(move |s| (c, s)))
        .collect();
    let outcomes: Vec<Result<Metrics>> = par::map_slice(&jobs, |&(c, s)| {
        let cell = cells[c];
        let scenario = &scenarios[s];
        let cfg = PruneConfig {
            strategy: cell.strategy,
            budget: BudgetSpec::PruneRate(cell.prune_rate),
            ratio: cell.rho.unwrap_or(1.0),
            pooling: config.pooling,
            seed: scenario.seed,
        };
        let result = prune(Some(&scenario.prompt), &scenario.visual, &cfg)?;
        Ok(evaluate(&result, scenario))
    });

    let runs = scenarios.len();
    let mut rows = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let mut sum = [0.0f64; 4];
        for outcome in &outcomes[c * runs..(c + 1) * runs] {
            let m = outcome.clone()?;
            sum[0] += m.relevance_coverage;
            sum[1] += m.dispersion;
            sum[2] += m.oracle_recall;
            sum[3] += m.runtime_ms;
        }
        let div = runs.max(1) as f64;
        rows.push(ReportRow {
            strategy: cell.strategy,
            rho: cell.rho,
            prune_rate: cell.prune_rate,
            relevance_coverage: sum[0] / div,
            dispersion: sum[1] / div,
            oracle_recall: sum[2] / div,
            runtime_ms: sum[3] / div,
            runs,
        });
    }
    Ok(Report { rows })
}

/// Scenarios for seeds `base..base + count`.
pub fn scenario_batch(params: &ScenarioParams, base_seed: u64, count: usize) -> Result<Vec<Scenario>> {
    let seeds: Vec<u64> = (0..count as u64).map(|i| base_seed.wrapping_add(i)).collect();
    par::map_slice(&seeds, |&s| generate_scenario(params, s)).into_iter().collect()
}
