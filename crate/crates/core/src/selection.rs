//! Selection kernels: relevance scoring, top-k core selection, greedy
//! max-min diversity extension, and budget arithmetic.
//!
//! Complexity: scoring is O(n·d) (O(m·n·d) unpooled), top-k is O(n + k log k),
//! and the greedy extension is O(|selected|·|pool|·d) to initialise its
//! redundancy cache followed by O(|pool|·d) per step.

use serde::{Deserialize, Serialize};

use crate::embedding::{column_mean, cosine_from_parts, dot, sq_norm, EmbeddingMatrix, PooledPrompt};
use crate::error::{PruneError, Result};
use crate::par;

/// Cosine relevance of every visual token to the prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceScores(Vec<f64>);

impl RelevanceScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            return Err(PruneError::NonFiniteValue { row: pos, col: 0 });
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Scores every visual token against the pooled prompt.
///
/// For `Mean`/`Max` pooling the score is the cosine to the pooled vector; for
/// the unpooled prompt it is the best cosine over all prompt tokens.
pub fn relevance_scores(prompt: &PooledPrompt, visual: &EmbeddingMatrix) -> Result<RelevanceScores> {
    if prompt.dim() != visual.cols() {
        return Err(PruneError::DimensionMismatch {
            expected: prompt.dim(),
            found: visual.cols(),
        });
    }
    if visual.is_empty() {
        return Err(PruneError::EmptyVisual);
    }
    let scores = match prompt {
        PooledPrompt::Mean(v) | PooledPrompt::Max(v) => {
            let pn = sq_norm(v);
            par::map_range(visual.rows(), |j| {
                let row = visual.row(j);
                cosine_from_parts(dot(v, row), pn, sq_norm(row))
            })
        }
        PooledPrompt::Unpooled(tokens) => {
            let token_norms = tokens.row_sq_norms();
            par::map_range(visual.rows(), |j| {
                let row = visual.row(j);
                let rn = sq_norm(row);
                tokens
                    .iter_rows()
                    .zip(&token_norms)
                    .map(|(t, &tn)| cosine_from_parts(dot(t, row), tn, rn))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
        }
    };
    Ok(RelevanceScores(scores))
}

/// Indices of the `k` highest scores, highest first; ties go to the lower
/// index.
pub fn top_k_select(scores: &RelevanceScores, k: usize) -> Result<Vec<usize>> {
    let n = scores.len();
    if k > n {
        return Err(PruneError::KOutOfRange { k, n });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let s = scores.as_slice();
    let by_rank = |a: &usize, b: &usize| s[*b].total_cmp(&s[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..n).collect();
    if k < n {
        idx.select_nth_unstable_by(k - 1, by_rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by_rank);
    Ok(idx)
}

/// Why a token was kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Part of the relevance top-k.
    Core,
    /// Added by the greedy diversity extension.
    Diversity,
    /// Drawn by the random control baseline.
    Sampled,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Core => "core",
            Provenance::Diversity => "diversity",
            Provenance::Sampled => "sampled",
        }
    }
}

/// Selected tokens plus the remaining candidate pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionState {
    selected: Vec<usize>,
    provenance: Vec<Provenance>,
    in_pool: Vec<bool>,
    pool_len: usize,
}

impl SelectionState {
    /// Nothing selected, every one of the `n` tokens in the pool.
    pub fn new(n: usize) -> Self {
        Self {
            selected: Vec::new(),
            provenance: Vec::new(),
            in_pool: vec![true; n],
            pool_len: n,
        }
    }

    /// `core` selected with core provenance; everything else in the pool.
    pub fn with_core(n: usize, core: &[usize]) -> Result<Self> {
        let mut state = Self::new(n);
        for &i in core {
            state.push(i, Provenance::Core)?;
        }
        Ok(state)
    }

    /// Moves `index` from the pool to the selected list.
    pub fn push(&mut self, index: usize, provenance: Provenance) -> Result<()> {
        let n = self.in_pool.len();
        if index >= n {
            return Err(PruneError::IndexOutOfRange { index, n });
        }
        if !self.in_pool[index] {
            return Err(PruneError::DuplicateIndex(index));
        }
        self.in_pool[index] = false;
        self.pool_len -= 1;
        self.selected.push(index);
        self.provenance.push(provenance);
        Ok(())
    }

    /// Drops `index` from the candidate pool without selecting it.
    pub fn exclude(&mut self, index: usize) -> Result<()> {
        let n = self.in_pool.len();
        if index >= n {
            return Err(PruneError::IndexOutOfRange { index, n });
        }
        if self.in_pool[index] {
            self.in_pool[index] = false;
            self.pool_len -= 1;
        }
        Ok(())
    }

    pub fn token_count(&self) -> usize {
        self.in_pool.len()
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn pool_len(&self) -> usize {
        self.pool_len
    }

    pub fn in_pool(&self, index: usize) -> bool {
        self.in_pool.get(index).copied().unwrap_or(false)
    }

    /// Pool members in ascending index order.
    pub fn pool(&self) -> Vec<usize> {
        self.in_pool
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| p.then_some(i))
            .collect()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<Provenance>) {
        (self.selected, self.provenance)
    }
}

/// Token least similar to the centroid of all visual tokens; ties go to the
/// lower index. Only pool members are eligible.
pub fn centroid_seed(visual: &EmbeddingMatrix, state: &SelectionState) -> Result<usize> {
    let centroid = column_mean(visual).map_err(|_| PruneError::EmptyVisual)?;
    let cn = sq_norm(&centroid);
    let norms = visual.row_sq_norms();
    state
        .pool()
        .into_iter()
        .map(|j| (cosine_from_parts(dot(&centroid, visual.row(j)), cn, norms[j]), j))
        .reduce(|best, cur| if cur.0 < best.0 { cur } else { best })
        .map(|(_, j)| j)
        .ok_or(PruneError::PoolExhausted { steps: 1, pool: 0 })
}

/// Runs `steps` rounds of greedy max-min diversity selection.
///
/// Each round picks the pool candidate whose highest cosine to any selected
/// token is lowest (ties to the lower index). With nothing selected the first
/// pick is [`centroid_seed`]. Each candidate's running maximum is cached and
/// only compared against the newest pick.
pub fn greedy_diversity_extend(
    visual: &EmbeddingMatrix,
    mut state: SelectionState,
    steps: usize,
) -> Result<SelectionState> {
    if state.token_count() != visual.rows() {
        return Err(PruneError::DimensionMismatch {
            expected: visual.rows(),
            found: state.token_count(),
        });
    }
    if steps > state.pool_len() {
        return Err(PruneError::PoolExhausted {
            steps,
            pool: state.pool_len(),
        });
    }
    if steps == 0 {
        return Ok(state);
    }

    let mut remaining = steps;
    if state.selected().is_empty() {
        let seed = centroid_seed(visual, &state)?;
        state.push(seed, Provenance::Diversity)?;
        remaining -= 1;
    }
    if remaining == 0 {
        return Ok(state);
    }

    let norms = visual.row_sq_norms();
    let candidates = state.pool();
    let selected = state.selected().to_vec();
    let mut redundancy: Vec<f64> = par::map_slice(&candidates, |&c| {
        let row = visual.row(c);
        selected
            .iter()
            .map(|&s| cosine_from_parts(dot(row, visual.row(s)), norms[c], norms[s]))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let mut alive = vec![true; candidates.len()];

    for step in 0..remaining {
        let mut best: Option<usize> = None;
        for (slot, (&r, &live)) in redundancy.iter().zip(&alive).enumerate() {
            if live && best.is_none_or(|b| r < redundancy[b]) {
                best = Some(slot);
            }
        }
        let slot = best.expect("pool size checked above");
        alive[slot] = false;
        let pick = candidates[slot];
        state.push(pick, Provenance::Diversity)?;

        if step + 1 < remaining {
            let pick_row = visual.row(pick);
            let pick_norm = norms[pick];
            par::for_each_mut(&mut redundancy, |slot, r| {
                if alive[slot] {
                    let c = candidates[slot];
                    let sim = cosine_from_parts(dot(visual.row(c), pick_row), norms[c], pick_norm);
                    if sim > *r {
                        *r = sim;
                    }
                }
            });
        }
    }
    Ok(state)
}

/// Total budget divided into relevance-core and diversity counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    pub budget: usize,
    pub core_count: usize,
    pub diversity_count: usize,
    pub ratio: f64,
}

/// `core_count = round(ratio * budget)` (half away from zero), the rest goes
/// to diversity.
pub fn split_budget(budget: usize, ratio: f64) -> Result<BudgetSplit> {
    if budget == 0 {
        return Err(PruneError::BudgetZero);
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(PruneError::RatioOutOfRange(ratio));
    }
    let core_count = ((ratio * budget as f64).round() as usize).min(budget);
    Ok(BudgetSplit {
        budget,
        core_count,
        diversity_count: budget - core_count,
        ratio,
    })
}

/// Tokens kept when pruning a fraction `prune_rate` of `n`, never below 1.
pub fn compute_budget(n: usize, prune_rate: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&prune_rate) {
        return Err(PruneError::RateOutOfRange(prune_rate));
    }
    if n == 0 {
        return Err(PruneError::EmptyVisual);
    }
    let kept = (n as f64 * (1.0 - prune_rate)).round() as usize;
    Ok(kept.clamp(1, n))
}
