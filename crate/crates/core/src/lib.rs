//! Prompt-aware visual token pruning.
//!
//! Given prompt-token and visual-token embeddings, keep a fixed budget of
//! visual tokens: a core of the tokens most similar to the pooled prompt,
//! extended with greedy max-min diversity picks that cover the rest of the
//! image. Baselines (pure diversity, relevance only, uniform random), a
//! synthetic planted-cluster harness and the `EMB1` file format live
//! alongside.
//!
//! ```
//! use tokenprune::{zspa_prune, BudgetSpec, EmbeddingMatrix, Pooling, PruneConfig};
//!
//! let prompt = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0]]).unwrap();
//! let visual = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.9, 0.1], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
//! let config = PruneConfig::zspa(BudgetSpec::Budget(2), 0.5, Pooling::Mean);
//! let result = zspa_prune(&prompt, &visual, &config).unwrap();
//! assert_eq!(result.kept_indices, vec![0, 3]);
//! ```
//!
//! With the default `parallel` feature the per-token scoring loops run on
//! rayon; selections are bitwise identical either way.

pub mod cli;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod io;
mod par;
pub mod pipeline;
pub mod rng;
pub mod selection;

pub use embedding::{cosine_sim, max_pool, mean_pool, pool, EmbeddingMatrix, PooledPrompt, Pooling};
pub use error::PruneError;
pub use pipeline::{
    baseline_divprune, baseline_random, baseline_relevance_only, prune, zspa_prune, BudgetSpec, PruneConfig,
    PruneResult, StageTimings, Strategy,
};
pub use selection::{
    compute_budget, greedy_diversity_extend, relevance_scores, split_budget, top_k_select, BudgetSplit,
    Provenance, RelevanceScores, SelectionState,
};
