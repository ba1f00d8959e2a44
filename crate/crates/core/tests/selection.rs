mod common;

use common::*;
use proptest::prelude::*;
use tokenprune::rng::SplitMix64;
use tokenprune::{
    greedy_diversity_extend, mean_pool, relevance_scores, top_k_select, EmbeddingMatrix, Provenance, RelevanceScores,
    SelectionState,
};

#[test]
fn top_k_matches_sort_oracle_exhaustively() {
    // Every score vector over {0.1, 0.2, 0.3} up to n = 8, every k.
    const LEVELS: [f64; 3] = [0.1, 0.2, 0.3];
    for n in 0..=8usize {
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let scores: Vec<f64> = (0..n)
                .map(|_| {
                    let v = LEVELS[c % 3];
                    c /= 3;
                    v
                })
                .collect();
            let rs = RelevanceScores::new(scores.clone()).unwrap();
            for k in 0..=n {
                let got = top_k_select(&rs, k).unwrap();
                assert_eq!(got, oracle_top_k(&scores, k), "scores {scores:?} k {k}");
                let min_kept = got.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
                for j in (0..n).filter(|j| !got.contains(j)) {
                    assert!(scores[j] <= min_kept);
                }
            }
        }
    }
}

#[test]
fn six_token_example_matches_oracle() {
    let mut rng = SplitMix64::new(6);
    for _ in 0..50 {
        let visual = random_matrix(&mut rng, 6, 2);
        let prompt = random_matrix(&mut rng, 1, 2);
        let scores = relevance_scores(&mean_pool(&prompt).unwrap(), &visual).unwrap();
        let core = top_k_select(&scores, 1).unwrap();
        let got = greedy_diversity_extend(&visual, SelectionState::with_core(6, &core).unwrap(), 3).unwrap();
        assert_eq!(got.selected(), oracle_greedy(&visual, &core, 3).as_slice());
    }
}

fn instance() -> impl Strategy<Value = (EmbeddingMatrix, Vec<usize>, usize)> {
    (2usize..=64, 1usize..=8).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-1.0f32..1.0, n * d),
            prop::collection::vec(0usize..n, 0..4),
            0usize..=16,
        )
            .prop_map(move |(data, mut core, steps)| {
                core.sort_unstable();
                core.dedup();
                let steps = steps.min(n - core.len());
                (EmbeddingMatrix::new(n, d, data).unwrap(), core, steps)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn greedy_matches_naive_oracle((visual, core, steps) in instance()) {
        let state = SelectionState::with_core(visual.rows(), &core).unwrap();
        let got = greedy_diversity_extend(&visual, state, steps).unwrap();
        let want = oracle_greedy(&visual, &core, steps);
        prop_assert_eq!(got.selected(), want.as_slice());
    }

    #[test]
    fn greedy_keeps_state_invariants((visual, core, steps) in instance()) {
        let n = visual.rows();
        let state = SelectionState::with_core(n, &core).unwrap();
        let before = state.selected().len();
        let got = greedy_diversity_extend(&visual, state, steps).unwrap();
        prop_assert_eq!(got.selected().len(), before + steps);
        prop_assert_eq!(got.pool_len() + got.selected().len(), n);
        let mut seen = vec![false; n];
        for &i in got.selected() {
            prop_assert!(i < n);
            prop_assert!(!seen[i]);
            prop_assert!(!got.in_pool(i));
            seen[i] = true;
        }
        for i in got.pool() {
            prop_assert!(!seen[i]);
        }
        let diversity = got.provenance().iter().filter(|&&p| p == Provenance::Diversity).count();
        prop_assert_eq!(diversity, steps);
    }

    #[test]
    fn power_of_two_scaling_leaves_selection_unchanged(
        (visual, core, steps) in instance(),
        exp in -8i32..8,
    ) {
        let factor = 2f32.powi(exp);
        let big = EmbeddingMatrix::new(
            visual.rows(), visual.cols(), visual.data().iter().map(|v| v * factor).collect()).unwrap();
        let n = visual.rows();
        let a = greedy_diversity_extend(&visual, SelectionState::with_core(n, &core).unwrap(), steps).unwrap();
        let b = greedy_diversity_extend(&big, SelectionState::with_core(n, &core).unwrap(), steps).unwrap();
        prop_assert_eq!(a, b);
        let pooled = tokenprune::PooledPrompt::Mean(visual.row(0).to_vec());
        let sa = relevance_scores(&pooled, &visual).unwrap();
        let sb = relevance_scores(&pooled, &big).unwrap();
        prop_assert_eq!(sa.as_slice(), sb.as_slice());
    }
}

#[test]
fn excluded_tokens_are_never_picked() {
    let visual = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]).unwrap();
    let mut state = SelectionState::with_core(4, &[0]).unwrap();
    state.exclude(2).unwrap();
    let got = greedy_diversity_extend(&visual, state, 2).unwrap();
    assert_eq!(got.selected(), &[0, 1, 3]);
}
