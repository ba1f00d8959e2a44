//! Reference implementations used as test oracles. Deliberately naive: no
//! caching, no partial sorts, full recomputation every step.
#![allow(dead_code)]

use tokenprune::rng::SplitMix64;
use tokenprune::{cosine_sim, EmbeddingMatrix};

/// Sort-based top-k: full stable sort by descending score, ties by index.
pub fn oracle_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn cos(visual: &EmbeddingMatrix, a: usize, b: usize) -> f64 {
    cosine_sim(visual.row(a), visual.row(b)).unwrap()
}

/// Column mean, f64 sums in row order, rounded to f32.
pub fn oracle_centroid(visual: &EmbeddingMatrix) -> Vec<f32> {
    (0..visual.cols())
        .map(|c| {
            let s: f64 = (0..visual.rows()).map(|r| f64::from(visual.row(r)[c])).sum();
            (s / visual.rows() as f64) as f32
        })
        .collect()
}

/// Greedy max-min selection recomputing every candidate's redundancy
/// against the whole selected set at every step.
pub fn oracle_greedy(visual: &EmbeddingMatrix, initial: &[usize], steps: usize) -> Vec<usize> {
    let n = visual.rows();
    let mut selected = initial.to_vec();
    for _ in 0..steps {
        let mut best: Option<(f64, usize)> = None;
        for x in 0..n {
            if selected.contains(&x) {
                continue;
            }
            let r = if selected.is_empty() {
                cosine_sim(&oracle_centroid(visual), visual.row(x)).unwrap()
            } else {
                selected
                    .iter()
                    .map(|&y| cos(visual, x, y))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            if best.is_none_or(|(b, _)| r < b) {
                best = Some((r, x));
            }
        }
        selected.push(best.expect("pool not empty").1);
    }
    selected
}

/// Relevance to a pooled vector, computed row by row.
pub fn oracle_scores(pooled: &[f32], visual: &EmbeddingMatrix) -> Vec<f64> {
    (0..visual.rows())
        .map(|j| cosine_sim(pooled, visual.row(j)).unwrap())
        .collect()
}

/// Uniform matrix in [-1, 1).
pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> EmbeddingMatrix {
    let data = (0..rows * cols).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
    EmbeddingMatrix::new(rows, cols, data).unwrap()
}

/// A random prompt/visual pair with `2..=max_n` visual tokens and
/// `1..=max_d` dimensions.
pub fn random_instance(rng: &mut SplitMix64, max_n: usize, max_d: usize) -> (EmbeddingMatrix, EmbeddingMatrix) {
    let n = 2 + rng.below((max_n - 1) as u64) as usize;
    let d = 1 + rng.below(max_d as u64) as usize;
    let m = 1 + rng.below(4) as usize;
    (random_matrix(rng, m, d), random_matrix(rng, n, d))
}

/// Exact one-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut coeff = 1.0f64; // C(n, 0)
    let mut tail = 0.0f64;
    for k in 0..=n {
        if k >= wins {
            tail += coeff;
        }
        coeff = coeff * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

/// Permutation of `0..n` drawn with the pinned generator.
pub fn random_permutation(rng: &mut SplitMix64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut p);
    p
}
