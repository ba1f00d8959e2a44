//! Dense embedding storage, prompt pooling and cosine similarity.
//!
//! Values are stored as `f32`; dot products, norms and sums accumulate in
//! `f64` with a reduction order fixed by the input length alone, so results
//! do not depend on threading.

use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};

/// Row-major matrix of token embeddings, one token per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major data, rejecting bad shapes and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if cols == 0 {
            return Err(PruneError::ZeroColumns);
        }
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(PruneError::ShapeMismatch {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(PruneError::NonFiniteValue {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).ok_or(PruneError::ZeroColumns)?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(PruneError::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    /// An empty matrix with `cols` columns.
    pub fn empty(cols: usize) -> Result<Self> {
        Self::new(0, cols, Vec::new())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Row `i`. Panics if `i >= rows`.
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    /// Squared Euclidean norm of every row.
    pub fn row_sq_norms(&self) -> Vec<f64> {
        crate::par::map_range(self.rows, |i| sq_norm(self.row(i)))
    }

    /// Returns a copy with rows reordered so that row `i` of the result is
    /// row `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(order.len() * self.cols);
        for &i in order {
            if i >= self.rows {
                return Err(PruneError::IndexOutOfRange { index: i, n: self.rows });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: order.len(),
            cols: self.cols,
            data,
        })
    }
}

/// How the prompt tokens are collapsed before relevance scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Score against every prompt token and keep the best match.
    None,
    Max,
    #[default]
    Mean,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::None => "none",
            Pooling::Max => "max",
            Pooling::Mean => "mean",
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Pooling::None),
            "max" => Ok(Pooling::Max),
            "mean" => Ok(Pooling::Mean),
            other => Err(format!("unknown pooling mode `{other}`")),
        }
    }
}

/// The prompt after simplification.
///
/// `Unpooled` keeps the whole prompt matrix; relevance is then the best
/// cosine over prompt tokens.
#[derive(Debug, Clone, PartialEq)]
pub enum PooledPrompt {
    Mean(Vec<f32>),
    Max(Vec<f32>),
    Unpooled(EmbeddingMatrix),
}

impl PooledPrompt {
    pub fn mode(&self) -> Pooling {
        match self {
            PooledPrompt::Mean(_) => Pooling::Mean,
            PooledPrompt::Max(_) => Pooling::Max,
            PooledPrompt::Unpooled(_) => Pooling::None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PooledPrompt::Mean(v) | PooledPrompt::Max(v) => v.len(),
            PooledPrompt::Unpooled(m) => m.cols(),
        }
    }

    /// The pooled vector, or `None` for the unpooled mode.
    pub fn vector(&self) -> Option<&[f32]> {
        match self {
            PooledPrompt::Mean(v) | PooledPrompt::Max(v) => Some(v),
            PooledPrompt::Unpooled(_) => None,
        }
    }
}

/// Column-wise arithmetic mean of the prompt rows.
pub fn mean_pool(prompt: &EmbeddingMatrix) -> Result<PooledPrompt> {
    Ok(PooledPrompt::Mean(column_mean(prompt)?))
}

/// Column-wise maximum of the prompt rows.
pub fn max_pool(prompt: &EmbeddingMatrix) -> Result<PooledPrompt> {
    if prompt.is_empty() {
        return Err(PruneError::EmptyPrompt);
    }
    let mut out = prompt.row(0).to_vec();
    for row in prompt.iter_rows().skip(1) {
        for (acc, &v) in out.iter_mut().zip(row) {
            if v > *acc {
                *acc = v;
            }
        }
    }
    Ok(PooledPrompt::Max(out))
}

/// Pools `prompt` according to `mode`.
pub fn pool(prompt: &EmbeddingMatrix, mode: Pooling) -> Result<PooledPrompt> {
    match mode {
        Pooling::Mean => mean_pool(prompt),
        Pooling::Max => max_pool(prompt),
        Pooling::None => {
            if prompt.is_empty() {
                return Err(PruneError::EmptyPrompt);
            }
            Ok(PooledPrompt::Unpooled(prompt.clone()))
        }
    }
}

/// Column means accumulated in `f64`, rows summed in index order.
pub(crate) fn column_mean(m: &EmbeddingMatrix) -> Result<Vec<f32>> {
    if m.is_empty() {
        return Err(PruneError::EmptyPrompt);
    }
    let mut acc = vec![0.0f64; m.cols()];
    for row in m.iter_rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += f64::from(v);
        }
    }
    let count = m.rows() as f64;
    Ok(acc.into_iter().map(|s| (s / count) as f32).collect())
}

const LANES: usize = 8;

/// Dot product with a fixed-shape reduction: eight `f64` lane accumulators
/// over consecutive chunks, combined pairwise, then the tail in order. The
/// shape depends only on the length, so results are reproducible bit for bit.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f64; LANES];
    let chunks = a.len() / LANES;
    for (ca, cb) in a.chunks_exact(LANES).zip(b.chunks_exact(LANES)) {
        for i in 0..LANES {
            lanes[i] += f64::from(ca[i]) * f64::from(cb[i]);
        }
    }
    let mut total = ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6])) + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]));
    for (&x, &y) in a[chunks * LANES..].iter().zip(&b[chunks * LANES..]) {
        total += f64::from(x) * f64::from(y);
    }
    total
}

pub(crate) fn sq_norm(a: &[f32]) -> f64 {
    dot(a, a)
}

/// Cosine from a dot product and squared norms. Zero norms give 0.
///
/// Dividing by `sqrt(|a|^2 |b|^2)` makes the cosine of a vector with itself
/// exactly 1.
#[inline]
pub(crate) fn cosine_from_parts(dot: f64, sq_norm_a: f64, sq_norm_b: f64) -> f64 {
    if sq_norm_a == 0.0 || sq_norm_b == 0.0 {
        return 0.0;
    }
    (dot / (sq_norm_a * sq_norm_b).sqrt()).clamp(-1.0, 1.0)
}

/// Cosine similarity of two equal-length vectors; 0 if either has zero norm.
pub fn cosine_sim(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(PruneError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(cosine_from_parts(dot(a, b), sq_norm(a), sq_norm(b)))
}
