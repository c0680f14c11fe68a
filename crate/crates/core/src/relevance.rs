//! Visual relevance of draft tokens.
//!
//! Each draft position's target-side hidden state is compared by cosine
//! similarity against every visual hidden state; the position's relevance is
//! the mean of its Top-N similarities. The `λK` least relevant positions of a
//! step form the relaxed index set.
//!
//! Arithmetic is done in `f64`; inputs and outputs are `f32`.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::types::HiddenMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Draft,
    Visual,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Draft => "draft_hidden",
            Side::Visual => "visual_hidden",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelevanceError {
    #[error("zero-norm row {row} in {matrix}")]
    ZeroNormRow { matrix: Side, row: usize },
    #[error("hidden dimension mismatch: draft_hidden has {draft} cols, visual_hidden has {visual}")]
    DimensionMismatch { draft: usize, visual: usize },
    #[error("visual_hidden has no rows")]
    EmptyVisual,
    #[error("top-N must be at least 1")]
    ZeroTopN,
}

/// K x l_v matrix of cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl CosineMatrix {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// Per-position relevance for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceScores {
    pub step_index: u64,
    pub scores: Vec<f32>,
}

/// Positions exempted from exact matching, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RelaxedIndexSet {
    pub indices: Vec<usize>,
}

impl RelaxedIndexSet {
    pub fn contains(&self, position: usize) -> bool {
        self.indices.binary_search(&position).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_subset(&self, other: &RelaxedIndexSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn norms(m: &HiddenMatrix, side: Side) -> Result<Vec<f64>, RelevanceError> {
    m.iter_rows()
        .enumerate()
        .map(|(row, r)| {
            let n = dot(r, r).sqrt();
            if n > 0.0 {
                Ok(n)
            } else {
                Err(RelevanceError::ZeroNormRow { matrix: side, row })
            }
        })
        .collect()
}

#[inline]
fn cosine(a: &[f32], na: f64, b: &[f32], nb: f64) -> f64 {
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Visual side of the relevance computation with row norms cached, so a
/// replay computes them once per trace instead of once per step.
#[derive(Debug, Clone)]
pub struct RelevanceScorer<'a> {
    visual: &'a HiddenMatrix,
    visual_norms: Vec<f64>,
}

impl<'a> RelevanceScorer<'a> {
    pub fn new(visual: &'a HiddenMatrix) -> Result<Self, RelevanceError> {
        if visual.rows() == 0 {
            return Err(RelevanceError::EmptyVisual);
        }
        Ok(Self {
            visual,
            visual_norms: norms(visual, Side::Visual)?,
        })
    }

    fn check_draft(&self, draft: &HiddenMatrix) -> Result<Vec<f64>, RelevanceError> {
        if draft.cols() != self.visual.cols() {
            return Err(RelevanceError::DimensionMismatch {
                draft: draft.cols(),
                visual: self.visual.cols(),
            });
        }
        norms(draft, Side::Draft)
    }

    pub fn cosine_matrix(&self, draft: &HiddenMatrix) -> Result<CosineMatrix, RelevanceError> {
        let draft_norms = self.check_draft(draft)?;
        let l_v = self.visual.rows();
        let mut data = Vec::with_capacity(draft.rows() * l_v);
        for (d_row, &nd) in draft.iter_rows().zip(&draft_norms) {
            for (v_row, &nv) in self.visual.iter_rows().zip(&self.visual_norms) {
                data.push(cosine(d_row, nd, v_row, nv) as f32);
            }
        }
        Ok(CosineMatrix {
            rows: draft.rows(),
            cols: l_v,
            data,
        })
    }

    /// Mean of the `min(top_n, l_v)` largest cosines per draft row.
    pub fn scores(&self, draft: &HiddenMatrix, top_n: usize, step_index: u64) -> Result<RelevanceScores, RelevanceError> {
        if top_n == 0 {
            return Err(RelevanceError::ZeroTopN);
        }
        let draft_norms = self.check_draft(draft)?;
        let l_v = self.visual.rows();
        let n = top_n.min(l_v);
        let mut row_buf = vec![0.0f64; l_v];
        let mut scores = Vec::with_capacity(draft.rows());
        for (d_row, &nd) in draft.iter_rows().zip(&draft_norms) {
            for ((slot, v_row), &nv) in row_buf.iter_mut().zip(self.visual.iter_rows()).zip(&self.visual_norms) {
                *slot = cosine(d_row, nd, v_row, nv);
            }
            scores.push(top_n_mean(&mut row_buf, n) as f32);
        }
        Ok(RelevanceScores { step_index, scores })
    }
}

/// Mean of the `n` largest values. Reorders `values`. The selected values
/// are summed in descending order so the result depends only on the multiset.
fn top_n_mean(values: &mut [f64], n: usize) -> f64 {
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if n < values.len() {
        values.select_nth_unstable_by(n - 1, desc);
    }
    let top = &mut values[..n];
    top.sort_unstable_by(desc);
    top.iter().sum::<f64>() / n as f64
}

/// Cosine similarity of every draft row against every visual row.
pub fn cosine_matrix(draft: &HiddenMatrix, visual: &HiddenMatrix) -> Result<CosineMatrix, RelevanceError> {
    RelevanceScorer::new(visual)?.cosine_matrix(draft)
}

/// Visual relevance of each draft position. `top_n` is clamped to `l_v`.
pub fn visual_relevance(draft: &HiddenMatrix, visual: &HiddenMatrix, top_n: usize) -> Result<RelevanceScores, RelevanceError> {
    RelevanceScorer::new(visual)?.scores(draft, top_n, 0)
}

/// Number of relaxed positions: λK rounded half away from zero.
pub fn relaxed_count(lambda: f64, k: usize) -> usize {
    ((lambda * k as f64).round().max(0.0) as usize).min(k)
}

/// Positions of the `relaxed_count(λ, K)` lowest scores; ties go to the
/// lower position.
pub fn relaxed_indices(scores: &RelevanceScores, lambda: f64) -> RelaxedIndexSet {
    let s = &scores.scores;
    let m = relaxed_count(lambda, s.len());
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(Ordering::Equal));
    let mut indices = order[..m].to_vec();
    indices.sort_unstable();
    RelaxedIndexSet { indices }
}
