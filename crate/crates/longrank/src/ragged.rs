//! Padding-free variable-length batching.
//!
//! Sequences are flattened into one token matrix plus an index tensor of
//! segment boundaries. Attention runs per segment against that flat storage,
//! a global allocator truncates sampled lengths against a fixed token budget,
//! and compaction repacks the flat tokens into fixed-width physical rows
//! without introducing a single padding token.

use crate::error::{Error, Result};
use crate::numerics::{counter, Matrix, Real};
use crate::stca::{reordered_segment, AttentionParams, AttnScratch, KeysView};

/// Flattened variable-length sequences with an offsets array.
///
/// `index` has one more entry than there are segments; segment `b` occupies
/// token rows `index[b] .. index[b+1]`.
#[derive(Debug, Clone)]
pub struct RaggedBatch<T: Real> {
    values: Matrix<T>,
    index: Vec<usize>,
}

impl<T: Real> RaggedBatch<T> {
    /// Flatten sequences in input order. All must share the feature width.
    pub fn from_sequences(sequences: &[Matrix<T>]) -> Result<Self> {
        let d = sequences
            .iter()
            .find(|s| s.rows() > 0)
            .map_or_else(|| sequences.first().map_or(0, |s| s.cols()), |s| s.cols());
        let total: usize = sequences.iter().map(|s| s.rows()).sum();
        let mut values = Matrix::zeros(total, d);
        let mut index = Vec::with_capacity(sequences.len() + 1);
        index.push(0);
        let mut at = 0;
        for s in sequences {
            if s.rows() > 0 && s.cols() != d {
                return Err(Error::Dimension {
                    op: "build_ragged",
                    lhs: (s.rows(), s.cols()),
                    rhs: (total, d),
                });
            }
            for i in 0..s.rows() {
                values.row_mut(at).copy_from_slice(s.row(i));
                at += 1;
            }
            index.push(at);
        }
        Ok(RaggedBatch { values, index })
    }

    pub fn seq_count(&self) -> usize {
        self.index.len() - 1
    }

    pub fn total_tokens(&self) -> usize {
        *self.index.last().unwrap_or(&0)
    }

    pub fn feature_dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    pub fn segment_len(&self, b: usize) -> usize {
        self.index[b + 1] - self.index[b]
    }

    /// Borrowed view over segment `b`, no copy.
    pub fn segment(&self, b: usize) -> KeysView<'_, T> {
        let d = self.values.cols();
        let (start, end) = (self.index[b], self.index[b + 1]);
        KeysView::new(&self.values.data()[start * d..end * d], end - start, d)
    }

    /// Reconstruct the original sequence list.
    pub fn split(&self) -> Vec<Matrix<T>> {
        (0..self.seq_count())
            .map(|b| {
                let len = self.segment_len(b);
                let mut m = Matrix::zeros(len, self.values.cols());
                for (i, src) in (self.index[b]..self.index[b + 1]).enumerate() {
                    m.row_mut(i).copy_from_slice(self.values.row(src));
                }
                m
            })
            .collect()
    }
}

/// Per-segment single-query attention: row `b` of the output attends only to
/// segment `b`. No cross-segment leakage, no padding tensor.
pub fn ragged_target_attention<T: Real>(
    queries: &Matrix<T>,
    batch: &RaggedBatch<T>,
    attn: &AttentionParams<T>,
) -> Result<Matrix<T>> {
    let b = batch.seq_count();
    let d = batch.feature_dim();
    if queries.shape() != (b, d) {
        return Err(Error::Dimension {
            op: "ragged_target_attention",
            lhs: queries.shape(),
            rhs: (b, d),
        });
    }
    let max_len = (0..b).map(|i| batch.segment_len(i)).max().unwrap_or(0);
    let heads = attn.wq.len();
    let mut scratch = AttnScratch::new(d, d / heads, max_len);
    let mut out = Matrix::zeros(b, d);
    for seg in 0..b {
        if batch.segment_len(seg) == 0 {
            return Err(Error::EmptyHistory { segment: seg });
        }
        let (row_in, view) = (queries.row(seg), batch.segment(seg));
        reordered_segment(row_in, view, attn, &mut scratch, out.row_mut(seg))
            .map_err(|e| match e {
                Error::EmptyHistory { .. } => Error::EmptyHistory { segment: seg },
                other => other,
            })?;
    }
    Ok(out)
}

/// Fixed token budget per batch: `batch * avg_len` tokens.
#[derive(Debug, Clone, Copy)]
pub struct TokenBudget {
    pub batch: usize,
    pub avg_len: usize,
}

impl TokenBudget {
    pub fn total(&self) -> usize {
        self.batch * self.avg_len
    }
}

const LENGTH_GRANULE: usize = 8;

fn floor_granule(x: usize) -> usize {
    x / LENGTH_GRANULE * LENGTH_GRANULE
}

/// Truncate requested lengths so the batch total never exceeds the budget.
///
/// Under budget the request passes through unchanged. Over budget every
/// length is scaled proportionally, floored to a multiple of 8 (short
/// requests below 8 pass whole), and leftover slack is handed back in
/// granules of 8 to the most-truncated sequences, ties to the lowest index.
/// The returned total is always <= the budget.
pub fn allocate_lengths(requested: &[usize], budget: &TokenBudget) -> Result<Vec<usize>> {
    let total_budget = budget.total();
    let floor_need: usize = requested.iter().map(|&r| r.min(LENGTH_GRANULE)).sum();
    if floor_need > total_budget {
        return Err(Error::InfeasibleBudget {
            budget: total_budget,
            required: floor_need,
        });
    }
    let total_requested: usize = requested.iter().sum();
    if total_requested <= total_budget {
        return Ok(requested.to_vec());
    }

    let scale = total_budget as f64 / total_requested as f64;
    let mut allocated: Vec<usize> = requested
        .iter()
        .map(|&r| {
            if r < LENGTH_GRANULE {
                r
            } else {
                floor_granule((r as f64 * scale) as usize).clamp(LENGTH_GRANULE, floor_granule(r))
            }
        })
        .collect();

    // Flooring to granules can overshoot on pathological mixes; shave the
    // largest allocations first until the hard bound holds.
    let mut total: usize = allocated.iter().sum();
    while total > total_budget {
        let victim = (0..allocated.len())
            .filter(|&i| allocated[i] > LENGTH_GRANULE)
            .max_by_key(|&i| allocated[i])
            .expect("feasibility check guarantees shrinkable sequences");
        allocated[victim] -= LENGTH_GRANULE;
        total -= LENGTH_GRANULE;
    }

    // Hand back slack in granules to the most-truncated sequences.
    let mut slack = total_budget - total;
    while slack >= LENGTH_GRANULE {
        let candidate = (0..allocated.len())
            .filter(|&i| allocated[i] + LENGTH_GRANULE <= requested[i])
            .max_by(|&a, &b| {
                let da = requested[a] - allocated[a];
                let db = requested[b] - allocated[b];
                da.cmp(&db).then(b.cmp(&a))
            });
        match candidate {
            Some(i) => {
                allocated[i] += LENGTH_GRANULE;
                slack -= LENGTH_GRANULE;
            }
            None => break,
        }
    }
    Ok(allocated)
}

/// Placement of one logical sequence inside the compacted physical layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentPiece {
    pub row: usize,
    pub start: usize,
    pub len: usize,
}

/// Physically packed batch: `rows` rows of exactly `row_len` tokens with a
/// map back to logical sequences.
#[derive(Debug, Clone)]
pub struct CompactBatch<T: Real> {
    pub rows: usize,
    pub row_len: usize,
    pub values: Matrix<T>,
    pub map: Vec<Vec<SegmentPiece>>,
}

/// Pack logical sequences into `B` physical rows of exactly `avg_len` tokens.
///
/// Greedy first-fit in input order: rows fill sequentially and a logical
/// sequence splits across adjacent rows when it straddles a boundary. Token
/// content and order are untouched; the map records every placement.
pub fn compact<T: Real>(batch: &RaggedBatch<T>, avg_len: usize) -> Result<CompactBatch<T>> {
    let total = batch.total_tokens();
    let rows = batch.seq_count();
    let expected = rows * avg_len;
    if total != expected {
        return Err(Error::CompactionPrecondition { total, expected });
    }
    let mut map = Vec::with_capacity(rows);
    for b in 0..rows {
        let mut pieces = Vec::new();
        let mut at = batch.index()[b];
        let end = batch.index()[b + 1];
        while at < end {
            let row = at / avg_len;
            let start = at % avg_len;
            let len = (avg_len - start).min(end - at);
            pieces.push(SegmentPiece { row, start, len });
            at += len;
        }
        map.push(pieces);
    }
    Ok(CompactBatch {
        rows,
        row_len: avg_len,
        values: batch.values().clone(),
        map,
    })
}

impl<T: Real> CompactBatch<T> {
    /// Reconstruct the logical sequences from the physical layout.
    pub fn unpack(&self) -> Vec<Matrix<T>> {
        let d = self.values.cols();
        self.map
            .iter()
            .map(|pieces| {
                let len: usize = pieces.iter().map(|p| p.len).sum();
                let mut m = Matrix::zeros(len, d);
                let mut at = 0;
                for p in pieces {
                    for k in 0..p.len {
                        let src = p.row * self.row_len + p.start + k;
                        m.row_mut(at).copy_from_slice(self.values.row(src));
                        at += 1;
                    }
                }
                m
            })
            .collect()
    }
}

/// Upper bound asserted by the padding-free tests: the largest tensor any
/// ragged attention call may materialize.
pub fn padding_free_bound(total_tokens: usize, batch: usize, d: usize) -> u64 {
    (total_tokens + batch * d) as u64
}

pub use counter::measure_alloc;
