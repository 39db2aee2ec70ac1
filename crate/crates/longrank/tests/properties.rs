//! Property tests for the algebraic invariants the stack relies on.

use longrank::extrapolation::{select_random, select_suffix};
use longrank::numerics::{softmax_row, swigluffn_forward, Matrix};
use longrank::ragged::{allocate_lengths, compact, RaggedBatch, TokenBudget};
use proptest::prelude::*;
use rand::SeedableRng;

proptest! {
    /// Softmax output is a probability vector for any finite input.
    #[test]
    fn softmax_is_a_probability_vector(logits in prop::collection::vec(-50.0f64..50.0, 1..64)) {
        let out = softmax_row(&logits).unwrap();
        prop_assert!(out.iter().all(|&p| p >= 0.0));
        let sum: f64 = out.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        // Order-preserving.
        for i in 0..logits.len() {
            for j in 0..logits.len() {
                if logits[i] > logits[j] {
                    prop_assert!(out[i] >= out[j]);
                }
            }
        }
    }

    /// The gated feed-forward preserves input dimensions for any expansion.
    #[test]
    fn swiglu_preserves_dimensions(rows in 1usize..6, d in 1usize..8, ratio in 1usize..4, seed in 0u64..1000) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let x: Matrix<f64> = Matrix::uniform(rows, d, 1.0, &mut rng);
        let wu = Matrix::uniform(d, ratio * d, 0.5, &mut rng);
        let wv = Matrix::uniform(d, ratio * d, 0.5, &mut rng);
        let wo = Matrix::uniform(ratio * d, d, 0.5, &mut rng);
        let out = swigluffn_forward(&x, &wu, &wv, &wo).unwrap();
        prop_assert_eq!(out.shape(), (rows, d));
        prop_assert!(out.all_finite());
    }

    /// Flatten-then-split reconstructs any sequence list exactly.
    #[test]
    fn ragged_round_trip(lens in prop::collection::vec(0usize..24, 1..10), seed in 0u64..1000) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let seqs: Vec<Matrix<f64>> = lens.iter().map(|&l| Matrix::uniform(l, 3, 1.0, &mut rng)).collect();
        let batch = RaggedBatch::from_sequences(&seqs).unwrap();
        prop_assert_eq!(batch.index().len(), seqs.len() + 1);
        prop_assert_eq!(batch.total_tokens(), lens.iter().sum::<usize>());
        let back = batch.split();
        prop_assert_eq!(seqs, back);
    }

    /// The allocator never exceeds the budget and never grows a request.
    #[test]
    fn allocation_respects_the_budget(
        requested in prop::collection::vec(1usize..600, 1..24),
        avg_granules in 1usize..40,
    ) {
        let budget = TokenBudget { batch: requested.len(), avg_len: 8 * avg_granules };
        let allocated = allocate_lengths(&requested, &budget).unwrap();
        prop_assert!(allocated.iter().sum::<usize>() <= budget.total());
        for (a, r) in allocated.iter().zip(&requested) {
            prop_assert!(a <= r);
            prop_assert!(*a >= (*r).min(8));
        }
    }

    /// Compaction is lossless whenever the batch fills the budget exactly.
    #[test]
    fn compaction_round_trip(parts in prop::collection::vec(0usize..20, 1..8), avg in 1usize..12, seed in 0u64..1000) {
        // Build lengths that sum exactly to parts.len() * avg.
        let total = parts.len() * avg;
        let mut lens = vec![0usize; parts.len()];
        let mut left = total;
        for (slot, &p) in lens.iter_mut().zip(&parts).take(parts.len() - 1) {
            let take = p.min(left);
            *slot = take;
            left -= take;
        }
        *lens.last_mut().unwrap() = left;
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let seqs: Vec<Matrix<f64>> = lens.iter().map(|&l| Matrix::uniform(l, 2, 1.0, &mut rng)).collect();
        let batch = RaggedBatch::from_sequences(&seqs).unwrap();
        let packed = compact(&batch, avg).unwrap();
        let back = packed.unpack();
        for (a, b) in seqs.iter().zip(&back) {
            prop_assert_eq!(a.data(), b.data());
        }
    }

    /// Suffix selection returns a contiguous tail; random selection returns
    /// an ordered subsequence; both cap at the history length.
    #[test]
    fn selection_policies(history_len in 1usize..64, keep in 1usize..80, seed in 0u64..1000) {
        let history: Vec<u32> = (0..history_len as u32).collect();
        let suffix = select_suffix(&history, keep);
        prop_assert_eq!(suffix.len(), keep.min(history_len));
        let offset = history_len - suffix.len();
        prop_assert_eq!(suffix, &history[offset..]);

        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let random = select_random(&history, keep, &mut rng);
        prop_assert_eq!(random.len(), keep.min(history_len));
        let mut last: Option<u32> = None;
        for &v in &random {
            if let Some(prev) = last {
                prop_assert!(v > prev, "order not preserved");
            }
            last = Some(v);
        }
    }
}
