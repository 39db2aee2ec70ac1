//! Padding-free batching end to end: sample lengths, truncate them against a
//! fixed token budget, flatten into an index-tensor batch, compact into
//! fixed-width physical rows, and run per-segment target attention without a
//! single padding token.
//!
//! Run: cargo run --release --example ragged_batching

use longrank::extrapolation::{LengthSampler, LengthSamplerConfig};
use longrank::numerics::{counter, Matrix};
use longrank::ragged::{
    allocate_lengths, compact, padding_free_bound, ragged_target_attention, RaggedBatch,
    TokenBudget,
};
use longrank::stca::{StcaConfig, StcaParams};
use rand::SeedableRng;

fn main() {
    let cfg = StcaConfig::desk();
    let d = cfg.d;
    let mut rng = rand::rngs::StdRng::seed_from_u64(18);
    let params: StcaParams<f64> = StcaParams::init(&cfg, &mut rng).unwrap();

    // Stochastic lengths against a fixed budget of B * L_avg tokens.
    let budget = TokenBudget {
        batch: 8,
        avg_len: 64,
    };
    let sampler = LengthSampler::new(LengthSamplerConfig::desk()).unwrap();
    let requested: Vec<usize> = (0..budget.batch).map(|_| sampler.sample_length(&mut rng)).collect();
    let allocated = allocate_lengths(&requested, &budget).unwrap();
    println!("token budget {} = {} x {}", budget.total(), budget.batch, budget.avg_len);
    println!("requested lengths: {requested:?}");
    println!("allocated lengths: {allocated:?} (total {})", allocated.iter().sum::<usize>());

    // Flatten into one token matrix plus the segment index.
    let sequences: Vec<Matrix<f64>> = allocated
        .iter()
        .map(|&l| Matrix::uniform(l, d, 1.0, &mut rng))
        .collect();
    let batch = RaggedBatch::from_sequences(&sequences).unwrap();
    println!("\nindex tensor: {:?}", batch.index());

    // Physical compaction only applies when the budget is met exactly.
    if batch.total_tokens() == budget.total() {
        let packed = compact(&batch, budget.avg_len).unwrap();
        println!("compacted into {} rows of {} tokens", packed.rows, packed.row_len);
        let restored = packed.unpack();
        assert!(sequences
            .iter()
            .zip(&restored)
            .all(|(a, b)| a.max_abs_diff(b) == 0.0));
        println!("compaction round-trip: lossless");
    } else {
        println!("batch under budget; compaction skipped");
    }

    // Per-segment attention straight off the flat storage.
    let queries: Matrix<f64> = Matrix::uniform(budget.batch, d, 1.0, &mut rng);
    counter::reset();
    let out = ragged_target_attention(&queries, &batch, &params.layers[0].attn).unwrap();
    println!("\nragged attention output: {} x {}", out.rows(), out.cols());
    println!(
        "largest tensor allocated: {} entries (padding-free bound {})",
        counter::max_single_alloc(),
        padding_free_bound(batch.total_tokens(), batch.seq_count(), d)
    );
}
