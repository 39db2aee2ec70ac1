//! Stochastic training lengths: a Beta-distributed ratio with the second
//! shape parameter pinned so the expected length equals the configured
//! average, rounded to multiples of 8. Small alpha makes the distribution
//! U-shaped: most samples are very short, a calibrated tail is near-maximal.
//!
//! Run: cargo run --release --example length_sampling

use longrank::extrapolation::{
    beta_param, select_random, select_suffix, sequence_sparsity, LengthSampler,
    LengthSamplerConfig,
};
use rand::SeedableRng;

fn main() {
    let config = LengthSamplerConfig {
        l_min: 0,
        l_avg: 2000,
        l_max: 10000,
        l_infer: 10000,
        alpha: 0.02,
    };
    let beta = beta_param(&config).unwrap();
    let report = sequence_sparsity(&config).unwrap();
    println!("alpha {}, beta {beta} (closed form)", config.alpha);
    println!(
        "sequence sparsity {:.0}%, extrapolation ratio {}",
        100.0 * report.sequence_sparsity,
        report.extrapolation_ratio
    );

    let sampler = LengthSampler::new(config).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(42);
    let n = 100_000;
    let lengths: Vec<usize> = (0..n).map(|_| sampler.sample_length(&mut rng)).collect();
    let mean = lengths.iter().sum::<usize>() as f64 / n as f64;
    println!("\n{n} samples: mean {mean:.1} (target {})", config.l_avg);

    // Ten-bucket histogram shows the U shape.
    let mut hist = [0usize; 10];
    for &l in &lengths {
        hist[(l * 10 / (config.l_max + 1)).min(9)] += 1;
    }
    println!("length histogram (buckets of {}):", config.l_max / 10);
    let peak = *hist.iter().max().unwrap();
    for (i, &count) in hist.iter().enumerate() {
        let bar = "#".repeat(count * 50 / peak);
        println!("  {:>5}..{:>5}  {:>6}  {bar}", i * 1000, (i + 1) * 1000, count);
    }

    // Element selection: the temporal suffix against the random-subset
    // ablation on a toy history.
    let history: Vec<u32> = (1..=20).collect();
    let suffix = select_suffix(&history, 6);
    let random = select_random(&history, 6, &mut rng);
    println!("\nhistory  {history:?}");
    println!("suffix-6 {suffix:?}");
    println!("random-6 {random:?}");
}
