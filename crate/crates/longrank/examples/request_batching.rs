//! Request-level batching: encode one user history, reuse it for all m
//! targets. Scores match m independent forwards exactly, the objective is
//! unchanged, and both payload bytes and wall-clock drop.
//!
//! Run: cargo run --release --example request_batching

use std::time::Instant;

use longrank::harness::synthetic::{generate, SyntheticTaskConfig};
use longrank::numerics::counter;
use longrank::rlb::{
    loss_with_mode, payload_bytes, rlb_forward, triplet_forward, user_payload_saving, BatchMode,
    LossMode, PayloadModel,
};
use longrank::stca::{StcaConfig, StcaParams};
use rand::SeedableRng;

fn main() {
    let mut config = StcaConfig::desk();
    config.video_vocab = 500;
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    let params: StcaParams<f64> = StcaParams::init(&config, &mut rng).unwrap();

    let task = SyntheticTaskConfig {
        vocab: 500,
        requests: 32,
        history_len: (512, 512),
        m: 8,
        signal_lag: (1, 32),
        signal_copies: 4,
        proxy_lag: (1, 1),
        proxy_copies: 0,
        proxy_strength: 1.0,
        noise: 0.1,
        clusters: 500,
        seed: 9,
    };
    let requests = generate(&task).unwrap();

    // Identical scores, one history encoding instead of m.
    counter::reset();
    let shared_scores = rlb_forward(&requests[0], &params, &config).unwrap();
    let shared_invocations = counter::encoder_invocations();
    counter::reset();
    let independent = triplet_forward(&requests[0], &params, &config).unwrap();
    let triplet_invocations = counter::encoder_invocations();
    let max_gap = shared_scores
        .iter()
        .zip(&independent)
        .map(|(a, b)| (a.y_hat - b.y_hat).abs())
        .fold(0.0f64, f64::max);
    println!(
        "m = {} targets: max score gap vs independent forwards {max_gap:.2e}",
        requests[0].targets.len()
    );
    println!("history encodings: {shared_invocations} shared vs {triplet_invocations} triplet");

    // The per-user objective on shared scores.
    let y_hats: Vec<Vec<f64>> = requests
        .iter()
        .map(|r| rlb_forward(r, &params, &config).unwrap().iter().map(|o| o.y_hat).collect())
        .collect();
    let per_user = loss_with_mode(&requests, &y_hats, LossMode::PerUser).unwrap();
    let flat = loss_with_mode(&requests, &y_hats, LossMode::Flat).unwrap();
    println!("per-user loss {per_user:.6} vs flat mean {flat:.6} (equal m: gap {:.1e})", (per_user - flat).abs());

    // Payload accounting: the user/history bytes travel once per request.
    println!("\npayload model (U = 800 KiB history, T = 2 KiB per target):");
    println!("  m  triplet_bytes  rlb_bytes  user_payload_saving");
    for m in [1u64, 2, 4, 8] {
        let model = PayloadModel {
            user_bytes: 800 << 10,
            target_bytes: 2 << 10,
            targets_per_request: m,
        };
        println!(
            "  {m}  {:>12}  {:>9}  {:>6.1}%",
            payload_bytes(&model, BatchMode::Triplet),
            payload_bytes(&model, BatchMode::Rlb),
            100.0 * user_payload_saving(m)
        );
    }

    // Forward-only wall clock over the batch, shared vs per-triplet.
    let t0 = Instant::now();
    for r in &requests {
        let _ = rlb_forward(r, &params, &config).unwrap();
    }
    let t_shared = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    for r in &requests {
        let _ = triplet_forward(r, &params, &config).unwrap();
    }
    let t_triplet = t0.elapsed().as_secs_f64();
    println!(
        "\nforward epoch at L = 512, m = 8: {:.3}s shared vs {:.3}s triplet ({:.1}x)",
        t_shared,
        t_triplet,
        t_triplet / t_shared
    );
}
