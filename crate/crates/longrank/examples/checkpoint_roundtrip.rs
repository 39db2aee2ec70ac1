//! Checkpoint and dataset wire formats: save a model, reload it, verify the
//! scores match bit for bit; write a request-per-line dataset and a flat
//! triplet file, read both back through the grouping converter.
//!
//! Run: cargo run --release --example checkpoint_roundtrip

use longrank::harness::synthetic::{generate, SyntheticTaskConfig};
use longrank::rlb::{dataset, rlb_forward, GroupKey, Triplet};
use longrank::stca::{load_checkpoint, save_checkpoint, StcaConfig, StcaParams};
use rand::SeedableRng;

fn main() {
    let dir = std::env::temp_dir().join("longrank_example");
    std::fs::create_dir_all(&dir).unwrap();

    // Model round-trip.
    let config = StcaConfig::desk();
    let mut rng = rand::rngs::StdRng::seed_from_u64(2);
    let params: StcaParams<f32> = StcaParams::init(&config, &mut rng).unwrap();
    let ckpt = dir.join("model.stca");
    save_checkpoint(&ckpt, &config, &params).unwrap();
    let bytes = std::fs::metadata(&ckpt).unwrap().len();
    let (config2, params2) = load_checkpoint(&ckpt).unwrap();
    println!(
        "checkpoint: {} tensors, {} parameters, {} bytes",
        params.params().len(),
        params.num_params(),
        bytes
    );
    assert_eq!(config, config2);

    let task = SyntheticTaskConfig {
        vocab: 1000,
        requests: 4,
        history_len: (32, 48),
        m: 3,
        signal_lag: (1, 8),
        signal_copies: 2,
        proxy_lag: (1, 1),
        proxy_copies: 0,
        proxy_strength: 1.0,
        noise: 0.1,
        clusters: 1000,
        seed: 3,
    };
    let requests = generate(&task).unwrap();
    for r in &requests {
        let a = rlb_forward(r, &params, &config).unwrap();
        let b = rlb_forward(r, &params2, &config2).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.y_hat == y.y_hat));
    }
    println!("reloaded model reproduces every score exactly");

    // Dataset round-trip, request-per-line.
    let data_path = dir.join("requests.jsonl");
    dataset::write_requests(&data_path, &requests).unwrap();
    let back = dataset::read_requests(&data_path).unwrap();
    assert_eq!(requests, back);
    println!(
        "dataset: {} requests round-trip through {}",
        back.len(),
        data_path.display()
    );

    // Flat triplets group back into the same requests.
    let triplets: Vec<Triplet> = requests
        .iter()
        .flat_map(|r| {
            r.targets.iter().zip(&r.labels).map(|(t, &label)| Triplet {
                user_id: r.user_id,
                session_id: None,
                history: r.history.clone(),
                target: t.clone(),
                label,
            })
        })
        .collect();
    let grouped = longrank::rlb::group_by_request(triplets, GroupKey::User).unwrap();
    assert_eq!(grouped.len(), requests.len());
    assert!(grouped
        .iter()
        .zip(&requests)
        .all(|(a, b)| a.targets == b.targets && a.labels == b.labels));
    println!("flat triplet converter regroups {} triplets into {} requests",
        requests.iter().map(|r| r.targets.len()).sum::<usize>(),
        grouped.len()
    );
    std::fs::remove_dir_all(&dir).ok();
}
