//! Every backward pass in the model is hand-derived; this checks the full
//! stack against central finite differences at f64 and reports the worst
//! relative error per parameter group.
//!
//! Run: cargo run --release --example gradient_check

use longrank::rlb::{loss_weight, rlb_backward, rlb_forward, rlb_forward_cached, LossMode, Request};
use longrank::stca::{bce_grad_logit, HistoryEvent, StcaConfig, StcaParams, TargetItem};
use rand::{Rng, SeedableRng};

fn toy_request(rng: &mut impl Rng, vocab: u32, len: usize, m: usize) -> Request {
    let history = (0..len)
        .map(|j| HistoryEvent {
            video_id: rng.random_range(1..vocab),
            action_type: rng.random_range(0..3),
            position: j as u32,
            timestamp: 1000 + 60 * j as i64,
        })
        .collect();
    let targets = (0..m)
        .map(|_| TargetItem {
            video_id: rng.random_range(1..vocab),
            request_time: 1000 + 60 * len as i64 + 5,
        })
        .collect();
    let labels = (0..m).map(|k| (k % 2) as u8).collect();
    Request::new(7, history, targets, labels).unwrap()
}

fn main() {
    let config = StcaConfig::toy();
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut params: StcaParams<f64> = StcaParams::init(&config, &mut rng).unwrap();
    let request = toy_request(&mut rng, config.video_vocab as u32, 8, 2);

    let loss_of = |params: &StcaParams<f64>| -> f64 {
        let outs = rlb_forward(&request, params, &config).unwrap();
        outs.iter()
            .zip(&request.labels)
            .map(|(o, &y)| longrank::stca::bce_loss(o.y_hat, y))
            .sum::<f64>()
            / outs.len() as f64
    };

    // Analytic gradients for the mean per-target loss.
    let (shared, passes) = rlb_forward_cached(&request.history, &request, &params, &config).unwrap();
    let w: f64 = loss_weight(LossMode::PerUser, 1, request.targets.len(), request.targets.len());
    let d_logits: Vec<f64> = passes
        .iter()
        .zip(&request.labels)
        .map(|(p, &y)| bce_grad_logit(p.y_hat, y) * w)
        .collect();
    rlb_backward(&shared, &passes, &d_logits, &mut params, &config).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = params
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();

    let h = 1e-5;
    println!("central finite differences, step {h}, model d={} h={} M={}:", config.d, config.heads, config.layers);
    println!("  {:<24} {:>8} {:>12}", "group", "entries", "worst rel");
    let mut overall: f64 = 0.0;
    for (gi, (name, grads)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (idx, &a) in grads.iter().enumerate() {
            let original = params.params()[gi].value.data()[idx];
            params.params_mut()[gi].value.data_mut()[idx] = original + h;
            let up = loss_of(&params);
            params.params_mut()[gi].value.data_mut()[idx] = original - h;
            let down = loss_of(&params);
            params.params_mut()[gi].value.data_mut()[idx] = original;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        overall = overall.max(worst);
        println!("  {:<24} {:>8} {:>12.2e}", name, grads.len(), worst);
    }
    println!("\nworst relative error across every group: {overall:.2e} (tolerance 1e-4)");
    assert!(overall < 1e-4);
}
