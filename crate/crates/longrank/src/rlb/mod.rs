//! Request-level batching: group every target that shares one user history,
//! encode the history once, reuse it across all m targets, and aggregate the
//! per-user loss.

pub mod dataset;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::stca::{
    backward_shared, backward_target, bce_loss, forward_shared, forward_target, stca_forward,
    HistoryEvent, SharedGrad, SharedHistory, StcaConfig, StcaOutput, StcaParams, TargetItem,
    TargetPass,
};

/// Number of synthetic user-side feature slots derived per request.
pub const USER_TOKEN_SLOTS: usize = 8;

/// Deterministic FNV-1a over the user id and slot, stable across builds.
pub fn user_token_hash(user_id: u64, slot: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in user_id.to_le_bytes().iter().chain(slot.to_le_bytes().iter()) {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// One user's history and the m targets (with labels) sharing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub user_id: u64,
    pub session_id: Option<u64>,
    pub history: Vec<HistoryEvent>,
    pub targets: Vec<TargetItem>,
    pub labels: Vec<u8>,
    /// Synthetic user-side feature ids standing in for profile features.
    pub user_tokens: Vec<u64>,
}

impl Request {
    pub fn new(
        user_id: u64,
        history: Vec<HistoryEvent>,
        targets: Vec<TargetItem>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let req = Request {
            user_id,
            session_id: None,
            history,
            targets,
            labels,
            user_tokens: (0..USER_TOKEN_SLOTS as u64)
                .map(|k| user_token_hash(user_id, k))
                .collect(),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn targets_per_request(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.history.is_empty() {
            return Err(Error::EmptyHistory { segment: 0 });
        }
        if self.targets.is_empty() || self.targets.len() != self.labels.len() {
            return Err(Error::Config(format!(
                "request {} has {} targets and {} labels",
                self.user_id,
                self.targets.len(),
                self.labels.len()
            )));
        }
        Ok(())
    }
}

/// A flat (user, history, target, label) training record.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub user_id: u64,
    pub session_id: Option<u64>,
    pub history: Vec<HistoryEvent>,
    pub target: TargetItem,
    pub label: u8,
}

/// Grouping key for request formation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    User,
    /// Multi-request sharing for the same user/session.
    UserSession,
}

/// Group flat triplets into requests. Triplets sharing a key must carry
/// identical histories; within-group target order is preserved and the total
/// target count is conserved.
pub fn group_by_request(triplets: Vec<Triplet>, key: GroupKey) -> Result<Vec<Request>> {
    let mut order: Vec<(u64, Option<u64>)> = Vec::new();
    let mut groups: HashMap<(u64, Option<u64>), Request> = HashMap::new();
    for t in triplets {
        let k = match key {
            GroupKey::User => (t.user_id, None),
            GroupKey::UserSession => (t.user_id, t.session_id),
        };
        match groups.get_mut(&k) {
            None => {
                order.push(k);
                let mut req = Request::new(t.user_id, t.history, vec![t.target], vec![t.label])?;
                req.session_id = match key {
                    GroupKey::UserSession => t.session_id,
                    GroupKey::User => None,
                };
                groups.insert(k, req);
            }
            Some(req) => {
                if req.history != t.history {
                    return Err(Error::GroupingConflict { user_id: t.user_id });
                }
                req.targets.push(t.target);
                req.labels.push(t.label);
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|k| groups.remove(&k).expect("key recorded on insert"))
        .collect())
}

/// Compute-once, reuse-m-times forward: the history tensors are built once
/// per request and shared across all m targets.
pub fn rlb_forward<T: Real>(
    request: &Request,
    params: &StcaParams<T>,
    config: &StcaConfig,
) -> Result<Vec<StcaOutput<T>>> {
    request.validate()?;
    let shared = forward_shared(&request.history, &request.targets[0], params, config)?;
    request
        .targets
        .iter()
        .map(|t| {
            forward_target(&shared, t, &request.user_tokens, params, config)
                .map(|p| p.output(config))
        })
        .collect()
}

/// Forward keeping every cache, for training.
pub fn rlb_forward_cached<'a, T: Real>(
    history: &[HistoryEvent],
    request: &'a Request,
    params: &StcaParams<T>,
    config: &StcaConfig,
) -> Result<(SharedHistory<T>, Vec<TargetPass<T>>)> {
    let shared = forward_shared(history, &request.targets[0], params, config)?;
    let passes = request
        .targets
        .iter()
        .map(|t| forward_target(&shared, t, &request.user_tokens, params, config))
        .collect::<Result<Vec<_>>>()?;
    Ok((shared, passes))
}

/// The same scores computed the slow way: one full forward per target.
pub fn triplet_forward<T: Real>(
    request: &Request,
    params: &StcaParams<T>,
    config: &StcaConfig,
) -> Result<Vec<StcaOutput<T>>> {
    request
        .targets
        .iter()
        .map(|t| stca_forward(&request.history, t, &request.user_tokens, params, config))
        .collect()
}

/// How per-target losses are aggregated into the batch objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Average per user first, then across users.
    PerUser,
    /// Every target weighted equally, for A/B comparison.
    Flat,
}

/// Per-user average of target BCE, then averaged across users.
pub fn rlb_loss<T: Real>(requests: &[Request], y_hats: &[Vec<T>]) -> Result<T> {
    loss_with_mode(requests, y_hats, LossMode::PerUser)
}

pub fn loss_with_mode<T: Real>(
    requests: &[Request],
    y_hats: &[Vec<T>],
    mode: LossMode,
) -> Result<T> {
    if requests.len() != y_hats.len() {
        return Err(Error::Config(format!(
            "{} requests but {} score groups",
            requests.len(),
            y_hats.len()
        )));
    }
    match mode {
        LossMode::PerUser => {
            let mut total = T::ZERO;
            for (req, ys) in requests.iter().zip(y_hats) {
                let mut inner = T::ZERO;
                for (&y_hat, &y) in ys.iter().zip(&req.labels) {
                    inner += bce_loss(y_hat, y);
                }
                total += inner / T::from_f64(ys.len() as f64);
            }
            Ok(total / T::from_f64(requests.len() as f64))
        }
        LossMode::Flat => {
            let mut total = T::ZERO;
            let mut n = 0usize;
            for (req, ys) in requests.iter().zip(y_hats) {
                for (&y_hat, &y) in ys.iter().zip(&req.labels) {
                    total += bce_loss(y_hat, y);
                    n += 1;
                }
            }
            Ok(total / T::from_f64(n as f64))
        }
    }
}

/// Per-target gradient weight under the chosen aggregation.
pub fn loss_weight<T: Real>(mode: LossMode, requests: usize, m: usize, total_targets: usize) -> T {
    match mode {
        LossMode::PerUser => T::from_f64(1.0 / (requests as f64 * m as f64)),
        LossMode::Flat => T::from_f64(1.0 / total_targets as f64),
    }
}

/// Full training backward for one request: every target backward against the
/// shared history, then one pass through the shared path.
pub fn rlb_backward<T: Real>(
    shared: &SharedHistory<T>,
    passes: &[TargetPass<T>],
    d_logits: &[T],
    params: &mut StcaParams<T>,
    config: &StcaConfig,
) -> Result<()> {
    let mut shared_grad = SharedGrad::zeros(shared.len(), config);
    for (pass, &dl) in passes.iter().zip(d_logits) {
        backward_target(pass, shared, dl, params, config, &mut shared_grad)?;
    }
    backward_shared(shared, &shared_grad, params, config)
}

/// Payload accounting for one request: user/history bytes U shared by the
/// request, per-target bytes T.
#[derive(Debug, Clone, Copy)]
pub struct PayloadModel {
    pub user_bytes: u64,
    pub target_bytes: u64,
    pub targets_per_request: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Triplet,
    Rlb,
}

/// Bytes moved per request: triplet batching retransmits the user payload per
/// target, request-level batching sends it once.
pub fn payload_bytes(model: &PayloadModel, mode: BatchMode) -> u64 {
    let m = model.targets_per_request;
    match mode {
        BatchMode::Triplet => m * (model.user_bytes + model.target_bytes),
        BatchMode::Rlb => model.user_bytes + m * model.target_bytes,
    }
}

/// Fraction of the user payload saved: 1 - 1/m.
pub fn user_payload_saving(m: u64) -> f64 {
    1.0 - 1.0 / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(video: u32, pos: u32) -> HistoryEvent {
        HistoryEvent {
            video_id: video,
            action_type: 0,
            position: pos,
            timestamp: 1000 + pos as i64,
        }
    }

    fn tgt(video: u32) -> TargetItem {
        TargetItem {
            video_id: video,
            request_time: 5000,
        }
    }

    fn triplet(user: u64, videos: &[u32], target: u32, label: u8) -> Triplet {
        Triplet {
            user_id: user,
            session_id: None,
            history: videos.iter().enumerate().map(|(i, &v)| ev(v, i as u32)).collect(),
            target: tgt(target),
            label,
        }
    }

    #[test]
    fn eight_triplets_one_user_group_to_m8() {
        let triplets: Vec<Triplet> =
            (0..8).map(|k| triplet(1, &[1, 2, 3], 10 + k as u32, (k % 2) as u8)).collect();
        let requests = group_by_request(triplets, GroupKey::User).unwrap();
        assert_eq!(requests.len(), 1);
        assert_eq!(requests[0].targets_per_request(), 8);
        assert_eq!(requests[0].labels, vec![0, 1, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn four_users_two_targets_each() {
        let mut triplets = Vec::new();
        for u in 0..4 {
            for k in 0..2 {
                triplets.push(triplet(u, &[u as u32 + 1], 20 + k, 1));
            }
        }
        let requests = group_by_request(triplets, GroupKey::User).unwrap();
        assert_eq!(requests.len(), 4);
        assert!(requests.iter().all(|r| r.targets_per_request() == 2));
    }

    #[test]
    fn shuffled_input_regroups_to_same_multiset() {
        let mut triplets = Vec::new();
        for u in 0..5u64 {
            for k in 0..3u32 {
                triplets.push(triplet(u, &[u as u32, u as u32 + 1], 30 + k, (k % 2) as u8));
            }
        }
        let a = group_by_request(triplets.clone(), GroupKey::User).unwrap();
        // Deterministic shuffle: reverse then interleave.
        let mut shuffled = Vec::new();
        let mut front = 0usize;
        let mut back = triplets.len();
        while front < back {
            back -= 1;
            shuffled.push(triplets[back].clone());
            if front < back {
                shuffled.push(triplets[front].clone());
                front += 1;
            }
        }
        let b = group_by_request(shuffled, GroupKey::User).unwrap();
        let canon = |mut reqs: Vec<Request>| {
            for r in &mut reqs {
                let mut pairs: Vec<_> =
                    r.targets.iter().cloned().zip(r.labels.iter().copied()).collect();
                pairs.sort_by_key(|(t, _)| t.video_id);
                r.targets = pairs.iter().map(|(t, _)| t.clone()).collect();
                r.labels = pairs.iter().map(|(_, l)| *l).collect();
            }
            reqs.sort_by_key(|r| r.user_id);
            reqs
        };
        assert_eq!(canon(a), canon(b));
    }

    #[test]
    fn conflicting_histories_are_rejected() {
        let triplets = vec![triplet(7, &[1, 2], 5, 0), triplet(7, &[1, 3], 6, 1)];
        assert!(matches!(
            group_by_request(triplets, GroupKey::User),
            Err(Error::GroupingConflict { user_id: 7 })
        ));
    }

    #[test]
    fn session_key_separates_requests() {
        let mut a = triplet(9, &[1], 2, 0);
        a.session_id = Some(1);
        let mut b = triplet(9, &[4], 3, 1);
        b.session_id = Some(2);
        let reqs = group_by_request(vec![a, b], GroupKey::UserSession).unwrap();
        assert_eq!(reqs.len(), 2);
    }

    #[test]
    fn shared_forward_matches_independent_forwards_in_single_precision() {
        use crate::stca::{StcaConfig, StcaParams};
        use rand::SeedableRng;
        let config = StcaConfig::toy();
        let mut rng = rand::rngs::StdRng::seed_from_u64(21);
        let params: StcaParams<f32> = StcaParams::init(&config, &mut rng).unwrap();
        let request = Request::new(
            3,
            (0..10).map(|j| ev(1 + j % 7, j)).collect(),
            (0..8).map(|k| tgt(2 + k)).collect(),
            vec![0, 1, 0, 1, 0, 1, 0, 1],
        )
        .unwrap();
        let shared = rlb_forward(&request, &params, &config).unwrap();
        let independent = triplet_forward(&request, &params, &config).unwrap();
        for (a, b) in shared.iter().zip(&independent) {
            assert!((a.y_hat - b.y_hat).abs() < 1e-6);
        }
    }

    #[test]
    fn per_user_loss_means() {
        // Inner mean: one user with per-target losses (0.2, 0.4) -> 0.3.
        // Synthesize via y=1 and y_hat = e^-loss.
        let r1 = Request::new(1, vec![ev(1, 0)], vec![tgt(2), tgt(3)], vec![1, 1]).unwrap();
        let ys1 = vec![(-0.2f64).exp(), (-0.4f64).exp()];
        let loss = rlb_loss(std::slice::from_ref(&r1), std::slice::from_ref(&ys1)).unwrap();
        assert!((loss - 0.3).abs() < 1e-12);

        // Outer mean: users at 0.3 and 0.5 -> 0.4.
        let r2 = Request::new(2, vec![ev(1, 0)], vec![tgt(2), tgt(3)], vec![1, 1]).unwrap();
        let ys2 = vec![(-0.5f64).exp(), (-0.5f64).exp()];
        let loss = rlb_loss(&[r1, r2], &[ys1, ys2]).unwrap();
        assert!((loss - 0.4).abs() < 1e-12);
    }

    #[test]
    fn equal_m_equals_flat_mean() {
        let reqs: Vec<Request> = (0..6)
            .map(|u| {
                Request::new(u, vec![ev(1, 0)], vec![tgt(2), tgt(3), tgt(4)], vec![1, 0, 1]).unwrap()
            })
            .collect();
        let ys: Vec<Vec<f64>> = (0..6)
            .map(|u| vec![0.3 + 0.05 * u as f64, 0.4, 0.9 - 0.02 * u as f64])
            .collect();
        let per_user = rlb_loss(&reqs, &ys).unwrap();
        let flat = loss_with_mode(&reqs, &ys, LossMode::Flat).unwrap();
        assert!((per_user - flat).abs() < 1e-12);
    }

    #[test]
    fn payload_accounting() {
        let m8 = PayloadModel {
            user_bytes: 800,
            target_bytes: 100,
            targets_per_request: 8,
        };
        assert_eq!(payload_bytes(&m8, BatchMode::Triplet), 7200);
        assert_eq!(payload_bytes(&m8, BatchMode::Rlb), 1600);
        assert_eq!(user_payload_saving(8), 0.875);
        assert_eq!(user_payload_saving(1), 0.0);
        let m1 = PayloadModel {
            user_bytes: 800,
            target_bytes: 100,
            targets_per_request: 1,
        };
        assert_eq!(
            payload_bytes(&m1, BatchMode::Triplet),
            payload_bytes(&m1, BatchMode::Rlb)
        );
    }
}
