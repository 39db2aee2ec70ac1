//! Synthetic ranking task with a planted long-range dependency.
//!
//! Items carry a latent cluster (`video_id % clusters`). A target is labeled
//! positive exactly when an item of its cluster occurs within the planted lag
//! window, measured backwards from the end of the full history, then the
//! label is flipped with the configured noise probability. Positive targets
//! get `signal_copies` window events planted with their cluster, which sets
//! the strength of the dependency. Truncating a history below the lag window
//! hides the signal, which is what the length-extrapolation experiments
//! exploit.
//!
//! An optional recency *proxy* mirrors real logs, where recent behavior
//! correlates with the label but the long tail decides it: target-cluster
//! events are planted near the end for `proxy_strength` of positives and
//! `1 - proxy_strength` of negatives. A model that only ever sees short
//! windows can climb to the proxy's accuracy ceiling; beating it requires
//! reading the decisive long-lag window.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rlb::Request;
use crate::stca::{HistoryEvent, TargetItem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskConfig {
    pub vocab: u32,
    pub requests: usize,
    /// Inclusive history length range.
    pub history_len: (usize, usize),
    /// Targets per request.
    pub m: usize,
    /// Inclusive lag window, in positions from the end (1 = last event).
    pub signal_lag: (usize, usize),
    /// Window events planted with the positive target's cluster.
    pub signal_copies: usize,
    /// Inclusive recency window of the correlated proxy feature.
    pub proxy_lag: (usize, usize),
    /// Events planted in the proxy window when the proxy fires; 0 disables.
    pub proxy_copies: usize,
    /// Probability the proxy agrees with the label.
    pub proxy_strength: f64,
    /// Label flip probability in [0, 0.5).
    pub noise: f64,
    /// Latent clusters; `vocab` makes matching exact-id.
    pub clusters: u32,
    pub seed: u64,
}

impl SyntheticTaskConfig {
    /// Long-lag task: a recency proxy carries partial signal, the decisive
    /// window sits beyond a short training view.
    pub fn desk_long_lag() -> Self {
        SyntheticTaskConfig {
            vocab: 200,
            requests: 512,
            history_len: (256, 320),
            m: 2,
            signal_lag: (80, 160),
            signal_copies: 24,
            proxy_lag: (1, 24),
            proxy_copies: 8,
            proxy_strength: 0.8,
            noise: 0.0,
            clusters: 200,
            seed: 17,
        }
    }

    /// Recency task: the decisive signal sits in the most recent events.
    pub fn desk_recency() -> Self {
        SyntheticTaskConfig {
            vocab: 200,
            requests: 512,
            history_len: (256, 320),
            m: 2,
            signal_lag: (1, 24),
            signal_copies: 8,
            proxy_lag: (1, 1),
            proxy_copies: 0,
            proxy_strength: 1.0,
            noise: 0.0,
            clusters: 200,
            seed: 17,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_len.0 == 0 || self.history_len.0 > self.history_len.1 {
            return Err(Error::Config(format!(
                "bad history length range {:?}",
                self.history_len
            )));
        }
        let window = self.signal_lag.1 - self.signal_lag.0 + 1;
        if self.signal_lag.0 == 0
            || self.signal_lag.0 > self.signal_lag.1
            || self.signal_lag.1 > self.history_len.0
        {
            return Err(Error::Config(format!(
                "lag window {:?} must sit inside every history (min len {})",
                self.signal_lag, self.history_len.0
            )));
        }
        if self.signal_copies == 0 || self.signal_copies > window {
            return Err(Error::Config(format!(
                "signal_copies {} must fit the lag window of {window}",
                self.signal_copies
            )));
        }
        if self.proxy_copies > 0 {
            let proxy_window = self.proxy_lag.1.saturating_sub(self.proxy_lag.0) + 1;
            if self.proxy_lag.0 == 0
                || self.proxy_lag.0 > self.proxy_lag.1
                || self.proxy_lag.1 > self.history_len.0
                || self.proxy_copies > proxy_window
            {
                return Err(Error::Config(format!(
                    "proxy window {:?} with {} copies does not fit",
                    self.proxy_lag, self.proxy_copies
                )));
            }
            if self.proxy_lag.1 >= self.signal_lag.0 {
                return Err(Error::Config(format!(
                    "proxy window {:?} must not overlap the signal window {:?}",
                    self.proxy_lag, self.signal_lag
                )));
            }
            if !(0.0..=1.0).contains(&self.proxy_strength) {
                return Err(Error::Config("proxy_strength outside [0, 1]".into()));
            }
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} outside [0, 0.5)", self.noise)));
        }
        if self.vocab < 4 || self.clusters == 0 || self.clusters > self.vocab {
            return Err(Error::Config("need 4 <= clusters <= vocab".into()));
        }
        if self.m == 0 || self.requests == 0 {
            return Err(Error::Config("need m >= 1 and requests >= 1".into()));
        }
        Ok(())
    }

    pub fn cluster_of(&self, video: u32) -> u32 {
        video % self.clusters
    }

    /// True label before noise: does the lag window hold a matching cluster?
    pub fn clean_label(&self, history: &[HistoryEvent], target_video: u32) -> u8 {
        let len = history.len();
        let target_cluster = self.cluster_of(target_video);
        let lo = self.signal_lag.0.min(len);
        let hi = self.signal_lag.1.min(len);
        for lag in lo..=hi {
            if self.cluster_of(history[len - lag].video_id) == target_cluster {
                return 1;
            }
        }
        0
    }

    /// Any vocab item of the given cluster, uniformly.
    fn item_of_cluster<R: Rng>(&self, cluster: u32, rng: &mut R) -> u32 {
        let per_cluster = (self.vocab - 1) / self.clusters;
        if per_cluster <= 1 {
            // One representative per cluster; keep ids in 1..vocab.
            return if cluster == 0 { self.clusters } else { cluster };
        }
        let step = rng.random_range(0..per_cluster);
        let candidate = cluster + step * self.clusters;
        if (1..self.vocab).contains(&candidate) {
            candidate
        } else if cluster == 0 {
            self.clusters
        } else {
            cluster
        }
    }
}

/// Deterministic synthetic corpus: one request per user, balanced labels.
pub fn generate(config: &SyntheticTaskConfig) -> Result<Vec<Request>> {
    config.validate()?;
    let mut rng = rand::rngs::StdRng::seed_from_u64(config.seed);
    let mut requests = Vec::with_capacity(config.requests);
    for user in 0..config.requests {
        // Corpus-unique user ids: two corpora never share users unless they
        // share the seed.
        let user_id = crate::rlb::user_token_hash(config.seed, user as u64);
        let len = rng.random_range(config.history_len.0..=config.history_len.1);
        let start_time = 1_000_000 + user as i64;
        let mut history: Vec<HistoryEvent> = (0..len)
            .map(|j| HistoryEvent {
                video_id: rng.random_range(1..config.vocab),
                action_type: rng.random_range(0..4),
                position: j as u32,
                timestamp: start_time + (j as i64) * 60,
            })
            .collect();
        let request_time = start_time + len as i64 * 60 + 30;

        // Choose one planted cluster per intended positive and write its
        // copies into the lag window before any label is decided.
        let positive_slots: Vec<usize> = (0..config.m).filter(|k| k % 2 == 0).collect();
        let mut planted: Vec<u32> = Vec::with_capacity(positive_slots.len());
        for _ in &positive_slots {
            let cluster = rng.random_range(0..config.clusters);
            for _ in 0..config.signal_copies {
                let lag = rng.random_range(config.signal_lag.0..=config.signal_lag.1.min(len));
                let slot = len - lag;
                history[slot].video_id = config.item_of_cluster(cluster, &mut rng);
            }
            planted.push(cluster);
        }

        let mut targets = Vec::with_capacity(config.m);
        let mut intended_positive = Vec::with_capacity(config.m);
        let mut planted_iter = planted.into_iter();
        for k in 0..config.m {
            let video = if k % 2 == 0 {
                let cluster = planted_iter.next().expect("one cluster per positive slot");
                config.item_of_cluster(cluster, &mut rng)
            } else {
                // Rejection-sample a cluster absent from the final window.
                let mut pick = rng.random_range(1..config.vocab);
                for _ in 0..64 {
                    if config.clean_label(&history, pick) == 0 {
                        break;
                    }
                    pick = rng.random_range(1..config.vocab);
                }
                pick
            };
            intended_positive.push(k % 2 == 0);
            targets.push(TargetItem {
                video_id: video,
                request_time,
            });
        }

        // The recency proxy: plant target-cluster events near the end for
        // most positives and few negatives. Never touches the signal window,
        // so labels stay decided by the long-range scan alone.
        if config.proxy_copies > 0 {
            for (k, target) in targets.iter().enumerate() {
                let fires = if intended_positive[k] {
                    rng.random_range(0.0..1.0) < config.proxy_strength
                } else {
                    rng.random_range(0.0..1.0) < 1.0 - config.proxy_strength
                };
                if !fires {
                    continue;
                }
                let cluster = config.cluster_of(target.video_id);
                for _ in 0..config.proxy_copies {
                    let lag = rng.random_range(config.proxy_lag.0..=config.proxy_lag.1.min(len));
                    let slot = len - lag;
                    history[slot].video_id = config.item_of_cluster(cluster, &mut rng);
                }
            }
        }

        let mut labels = Vec::with_capacity(config.m);
        for target in &targets {
            // Labels always come from a scan of the final history, so later
            // plants can never invalidate earlier labels.
            let mut label = config.clean_label(&history, target.video_id);
            if rng.random_range(0.0..1.0) < config.noise {
                label = 1 - label;
            }
            labels.push(label);
        }
        requests.push(Request::new(user_id, history, targets, labels)?);
    }
    Ok(requests)
}

/// Deterministic user split with no overlap: hashes the user id into ten
/// buckets, one bucket becomes the holdout.
pub fn split_by_user(requests: Vec<Request>, holdout_bucket: u64) -> (Vec<Request>, Vec<Request>) {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for r in requests {
        if crate::rlb::user_token_hash(r.user_id, 0xBEEF) % 10 == holdout_bucket % 10 {
            eval.push(r);
        } else {
            train.push(r);
        }
    }
    (train, eval)
}
