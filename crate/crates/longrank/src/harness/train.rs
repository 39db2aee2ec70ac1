//! The training loop and evaluation pass.
//!
//! Each step: draw a batch of requests, sample a stochastic training length
//! per request, select the temporal suffix (or the random-subset ablation),
//! truncate against the batch token budget, account the ragged layout, run
//! the request-level forward, aggregate the per-user loss, backpropagate, and
//! apply Adam. Runs are bit-reproducible for a fixed seed because every
//! reduction happens in a fixed order on one thread.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::config::{CurriculumPhase, TrainSection};
use super::metrics::{metrics, Metrics};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::extrapolation::{
    select_random, select_suffix, LengthSampler, LengthSamplerConfig, SelectionPolicy,
};
use crate::numerics::{counter, Matrix, Real};
use crate::ragged::{allocate_lengths, compact, RaggedBatch, TokenBudget};
use crate::rlb::{loss_weight, loss_with_mode, rlb_backward, rlb_forward_cached, Request};
use crate::stca::{bce_grad_logit, HistoryEvent, StcaConfig, StcaParams};

/// One line of the metrics log.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub auc: Option<f64>,
    pub nll: f64,
    pub tokens_processed: u64,
    pub encoder_invocations: u64,
}

/// How training lengths are drawn.
pub enum LengthSchedule {
    Stochastic(LengthSamplerConfig),
    Fixed(usize),
}

struct Phase {
    steps: usize,
    schedule: LengthSchedule,
}

fn build_phases(
    base: &LengthSamplerConfig,
    train: &TrainSection,
) -> Result<Vec<Phase>> {
    if let Some(fixed) = train.fixed_len {
        return Ok(vec![Phase {
            steps: train.steps,
            schedule: LengthSchedule::Fixed(fixed),
        }]);
    }
    if train.curriculum.is_empty() {
        return Ok(vec![Phase {
            steps: train.steps,
            schedule: LengthSchedule::Stochastic(*base),
        }]);
    }
    train
        .curriculum
        .iter()
        .map(|CurriculumPhase { steps, l_max }| {
            // A phase capped at or below the target average trains fixed.
            let schedule = if *l_max <= base.l_avg {
                LengthSchedule::Fixed(*l_max)
            } else {
                LengthSchedule::Stochastic(LengthSamplerConfig {
                    l_max: *l_max,
                    l_infer: base.l_infer.max(*l_max),
                    ..*base
                })
            };
            Ok(Phase {
                steps: *steps,
                schedule,
            })
        })
        .collect()
}

fn sample_requested<R: Rng>(
    schedule: &LengthSchedule,
    sampler: Option<&LengthSampler>,
    history_len: usize,
    rng: &mut R,
) -> usize {
    let drawn = match schedule {
        LengthSchedule::Fixed(l) => *l,
        LengthSchedule::Stochastic(_) => sampler
            .expect("sampler built for stochastic phases")
            .sample_length(rng),
    };
    drawn.min(history_len).max(1)
}

fn avg_len(schedule: &LengthSchedule) -> usize {
    match schedule {
        LengthSchedule::Fixed(l) => *l,
        LengthSchedule::Stochastic(cfg) => cfg.l_avg,
    }
}

/// Exercise the compaction layout for one batch when the budget is exactly
/// met, and return the token total either way.
fn account_ragged<T: Real>(histories: &[Vec<HistoryEvent>], avg: usize) -> Result<u64> {
    let id_sequences: Vec<Matrix<T>> = histories
        .iter()
        .map(|h| {
            let mut m = Matrix::zeros(h.len(), 1);
            for (i, ev) in h.iter().enumerate() {
                m.set(i, 0, T::from_f64(ev.video_id as f64));
            }
            m
        })
        .collect();
    let batch = RaggedBatch::from_sequences(&id_sequences)?;
    let total = batch.total_tokens() as u64;
    if batch.total_tokens() == histories.len() * avg {
        let packed = compact(&batch, avg)?;
        debug_assert_eq!(packed.unpack().len(), histories.len());
    }
    Ok(total)
}

/// Train in place over `data`, returning the per-step metrics log.
pub fn train<T: Real>(
    params: &mut StcaParams<T>,
    model: &StcaConfig,
    length: &LengthSamplerConfig,
    selection: SelectionPolicy,
    data: &[Request],
    section: &TrainSection,
    seed: u64,
) -> Result<Vec<StepRecord>> {
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let loss_mode = section.loss_mode()?;
    let phases = build_phases(length, section)?;
    let mut adam: Adam<T> = Adam::new(section.adam());
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed ^ 0x7261696e);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let batch_size = section.batch_size.max(1).min(data.len());

    counter::reset();
    let mut log = Vec::new();
    let mut records_tokens = 0u64;
    let mut global_step = 0usize;
    for phase in &phases {
        let sampler = match &phase.schedule {
            LengthSchedule::Stochastic(cfg) => Some(LengthSampler::new(*cfg)?),
            LengthSchedule::Fixed(_) => None,
        };
        let budget_len = avg_len(&phase.schedule);
        for _ in 0..phase.steps {
            // Next batch of requests, reshuffling at epoch boundaries.
            let mut batch_idx = Vec::with_capacity(batch_size);
            for _ in 0..batch_size {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                batch_idx.push(order[cursor]);
                cursor += 1;
            }

            // Stochastic lengths, clamped to each history, then budgeted.
            let requested: Vec<usize> = batch_idx
                .iter()
                .map(|&i| {
                    sample_requested(&phase.schedule, sampler.as_ref(), data[i].history.len(), &mut rng)
                })
                .collect();
            let budget = TokenBudget {
                batch: batch_idx.len(),
                avg_len: budget_len,
            };
            let allocated = allocate_lengths(&requested, &budget)?;

            // Subsequence selection per request.
            let histories: Vec<Vec<HistoryEvent>> = batch_idx
                .iter()
                .zip(&allocated)
                .map(|(&i, &l)| match selection {
                    SelectionPolicy::Suffix => select_suffix(&data[i].history, l).to_vec(),
                    SelectionPolicy::Random => select_random(&data[i].history, l, &mut rng),
                })
                .collect();
            records_tokens += account_ragged::<T>(&histories, budget_len)?;

            // Request-level forward/backward.
            let total_targets: usize = batch_idx.iter().map(|&i| data[i].targets.len()).sum();
            let mut y_hats: Vec<Vec<T>> = Vec::with_capacity(batch_idx.len());
            let mut scores = Vec::with_capacity(total_targets);
            let mut labels = Vec::with_capacity(total_targets);
            for (&i, history) in batch_idx.iter().zip(&histories) {
                let request = &data[i];
                let (shared, passes) = rlb_forward_cached(history, request, params, model)?;
                let weight: T =
                    loss_weight(loss_mode, batch_idx.len(), request.targets.len(), total_targets);
                let d_logits: Vec<T> = passes
                    .iter()
                    .zip(&request.labels)
                    .map(|(p, &y)| bce_grad_logit(p.y_hat, y) * weight)
                    .collect();
                rlb_backward(&shared, &passes, &d_logits, params, model)?;
                for (p, &y) in passes.iter().zip(&request.labels) {
                    scores.push(p.y_hat.to_f64());
                    labels.push(y);
                }
                y_hats.push(passes.iter().map(|p| p.y_hat).collect());
            }
            let batch_requests: Vec<Request> =
                batch_idx.iter().map(|&i| data[i].clone()).collect();
            let loss = loss_with_mode(&batch_requests, &y_hats, loss_mode)?.to_f64();

            let mut param_list = params.params_mut();
            adam.step(&mut param_list);
            drop(param_list);
            params.zero_grads();

            let auc = super::metrics::auc(&scores, &labels).ok();
            let nll = super::metrics::nll(&scores, &labels)?;
            log.push(StepRecord {
                step: global_step,
                loss,
                auc,
                nll,
                tokens_processed: records_tokens,
                encoder_invocations: counter::encoder_invocations(),
            });
            global_step += 1;
        }
    }
    Ok(log)
}

/// Deterministic evaluation at a given inference length: histories are
/// suffix-truncated to `l_infer`, scored request by request.
pub fn evaluate<T: Real>(
    params: &StcaParams<T>,
    model: &StcaConfig,
    data: &[Request],
    l_infer: usize,
) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::Config("empty evaluation set".into()));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for request in data {
        let history = select_suffix(&request.history, l_infer);
        let (_, passes) = rlb_forward_cached(history, request, params, model)?;
        for (p, &y) in passes.iter().zip(&request.labels) {
            scores.push(p.y_hat.to_f64());
            labels.push(y);
        }
    }
    metrics(&scores, &labels)
}

/// Forward-only scores at a given inference length, in dataset order.
pub fn score_all<T: Real>(
    params: &StcaParams<T>,
    model: &StcaConfig,
    data: &[Request],
    l_infer: usize,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for request in data {
        let history = select_suffix(&request.history, l_infer);
        let (_, passes) = rlb_forward_cached(history, request, params, model)?;
        for (p, &y) in passes.iter().zip(&request.labels) {
            scores.push(p.y_hat.to_f64());
            labels.push(y);
        }
    }
    Ok((scores, labels))
}
