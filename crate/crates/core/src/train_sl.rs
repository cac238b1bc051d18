//! Supervised training: Adam on per-step cross-entropy where every step but
//! the last is labelled "fixate".

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grad::{self, Episode, EpisodeTargets, LossSpec};
use crate::optim::{AdamConfig, AdamState};
use crate::rnn::{self, NetworkParams};
use crate::rng;
use crate::task::{Action, TaskConfig, Trial};
use crate::trace::{Paradigm, Schedule, Snapshot, TraceRow, TrainStatus, TrainingTrace};

/// Seed stream indices; kept distinct so probe trials never overlap batches.
pub(crate) const PROBE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub schedule: Schedule,
}

impl Default for SlConfig {
    fn default() -> Self {
        SlConfig {
            adam: AdamConfig::default(),
            batch_size: 64,
            schedule: Schedule {
                max_updates: 5000,
                eval_interval: 25,
                checkpoint_interval: 0,
                accuracy_target: 0.95,
                probe_trials: 500,
            },
        }
    }
}

impl SlConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(crate::Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step labels: fixate everywhere except the final step.
pub fn sl_targets(trial: &Trial) -> Vec<usize> {
    let n = trial.len();
    (0..n)
        .map(|t| {
            if t + 1 == n {
                trial.correct_action.index()
            } else {
                Action::Fixate.index()
            }
        })
        .collect()
}

pub fn probe_set(task: &TaskConfig, n: usize, seed: u64) -> Vec<Trial> {
    task.sample_trials(n, &mut rng::stream(rng::derive_seed(seed, PROBE_STREAM)))
}

/// Cross-entropy loss and gradient over a batch of trials.
pub fn batch_grad(
    params: &NetworkParams,
    trials: &[Trial],
) -> Result<(grad::LossBreakdown, grad::NetworkGrads)> {
    let targets: Vec<EpisodeTargets> = trials
        .par_iter()
        .map(|t| EpisodeTargets {
            labels: sl_targets(t),
            ..Default::default()
        })
        .collect();
    let episodes: Vec<Episode<'_>> = trials
        .iter()
        .zip(&targets)
        .map(|(t, y)| Episode {
            inputs: &t.inputs,
            targets: y,
        })
        .collect();
    grad::bptt_grad(params, &episodes, &LossSpec::cross_entropy())
}

/// Trains until probe accuracy reaches the target or the update budget runs
/// out. Returns the final parameters and the trace.
pub fn train_supervised(
    mut params: NetworkParams,
    task: &TaskConfig,
    cfg: &SlConfig,
    seed: u64,
) -> Result<(NetworkParams, TrainingTrace)> {
    cfg.validate()?;
    task.validate()?;
    let sched = cfg.schedule;
    let probe = probe_set(task, sched.probe_trials, seed);
    let mut trace = TrainingTrace::new(Paradigm::Sl);
    let mut adam = AdamState::new(&params.tensors().map(|t| t.data.len()));

    let initial = rnn::evaluate(&params, &probe);
    trace.rows.push(TraceRow {
        update: 0,
        loss: f64::NAN,
        accuracy: initial.accuracy,
        decision_accuracy: initial.decision_accuracy,
    });
    trace.snapshots.push(Snapshot {
        update: 0,
        accuracy: initial.accuracy,
        params: params.clone(),
    });
    trace.final_accuracy = initial.accuracy;
    if initial.accuracy >= sched.accuracy_target {
        trace.status = TrainStatus::Success;
        return Ok((params, trace));
    }

    let mut loss_acc = 0.0;
    let mut loss_n = 0usize;
    for update in 1..=sched.max_updates {
        let batch = task.sample_trials(
            cfg.batch_size,
            &mut rng::stream(rng::derive_seed(seed, update as u64)),
        );
        let (loss, mut g) = match batch_grad(&params, &batch) {
            Ok(x) => x,
            Err(e) => {
                return Ok(fail(params, trace, update, e.to_string()));
            }
        };
        if !loss.total.is_finite() {
            return Ok(fail(params, trace, update, "non-finite loss".into()));
        }
        loss_acc += loss.total;
        loss_n += 1;
        {
            let mut ps = params.tensors_mut().map(|m| &mut m.data[..]);
            let mut gs = g.tensors_mut();
            adam.step(&mut ps, &mut gs, &cfg.adam);
        }
        trace.updates_used = update;

        if sched.checkpoint_interval > 0 && update % sched.checkpoint_interval == 0 {
            let st = rnn::evaluate(&params, &probe);
            trace.snapshots.push(Snapshot {
                update,
                accuracy: st.accuracy,
                params: params.clone(),
            });
        }
        if update % sched.eval_interval == 0 || update == sched.max_updates {
            let st = rnn::evaluate(&params, &probe);
            trace.rows.push(TraceRow {
                update,
                loss: loss_acc / loss_n.max(1) as f64,
                accuracy: st.accuracy,
                decision_accuracy: st.decision_accuracy,
            });
            loss_acc = 0.0;
            loss_n = 0;
            trace.final_accuracy = st.accuracy;
            if st.accuracy >= sched.accuracy_target {
                trace.status = TrainStatus::Success;
                break;
            }
        }
    }
    finish(&mut trace, &params);
    Ok((params, trace))
}

pub(crate) fn fail(
    params: NetworkParams,
    mut trace: TrainingTrace,
    update: usize,
    why: String,
) -> (NetworkParams, TrainingTrace) {
    trace.status = TrainStatus::Failure;
    trace.updates_used = update;
    trace.failure = Some(why);
    (params, trace)
}

pub(crate) fn finish(trace: &mut TrainingTrace, params: &NetworkParams) {
    if trace.snapshots.last().map(|s| s.update) != Some(trace.updates_used) {
        trace.snapshots.push(Snapshot {
            update: trace.updates_used,
            accuracy: trace.final_accuracy,
            params: params.clone(),
        });
    }
}
