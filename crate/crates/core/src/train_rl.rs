//! Proximal policy optimization with a shared recurrent actor-critic body.
//!
//! Episodes are collected with sampled actions, advantages come from GAE, and
//! updates run several epochs over minibatches of whole episodes so that
//! backpropagation through time stays exact.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grad::{self, Episode, EpisodeTargets, LossBreakdown, LossSpec};
use crate::optim::{AdamConfig, AdamState};
use crate::rnn::{self, ActionMode, NetworkParams, TrialRollout};
use crate::rng;
use crate::task::{Input, TaskConfig, Trial};
use crate::trace::{Paradigm, Schedule, Snapshot, TraceRow, TrainStatus, TrainingTrace};
use crate::train_sl::{fail, finish, probe_set};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub adam: AdamConfig,
    /// Episodes collected per update.
    pub rollout_trials: usize,
    pub epochs: usize,
    /// Episodes per minibatch.
    pub minibatch_trials: usize,
    pub normalize_advantages: bool,
    pub schedule: Schedule,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            entropy_coef: 0.0,
            value_coef: 0.5,
            adam: AdamConfig::default(),
            rollout_trials: 64,
            epochs: 10,
            minibatch_trials: 16,
            normalize_advantages: true,
            schedule: Schedule {
                max_updates: 2000,
                eval_interval: 10,
                checkpoint_interval: 0,
                accuracy_target: 0.95,
                probe_trials: 500,
            },
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.schedule.validate()?;
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && self.gae_lambda >= 0.0
            && self.gae_lambda <= 1.0
            && self.clip_eps > 0.0
            && self.value_coef >= 0.0
            && self.entropy_coef >= 0.0
            && self.rollout_trials > 0
            && self.epochs > 0
            && self.minibatch_trials > 0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidConfig(format!("bad PPO settings {self:?}")))
        }
    }

    pub fn loss_spec(&self) -> LossSpec {
        LossSpec::ppo(self.clip_eps, self.value_coef, self.entropy_coef)
    }
}

/// Generalized advantage estimation over one episode.
///
/// `values` has one more entry than `rewards`; the last is the bootstrap value
/// (0 for terminal states). Returns `(advantages, returns)`.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(values.len(), rewards.len() + 1, "values must include bootstrap");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// One collected episode with its PPO targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoEpisode {
    pub inputs: Vec<Input>,
    pub targets: EpisodeTargets,
    pub rollout_return: f64,
}

impl PpoEpisode {
    pub fn episode(&self) -> Episode<'_> {
        Episode {
            inputs: &self.inputs,
            targets: &self.targets,
        }
    }
}

fn to_episode(ro: &TrialRollout, cfg: &PpoConfig) -> PpoEpisode {
    let mut values = ro.values.clone();
    // Every episode ends terminally (decision or abort).
    values.push(0.0);
    let (advantages, returns) = gae(&ro.rewards, &values, cfg.gamma, cfg.gae_lambda);
    PpoEpisode {
        inputs: ro.inputs.clone(),
        targets: EpisodeTargets {
            labels: Vec::new(),
            actions: ro.actions.iter().map(|a| a.index()).collect(),
            old_log_probs: ro.log_probs.clone(),
            advantages,
            returns,
        },
        rollout_return: ro.total_return(),
    }
}

/// Samples one episode per trial with independent action streams.
pub fn collect(
    params: &NetworkParams,
    trials: &[Trial],
    cfg: &PpoConfig,
    seed: u64,
) -> Vec<PpoEpisode> {
    trials
        .par_iter()
        .enumerate()
        .map(|(i, tr)| {
            let mut r = rng::stream(rng::derive_seed(seed, i as u64));
            let ro = params.rollout(tr, ActionMode::Sample, &mut r);
            to_episode(&ro, cfg)
        })
        .collect()
}

/// Normalizes advantages to zero mean and unit variance across all steps.
pub fn normalize_advantages(episodes: &mut [PpoEpisode]) {
    let all: Vec<f64> = episodes
        .iter()
        .flat_map(|e| e.targets.advantages.iter().copied())
        .collect();
    let n = all.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    for e in episodes.iter_mut() {
        e.targets
            .advantages
            .iter_mut()
            .for_each(|a| *a = (*a - mean) / sd);
    }
}

/// Clipped-surrogate PPO loss (plus value and entropy terms) over episodes.
pub fn ppo_loss(
    params: &NetworkParams,
    episodes: &[PpoEpisode],
    cfg: &PpoConfig,
) -> Result<LossBreakdown> {
    let eps: Vec<Episode<'_>> = episodes.iter().map(|e| e.episode()).collect();
    grad::episode_loss(params, &eps, &cfg.loss_spec())
}

/// Trains with PPO until greedy probe accuracy reaches the target.
pub fn train_ppo(
    mut params: NetworkParams,
    task: &TaskConfig,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<(NetworkParams, TrainingTrace)> {
    cfg.validate()?;
    task.validate()?;
    let sched = cfg.schedule;
    let spec = cfg.loss_spec();
    let probe = probe_set(task, sched.probe_trials, seed);
    let mut trace = TrainingTrace::new(Paradigm::Rl);
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
        let useed = rng::derive_seed(seed, update as u64);
        let mut urng = rng::stream(useed);
        let trials = task.sample_trials(cfg.rollout_trials, &mut urng);
        let mut episodes = collect(&params, &trials, cfg, rng::derive_seed(useed, 1));
        if cfg.normalize_advantages {
            normalize_advantages(&mut episodes);
        }

        let mut order: Vec<usize> = (0..episodes.len()).collect();
        let mut update_loss = 0.0;
        let mut n_mb = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut urng);
            for chunk in order.chunks(cfg.minibatch_trials) {
                let mb: Vec<Episode<'_>> = chunk.iter().map(|&i| episodes[i].episode()).collect();
                let (loss, mut g) = match grad::bptt_grad(&params, &mb, &spec) {
                    Ok(x) => x,
                    Err(e) => return Ok(fail(params, trace, update, e.to_string())),
                };
                if !loss.total.is_finite() {
                    return Ok(fail(params, trace, update, "non-finite loss".into()));
                }
                update_loss += loss.total;
                n_mb += 1;
                let mut ps = params.tensors_mut().map(|m| &mut m.data[..]);
                adam.step(&mut ps, &mut g.tensors_mut(), &cfg.adam);
            }
        }
        loss_acc += update_loss / n_mb.max(1) as f64;
        loss_n += 1;
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
