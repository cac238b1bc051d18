//! Central finite-difference checks of the recurrent-network and
//! autoencoder gradients on toy instances (N = 8, T = 10).

use rand::Rng;
use rnnlab_core::embed::{grid_corpus, AutoencoderParams};
use rnnlab_core::grad::autoencoder::{ae_loss, ae_loss_grad};
use rnnlab_core::grad::{bptt_grad, episode_loss, Episode, EpisodeTargets, LossSpec};
use rnnlab_core::rng;
use rnnlab_core::task::{StageLengths, TaskConfig, TaskKind};
use rnnlab_core::NetworkParams;

pub const EPS: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-5;

pub fn short_task(kind: TaskKind) -> TaskConfig {
    let mut t = TaskConfig::new(kind);
    t.stages = StageLengths {
        fixation: 2,
        stimulus: 4,
        delay: 3,
        decision: 1,
    };
    t
}

/// Relative error with a floor of 1e-5 on the denominator: the difference
/// quotient carries roundoff of order 1e-11, which would dominate entries
/// whose true gradient is itself near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

fn check(params: &NetworkParams, episodes: &[Episode<'_>], spec: &LossSpec) -> f64 {
    let (_, g) = bptt_grad(params, episodes, spec).unwrap();
    let analytic = g.tensors().map(|s| s.to_vec());
    let mut worst = 0.0f64;
    for k in 0..4 {
        for i in 0..analytic[k].len() {
            let mut p = params.clone();
            p.tensors_mut()[k].data[i] += EPS;
            let up = episode_loss(&p, episodes, spec).unwrap().total;
            p.tensors_mut()[k].data[i] -= 2.0 * EPS;
            let down = episode_loss(&p, episodes, spec).unwrap().total;
            let fd = (up - down) / (2.0 * EPS);
            worst = worst.max(rel_err(analytic[k][i], fd));
        }
    }
    worst
}

fn toy_net(seed: u64) -> NetworkParams {
    let mut p = NetworkParams::init(8, 0.5, seed).unwrap();
    // Larger readouts make every head's gradient clearly nonzero.
    let mut r = rng::stream(seed ^ 0xabc);
    for m in [&mut p.w_ho, &mut p.w_hv] {
        m.data.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    }
    p
}

fn episodes<'a>(trials: &'a [rnnlab_core::Trial], targets: &'a [EpisodeTargets]) -> Vec<Episode<'a>> {
    trials
        .iter()
        .zip(targets)
        .map(|(t, y)| Episode {
            inputs: &t.inputs,
            targets: y,
        })
        .collect()
}

/// Worst relative error of the cross-entropy gradient over three seeds.
pub fn cross_entropy_error() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let p = toy_net(seed);
        let task = short_task(TaskKind::CtxDm);
        let trials = task.sample_trials(3, &mut rng::stream(seed + 10));
        assert_eq!(trials[0].len(), 10);
        let targets: Vec<EpisodeTargets> = trials
            .iter()
            .map(|t| EpisodeTargets {
                labels: rnnlab_core::train_sl::sl_targets(t),
                ..Default::default()
            })
            .collect();
        worst = worst.max(check(&p, &episodes(&trials, &targets), &LossSpec::cross_entropy()));
    }
    worst
}

/// Worst relative error of the clipped surrogate plus value loss, with and
/// without an entropy bonus.
pub fn ppo_error() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let p = toy_net(seed);
        let task = short_task(TaskKind::Dm);
        let trials = task.sample_trials(3, &mut rng::stream(seed + 20));
        let mut r = rng::stream(seed + 30);
        let targets: Vec<EpisodeTargets> = trials
            .iter()
            .map(|t| {
                let n = t.len();
                EpisodeTargets {
                    labels: Vec::new(),
                    actions: (0..n).map(|_| r.random_range(0..3)).collect(),
                    // Old policy a little off the current one so both the
                    // clipped and unclipped branches occur.
                    old_log_probs: (0..n).map(|_| r.random_range(-2.5..-0.2)).collect(),
                    advantages: (0..n).map(|_| r.random_range(-1.5..1.5)).collect(),
                    returns: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
                }
            })
            .collect();
        let eps = episodes(&trials, &targets);
        for entropy in [0.0, 0.01] {
            worst = worst.max(check(&p, &eps, &LossSpec::ppo(0.2, 0.5, entropy)));
        }
    }
    worst
}

/// Worst relative error of the autoencoder loss, including the Pearson
/// alignment term, for several alignment weights.
pub fn autoencoder_error() -> f64 {
    let net = NetworkParams::init(6, 0.4, 3).unwrap();
    let task = short_task(TaskKind::CtxDm);
    let batch = grid_corpus(&net, &task, &[-0.3, 0.1, 0.2], 1, 4);
    let mut worst = 0.0f64;
    for lambda in [0.0, 0.1, 1.0] {
        let p = AutoencoderParams::init(6, 5, 11);
        let (_, g) = ae_loss_grad(&p, &batch, lambda);
        for k in 0..8 {
            for i in 0..g.tensors()[k].data.len() {
                let mut q = p.clone();
                q.tensors_mut()[k].data[i] += EPS;
                let up = ae_loss(&q, &batch, lambda).total;
                q.tensors_mut()[k].data[i] -= 2.0 * EPS;
                let down = ae_loss(&q, &batch, lambda).total;
                let fd = (up - down) / (2.0 * EPS);
                worst = worst.max(rel_err(g.tensors()[k].data[i], fd));
            }
        }
    }
    worst
}
