//! Backpropagation through time over complete trials.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::rnn::NetworkParams;
use crate::task::{Input, N_ACTIONS, N_INPUTS};

/// Gradient with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub w_hh: Mat,
    pub w_ih: Mat,
    pub w_ho: Mat,
    pub w_hv: Mat,
}

impl NetworkGrads {
    pub fn zeros(n_hidden: usize) -> Self {
        NetworkGrads {
            w_hh: Mat::zeros(n_hidden, n_hidden),
            w_ih: Mat::zeros(n_hidden, N_INPUTS),
            w_ho: Mat::zeros(N_ACTIONS, n_hidden),
            w_hv: Mat::zeros(1, n_hidden),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            &self.w_hh.data,
            &self.w_ih.data,
            &self.w_ho.data,
            &self.w_hv.data,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.w_hh.data,
            &mut self.w_ih.data,
            &mut self.w_ho.data,
            &mut self.w_hv.data,
        ]
    }

    pub fn add_assign(&mut self, other: &NetworkGrads) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            linalg::axpy(1.0, b, a);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        super::global_norm(&self.tensors())
    }
}

/// Weights of the loss heads. A head with weight 0 is skipped entirely and
/// contributes exactly nothing to loss or gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub cross_entropy: f64,
    pub ppo_surrogate: f64,
    pub value_mse: f64,
    /// Coefficient of the entropy bonus (the loss gets `-coef * H`).
    pub entropy_bonus: f64,
    pub clip_eps: f64,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        LossSpec {
            cross_entropy: 1.0,
            ppo_surrogate: 0.0,
            value_mse: 0.0,
            entropy_bonus: 0.0,
            clip_eps: 0.2,
        }
    }

    pub fn ppo(clip_eps: f64, value_coef: f64, entropy_coef: f64) -> Self {
        LossSpec {
            cross_entropy: 0.0,
            ppo_surrogate: 1.0,
            value_mse: value_coef,
            entropy_bonus: entropy_coef,
            clip_eps,
        }
    }
}

/// Per-step supervision for one episode. Only the vectors needed by the
/// active heads must be filled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTargets {
    pub labels: Vec<usize>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Episode<'a> {
    pub inputs: &'a [Input],
    pub targets: &'a EpisodeTargets,
}

/// Mean loss per step, split by head (unweighted) plus the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cross_entropy: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub steps: usize,
    /// Fraction of PPO steps where the clipped branch was active.
    pub clip_fraction: f64,
}

impl LossBreakdown {
    fn accumulate(&mut self, o: &LossBreakdown) {
        self.total += o.total;
        self.cross_entropy += o.cross_entropy;
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.steps += o.steps;
        self.clip_fraction += o.clip_fraction;
    }

    fn normalize(&mut self) {
        let n = self.steps.max(1) as f64;
        self.total /= n;
        self.cross_entropy /= n;
        self.policy /= n;
        self.value /= n;
        self.entropy /= n;
        self.clip_fraction /= n;
    }
}

/// Cached forward pass of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    pub n_hidden: usize,
    pub inputs: Vec<Input>,
    /// Pre-activations, `T x N` row-major.
    pub pre: Vec<f64>,
    /// Hidden states after each step, `T x N` row-major.
    pub hidden: Vec<f64>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn h(&self, t: usize) -> &[f64] {
        &self.hidden[t * self.n_hidden..(t + 1) * self.n_hidden]
    }
}

pub fn record_tape(params: &NetworkParams, inputs: &[Input]) -> Result<Tape> {
    let n = params.n_hidden();
    let mut pre = vec![0.0; inputs.len() * n];
    let mut hidden = vec![0.0; inputs.len() * n];
    let zero = vec![0.0; n];
    for (t, x) in inputs.iter().enumerate() {
        let (before, rest) = hidden.split_at_mut(t * n);
        let prev = if t == 0 { &zero[..] } else { &before[(t - 1) * n..] };
        let p = &mut pre[t * n..(t + 1) * n];
        params.drive_into(prev, x, p);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { step: t });
        }
        for (hv, &pv) in rest[..n].iter_mut().zip(p.iter()) {
            *hv = pv.max(0.0);
        }
    }
    Ok(Tape {
        n_hidden: n,
        inputs: inputs.to_vec(),
        pre,
        hidden,
    })
}

/// Per-step head losses and their gradients with respect to logits and value.
struct StepHeads {
    loss: LossBreakdown,
    dz: [f64; N_ACTIONS],
    dv: f64,
}

fn step_heads(
    z: &[f64; N_ACTIONS],
    v: f64,
    t: usize,
    targets: &EpisodeTargets,
    spec: &LossSpec,
) -> StepHeads {
    let lse = linalg::log_sum_exp(z);
    let mut logp = [0.0; N_ACTIONS];
    let mut p = [0.0; N_ACTIONS];
    for k in 0..N_ACTIONS {
        logp[k] = z[k] - lse;
        p[k] = logp[k].exp();
    }
    let mut out = StepHeads {
        loss: LossBreakdown {
            steps: 1,
            ..Default::default()
        },
        dz: [0.0; N_ACTIONS],
        dv: 0.0,
    };

    if spec.cross_entropy != 0.0 {
        let y = targets.labels[t];
        out.loss.cross_entropy = -logp[y];
        out.loss.total += spec.cross_entropy * out.loss.cross_entropy;
        for k in 0..N_ACTIONS {
            let g = p[k] - if k == y { 1.0 } else { 0.0 };
            out.dz[k] += spec.cross_entropy * g;
        }
    }

    if spec.ppo_surrogate != 0.0 {
        let a = targets.actions[t];
        let adv = targets.advantages[t];
        let ratio = (logp[a] - targets.old_log_probs[t]).exp();
        let clipped = ratio.clamp(1.0 - spec.clip_eps, 1.0 + spec.clip_eps);
        let (s1, s2) = (ratio * adv, clipped * adv);
        let surrogate = s1.min(s2);
        out.loss.policy = -surrogate;
        out.loss.total += spec.ppo_surrogate * out.loss.policy;
        if s1 <= s2 {
            // d(-ratio * A)/dz_k = -A * ratio * (1[k = a] - p_k)
            let c = -spec.ppo_surrogate * adv * ratio;
            for k in 0..N_ACTIONS {
                out.dz[k] += c * ((if k == a { 1.0 } else { 0.0 }) - p[k]);
            }
        } else {
            out.loss.clip_fraction = 1.0;
        }
    }

    if spec.value_mse != 0.0 {
        let r = targets.returns[t];
        out.loss.value = (v - r) * (v - r);
        out.loss.total += spec.value_mse * out.loss.value;
        out.dv = spec.value_mse * 2.0 * (v - r);
    }

    if spec.entropy_bonus != 0.0 {
        let h: f64 = -(0..N_ACTIONS).map(|k| p[k] * logp[k]).sum::<f64>();
        out.loss.entropy = h;
        out.loss.total -= spec.entropy_bonus * h;
        for k in 0..N_ACTIONS {
            out.dz[k] += spec.entropy_bonus * p[k] * (logp[k] + h);
        }
    }
    out
}

/// Summed (not averaged) loss and gradient of one episode.
fn episode_grad(
    params: &NetworkParams,
    ep: &Episode<'_>,
    spec: &LossSpec,
    with_grad: bool,
) -> Result<(LossBreakdown, Option<NetworkGrads>)> {
    let tape = record_tape(params, ep.inputs)?;
    let n = params.n_hidden();
    let len = tape.len();
    let mut loss = LossBreakdown::default();
    let mut dzs = Vec::with_capacity(len);
    let mut dvs = Vec::with_capacity(len);
    for t in 0..len {
        let h = tape.h(t);
        let z = params.logits(h);
        let v = params.value(h);
        let s = step_heads(&z, v, t, ep.targets, spec);
        loss.accumulate(&s.loss);
        dzs.push(s.dz);
        dvs.push(s.dv);
    }
    if !with_grad {
        return Ok((loss, None));
    }

    let mut g = NetworkGrads::zeros(n);
    let mut dh = vec![0.0; n];
    let mut carry = vec![0.0; n];
    let mut dpre = vec![0.0; n];
    let zero = vec![0.0; n];
    for t in (0..len).rev() {
        let h = tape.h(t);
        g.w_ho.rank1_acc(1.0, &dzs[t], h);
        if dvs[t] != 0.0 {
            linalg::axpy(dvs[t], h, g.w_hv.row_mut(0));
        }
        dh.copy_from_slice(&carry);
        params.w_ho.matvec_t_acc(&dzs[t], &mut dh);
        if dvs[t] != 0.0 {
            linalg::axpy(dvs[t], params.w_hv.row(0), &mut dh);
        }
        let pre = &tape.pre[t * n..(t + 1) * n];
        for i in 0..n {
            // ReLU'(0) := 0
            dpre[i] = if pre[i] > 0.0 { dh[i] } else { 0.0 };
        }
        let prev = if t == 0 { &zero[..] } else { tape.h(t - 1) };
        g.w_hh.rank1_acc(1.0, &dpre, prev);
        g.w_ih.rank1_acc(1.0, &dpre, &tape.inputs[t]);
        carry.iter_mut().for_each(|v| *v = 0.0);
        if t > 0 {
            params.w_hh.matvec_t_acc(&dpre, &mut carry);
        }
    }
    Ok((loss, Some(g)))
}

/// Pairwise reduction in fixed order, independent of thread scheduling.
fn pairwise_sum(mut parts: Vec<NetworkGrads>) -> Option<NetworkGrads> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.add_assign(&b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

/// Exact gradient of the step-averaged loss over a batch of episodes.
pub fn bptt_grad(
    params: &NetworkParams,
    episodes: &[Episode<'_>],
    spec: &LossSpec,
) -> Result<(LossBreakdown, NetworkGrads)> {
    let results: Vec<Result<(LossBreakdown, Option<NetworkGrads>)>> = episodes
        .par_iter()
        .map(|ep| episode_grad(params, ep, spec, true))
        .collect();
    let mut loss = LossBreakdown::default();
    let mut parts = Vec::with_capacity(results.len());
    for r in results {
        let (l, g) = r?;
        loss.accumulate(&l);
        parts.push(g.expect("gradient requested"));
    }
    let steps = loss.steps.max(1) as f64;
    let mut g = pairwise_sum(parts).unwrap_or_else(|| NetworkGrads::zeros(params.n_hidden()));
    g.scale(1.0 / steps);
    loss.normalize();
    Ok((loss, g))
}

/// Step-averaged loss without the backward pass.
pub fn episode_loss(
    params: &NetworkParams,
    episodes: &[Episode<'_>],
    spec: &LossSpec,
) -> Result<LossBreakdown> {
    let mut loss = LossBreakdown::default();
    for ep in episodes {
        loss.accumulate(&episode_grad(params, ep, spec, false)?.0);
    }
    loss.normalize();
    Ok(loss)
}
