//! Vanilla ReLU recurrent network with policy and value readouts.
//!
//! The state update is `h' = ReLU(W_hh h + W_ih x)` with no bias. Logits are
//! `W_ho h'`, the critic reads `W_hv h'`. The initial state of every trial is
//! the origin.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::rng::{self, RngStream};
use crate::task::{step_reward, Action, Input, Stage, Trial, N_ACTIONS, N_INPUTS};

/// Half-width of the uniform distribution used for the readouts.
pub const READOUT_INIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub w_hh: Mat,
    pub w_ih: Mat,
    /// Policy readout, `N_ACTIONS x N_hidden`.
    pub w_ho: Mat,
    /// Value readout, `1 x N_hidden`.
    pub w_hv: Mat,
    /// Initialization half-width that produced `w_hh` and `w_ih`.
    pub delta: f64,
}

impl NetworkParams {
    /// Samples recurrent and input weights from `U(-delta, delta)` and the
    /// readouts from `U(-0.1, 0.1)`.
    pub fn init(n_hidden: usize, delta: f64, seed: u64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "initialization width must be positive, got {delta}"
            )));
        }
        if n_hidden == 0 {
            return Err(Error::InvalidConfig("n_hidden must be positive".into()));
        }
        let mut rng = rng::stream(seed);
        let mut uniform = |rows, cols, w: f64| {
            Mat::from_fn(rows, cols, |_, _| rng.random_range(-w..w))
        };
        let w_hh = uniform(n_hidden, n_hidden, delta);
        let w_ih = uniform(n_hidden, N_INPUTS, delta);
        let w_ho = uniform(N_ACTIONS, n_hidden, READOUT_INIT);
        let w_hv = uniform(1, n_hidden, READOUT_INIT);
        Ok(NetworkParams {
            w_hh,
            w_ih,
            w_ho,
            w_hv,
            delta,
        })
    }

    pub fn zeros(n_hidden: usize) -> Self {
        NetworkParams {
            w_hh: Mat::zeros(n_hidden, n_hidden),
            w_ih: Mat::zeros(n_hidden, N_INPUTS),
            w_ho: Mat::zeros(N_ACTIONS, n_hidden),
            w_hv: Mat::zeros(1, n_hidden),
            delta: 0.0,
        }
    }

    pub fn n_hidden(&self) -> usize {
        self.w_hh.rows
    }

    pub fn tensors(&self) -> [&Mat; 4] {
        [&self.w_hh, &self.w_ih, &self.w_ho, &self.w_hv]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 4] {
        [&mut self.w_hh, &mut self.w_ih, &mut self.w_ho, &mut self.w_hv]
    }

    pub fn check_shapes(&self) -> Result<()> {
        let n = self.n_hidden();
        let ok = self.w_hh.cols == n
            && (self.w_ih.rows, self.w_ih.cols) == (n, N_INPUTS)
            && (self.w_ho.rows, self.w_ho.cols) == (N_ACTIONS, n)
            && (self.w_hv.rows, self.w_hv.cols) == (1, n);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("inconsistent network parameter shapes".into()))
        }
    }

    /// Pre-activation `W_hh h + W_ih x`.
    #[inline]
    pub fn drive_into(&self, h: &[f64], x: &Input, out: &mut [f64]) {
        self.w_hh.matvec_into(h, out);
        for (o, row) in out.iter_mut().zip(self.w_ih.data.chunks_exact(N_INPUTS)) {
            *o += linalg::dot(row, x);
        }
    }

    #[inline]
    pub fn step_into(&self, h: &[f64], x: &Input, out: &mut [f64]) {
        self.drive_into(h, x, out);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }

    pub fn step(&self, h: &[f64], x: &Input) -> Vec<f64> {
        let mut out = vec![0.0; self.n_hidden()];
        self.step_into(h, x, &mut out);
        out
    }

    #[inline]
    pub fn logits(&self, h: &[f64]) -> [f64; N_ACTIONS] {
        let mut z = [0.0; N_ACTIONS];
        self.w_ho.matvec_into(h, &mut z);
        z
    }

    /// Action probabilities `softmax(W_ho h)`.
    pub fn policy(&self, h: &[f64]) -> [f64; N_ACTIONS] {
        let p = linalg::softmax(&self.logits(h));
        [p[0], p[1], p[2]]
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        linalg::dot(self.w_hv.row(0), h)
    }

    /// Hidden states after every step, open loop (`T x N` row-major).
    pub fn forward_hidden(&self, inputs: &[Input]) -> Vec<f64> {
        let n = self.n_hidden();
        let mut hs = vec![0.0; inputs.len() * n];
        let mut prev = vec![0.0; n];
        for (t, x) in inputs.iter().enumerate() {
            let out = &mut hs[t * n..(t + 1) * n];
            self.step_into(&prev, x, out);
            prev.copy_from_slice(out);
        }
        hs
    }

    /// Runs the trial until it ends or the agent breaks fixation.
    pub fn rollout(&self, trial: &Trial, mode: ActionMode, rng: &mut RngStream) -> TrialRollout {
        let n = self.n_hidden();
        let mut h = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut ro = TrialRollout {
            inputs: Vec::with_capacity(trial.len()),
            hidden: Vec::with_capacity(trial.len()),
            logits: Vec::with_capacity(trial.len()),
            actions: Vec::with_capacity(trial.len()),
            log_probs: Vec::with_capacity(trial.len()),
            values: Vec::with_capacity(trial.len()),
            rewards: Vec::with_capacity(trial.len()),
            stages: Vec::with_capacity(trial.len()),
            correct_action: trial.correct_action,
            aborted: false,
        };
        for (x, &stage) in trial.inputs.iter().zip(&trial.stages) {
            self.step_into(&h, x, &mut next);
            std::mem::swap(&mut h, &mut next);
            let z = self.logits(&h);
            let p = linalg::softmax(&z);
            let a = match mode {
                ActionMode::Argmax => linalg::argmax(&z),
                ActionMode::Sample => sample_categorical(&p, rng),
            };
            let action = Action::from_index(a);
            let out = step_reward(stage, action, trial.correct_action);
            ro.inputs.push(*x);
            ro.hidden.push(h.clone());
            ro.logits.push(z);
            ro.actions.push(action);
            ro.log_probs.push(z[a] - linalg::log_sum_exp(&z));
            ro.values.push(self.value(&h));
            ro.rewards.push(out.reward);
            ro.stages.push(stage);
            if out.abort {
                ro.aborted = true;
                break;
            }
        }
        ro
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionMode {
    Sample,
    Argmax,
}

pub fn sample_categorical(p: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Everything recorded while an agent runs one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRollout {
    pub inputs: Vec<Input>,
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<[f64; N_ACTIONS]>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub stages: Vec<Stage>,
    pub correct_action: Action,
    pub aborted: bool,
}

impl TrialRollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn outcome(&self) -> TrialOutcome {
        if self.aborted {
            return TrialOutcome::Aborted;
        }
        match self.actions.last() {
            Some(&a) if a == self.correct_action => TrialOutcome::Correct,
            Some(Action::Fixate) | None => TrialOutcome::NoChoice,
            Some(_) => TrialOutcome::Wrong,
        }
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    Correct,
    Wrong,
    Aborted,
    NoChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    /// Fraction of trials completed without breaking fixation and ending in
    /// the correct choice (greedy actions).
    pub accuracy: f64,
    /// Fraction of trials whose final-step choice logits rank the correct
    /// choice above the wrong one, ignoring fixation and aborts.
    pub decision_accuracy: f64,
    pub abort_rate: f64,
}

/// Greedy evaluation on a fixed probe set.
pub fn evaluate(params: &NetworkParams, trials: &[Trial]) -> EvalStats {
    let n = params.n_hidden();
    let mut correct = 0usize;
    let mut decided = 0usize;
    let mut aborted = 0usize;
    for trial in trials {
        let hs = params.forward_hidden(&trial.inputs);
        let t_end = trial.len();
        let mut abort = false;
        let mut last = Action::Fixate;
        for t in 0..t_end {
            let z = params.logits(&hs[t * n..(t + 1) * n]);
            let a = Action::from_index(linalg::argmax(&z));
            if trial.stages[t] != Stage::Decision && a != Action::Fixate {
                abort = true;
                break;
            }
            last = a;
        }
        let z = params.logits(&hs[(t_end - 1) * n..t_end * n]);
        let (c, w) = match trial.correct_action {
            Action::Choice1 => (z[1], z[2]),
            _ => (z[2], z[1]),
        };
        if c > w {
            decided += 1;
        }
        if abort {
            aborted += 1;
        } else if last == trial.correct_action {
            correct += 1;
        }
    }
    let m = trials.len().max(1) as f64;
    EvalStats {
        accuracy: correct as f64 / m,
        decision_accuracy: decided as f64 / m,
        abort_rate: aborted as f64 / m,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::task::{Context, StageLengths, TaskConfig, TaskKind, TrialSpec};

    /// Integrator network that fixates until the fixation cue drops and then
    /// reports the sign of the accumulated A1 - A2 evidence.
    pub(crate) fn oracle_network() -> NetworkParams {
        let mut p = NetworkParams::zeros(3);
        p.w_ih.set(0, 0, 1.0);
        p.w_hh.set(1, 1, 1.0);
        p.w_hh.set(2, 2, 1.0);
        p.w_ih.set(1, 1, 1.0);
        p.w_ih.set(1, 2, -1.0);
        p.w_ih.set(2, 1, -1.0);
        p.w_ih.set(2, 2, 1.0);
        p.w_ho.set(0, 0, 100.0);
        p.w_ho.set(1, 1, 1.0);
        p.w_ho.set(1, 2, -1.0);
        p.w_ho.set(2, 1, -1.0);
        p.w_ho.set(2, 2, 1.0);
        p
    }

    #[test]
    fn init_is_bounded_and_deterministic() {
        for delta in [0.01, 0.1] {
            let p = NetworkParams::init(200, delta, 5).unwrap();
            assert!(p.w_hh.max_abs() <= delta);
            assert!(p.w_ih.max_abs() <= delta);
            assert!(p.w_ho.max_abs() <= READOUT_INIT);
            assert!(p.w_hv.max_abs() <= READOUT_INIT);
            let n = p.w_hh.data.len() as f64;
            let mean = p.w_hh.data.iter().sum::<f64>() / n;
            let var = p.w_hh.data.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let expect = delta * delta / 3.0;
            // 40k samples: relative std of the variance estimate is ~0.6%.
            assert!((var / expect - 1.0).abs() < 0.03, "var {var} vs {expect}");
        }
        assert_eq!(
            NetworkParams::init(16, 0.2, 9).unwrap(),
            NetworkParams::init(16, 0.2, 9).unwrap()
        );
        assert!(NetworkParams::init(16, 0.0, 9).is_err());
        assert!(NetworkParams::init(16, -1.0, 9).is_err());
    }

    #[test]
    fn step_edge_cases() {
        let p = NetworkParams::init(6, 0.5, 1).unwrap();
        assert!(p.step(&[0.0; 6], &[0.0; 7]).iter().all(|&v| v == 0.0));
        let mut q = p.clone();
        q.w_hh.fill(0.0);
        let mut e1 = [0.0; 7];
        e1[0] = 1.0;
        let h = q.step(&[0.3; 6], &e1);
        for i in 0..6 {
            assert_eq!(h[i], q.w_ih.get(i, 0).max(0.0));
        }
    }

    #[test]
    fn step_matches_reference() {
        let p = NetworkParams::init(4, 0.7, 3).unwrap();
        let h = [0.2, 0.0, 1.3, 0.4];
        let x = [1.0, 0.3, -0.2, 0.5, 0.1, 1.0, 0.0];
        let got = p.step(&h, &x);
        for i in 0..4 {
            let mut s = 0.0;
            for j in 0..4 {
                s += p.w_hh.data[i * 4 + j] * h[j];
            }
            for j in 0..7 {
                s += p.w_ih.data[i * 7 + j] * x[j];
            }
            assert!((got[i] - s.max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_at_origin_is_uniform() {
        let p = NetworkParams::init(8, 0.1, 2).unwrap();
        let pr = p.policy(&[0.0; 8]);
        for v in pr {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let h: Vec<f64> = (0..8).map(|i| i as f64 * 3.0).collect();
        let pr = p.policy(&h);
        assert!(pr.iter().all(|&v| v > 0.0));
        assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_rollouts_repeat() {
        let p = NetworkParams::init(16, 0.3, 4).unwrap();
        let spec = TrialSpec {
            task: TaskKind::CtxDm,
            context: Context::B,
            coh_a: 0.1,
            coh_b: -0.2,
            stages: StageLengths::default(),
            noise: 0.0,
            seed: 1,
        };
        let trial = Trial::from_spec(&spec);
        let a = p.rollout(&trial, ActionMode::Argmax, &mut rng::stream(1));
        let b = p.rollout(&trial, ActionMode::Argmax, &mut rng::stream(99));
        assert_eq!(a, b);
        assert!(a.hidden.iter().flatten().all(|&v| v >= 0.0));
        if !a.aborted {
            assert_eq!(a.len(), trial.len());
        }
    }

    #[test]
    fn oracle_network_is_perfect() {
        let p = oracle_network();
        let mut cfg = TaskConfig::new(TaskKind::Dm);
        cfg.noise = 0.0;
        let trials = cfg.sample_trials(200, &mut rng::stream(8));
        let st = evaluate(&p, &trials);
        assert_eq!(st.accuracy, 1.0);
        assert_eq!(st.decision_accuracy, 1.0);
        for tr in trials.iter().take(20) {
            let ro = p.rollout(tr, ActionMode::Argmax, &mut rng::stream(0));
            assert_eq!(ro.outcome(), TrialOutcome::Correct);
            assert_eq!(ro.total_return(), 1.0);
            assert_eq!(ro.len(), tr.len());
        }
    }

    #[test]
    fn untrained_networks_are_at_chance() {
        let cfg = TaskConfig::new(TaskKind::Dm);
        let trials = cfg.sample_trials(400, &mut rng::stream(12));
        let mut acc = 0.0;
        let nets = 20;
        for s in 0..nets {
            let p = NetworkParams::init(32, 0.1, s).unwrap();
            acc += evaluate(&p, &trials).decision_accuracy;
        }
        let mean = acc / nets as f64;
        assert!((mean - 0.5).abs() < 0.1, "mean decision accuracy {mean}");
    }

    #[test]
    fn homogeneous_without_boundary_crossing() {
        let p = NetworkParams::init(10, 0.4, 21).unwrap();
        let h: Vec<f64> = (0..10).map(|i| 0.1 + 0.05 * i as f64).collect();
        let x = [1.0, 0.4, 0.6, 0.5, 0.5, 1.0, 0.0];
        let base = p.step(&h, &x);
        let hs: Vec<f64> = h.iter().map(|v| v * 2.5).collect();
        let xs = x.map(|v| v * 2.5);
        let scaled = p.step(&hs, &xs);
        for (a, b) in base.iter().zip(&scaled) {
            assert!((2.5 * a - b).abs() < 1e-12);
        }
    }
}
