//! Decision-making trials: staged inputs, additive noise, labels and rewards.
//!
//! Channel order of every input vector is `F, A1, A2, B1, B2, C_A, C_B`. This
//! order is part of the checkpoint contract.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, RngStream};

pub const N_INPUTS: usize = 7;
pub const N_ACTIONS: usize = 3;
pub const CHANNEL_ORDER: [&str; N_INPUTS] = ["F", "A1", "A2", "B1", "B2", "C_A", "C_B"];

/// Sum of each stimulus pair (`A1 + A2 = B1 + B2`).
pub const STIMULUS_GAIN: f64 = 1.0;

/// Coherence magnitudes sampled during training (both signs are used).
pub const TRAINING_COHERENCES: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

pub type Input = [f64; N_INPUTS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Dm,
    CtxDm,
}

impl TaskKind {
    /// Contexts in which the task is ever presented.
    pub fn contexts(self) -> &'static [Context] {
        match self {
            TaskKind::Dm => &[Context::A],
            TaskKind::CtxDm => &[Context::A, Context::B],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Dm => "dm",
            TaskKind::CtxDm => "ctxdm",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dm" => Ok(TaskKind::Dm),
            "ctxdm" => Ok(TaskKind::CtxDm),
            other => Err(Error::InvalidConfig(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Context {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Fixation,
    Stimulus,
    Delay,
    Decision,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Fixation => "fixation",
            Stage::Stimulus => "stimulus",
            Stage::Delay => "delay",
            Stage::Decision => "decision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Fixate = 0,
    Choice1 = 1,
    Choice2 = 2,
}

impl Action {
    pub fn from_index(i: usize) -> Action {
        match i {
            0 => Action::Fixate,
            1 => Action::Choice1,
            2 => Action::Choice2,
            _ => panic!("action index {i} out of range"),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLengths {
    pub fixation: usize,
    pub stimulus: usize,
    pub delay: usize,
    pub decision: usize,
}

impl Default for StageLengths {
    fn default() -> Self {
        StageLengths {
            fixation: 5,
            stimulus: 20,
            delay: 10,
            decision: 1,
        }
    }
}

impl StageLengths {
    pub fn total(&self) -> usize {
        self.fixation + self.stimulus + self.delay + self.decision
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixation == 0 || self.stimulus == 0 || self.delay == 0 || self.decision == 0 {
            return Err(Error::InvalidConfig(
                "all stage lengths must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn stage_of_step(&self, t: usize) -> Stage {
        if t < self.fixation {
            Stage::Fixation
        } else if t < self.fixation + self.stimulus {
            Stage::Stimulus
        } else if t < self.fixation + self.stimulus + self.delay {
            Stage::Delay
        } else {
            Stage::Decision
        }
    }
}

/// Configuration of a single episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub task: TaskKind,
    pub context: Context,
    pub coh_a: f64,
    pub coh_b: f64,
    pub stages: StageLengths,
    /// Amplitude of the uniform input noise.
    pub noise: f64,
    pub seed: u64,
}

impl TrialSpec {
    pub fn validate(&self) -> Result<()> {
        self.stages.validate()?;
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidConfig("noise amplitude must be >= 0".into()));
        }
        for c in [self.coh_a, self.coh_b] {
            if !(-1.0..=1.0).contains(&c) {
                return Err(Error::InvalidConfig(format!("coherence {c} outside [-1, 1]")));
            }
        }
        if self.task == TaskKind::Dm && self.context != Context::A {
            return Err(Error::InvalidConfig("DM trials use context A".into()));
        }
        Ok(())
    }

    /// Coherence of the context-relevant stimulus pair.
    pub fn primary_coherence(&self) -> f64 {
        match self.context {
            Context::A => self.coh_a,
            Context::B => self.coh_b,
        }
    }

    /// Coherence of the pair that must be ignored.
    pub fn secondary_coherence(&self) -> f64 {
        match self.context {
            Context::A => self.coh_b,
            Context::B => self.coh_a,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.stages.total()
    }
}

/// Noise-free channel values for one stage of a trial.
pub fn pure_input(spec: &TrialSpec, stage: Stage) -> Input {
    let mut x = [0.0; N_INPUTS];
    let g = STIMULUS_GAIN;
    if stage != Stage::Decision {
        x[0] = 1.0;
    }
    if stage == Stage::Stimulus {
        x[1] = 0.5 * (g + spec.coh_a);
        x[2] = 0.5 * (g - spec.coh_a);
        if spec.task == TaskKind::CtxDm {
            x[3] = 0.5 * (g + spec.coh_b);
            x[4] = 0.5 * (g - spec.coh_b);
        }
    }
    match spec.task {
        TaskKind::Dm => x[5] = 1.0,
        TaskKind::CtxDm => {
            if stage != Stage::Decision {
                match spec.context {
                    Context::A => x[5] = 1.0,
                    Context::B => x[6] = 1.0,
                }
            }
        }
    }
    x
}

/// A generated trial: noisy inputs plus labels. Produced before any network
/// runs; inputs never depend on the agent's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub spec: TrialSpec,
    pub inputs: Vec<Input>,
    pub stages: Vec<Stage>,
    pub correct_action: Action,
}

impl Trial {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Generates the trial from the spec's own seed.
    pub fn from_spec(spec: &TrialSpec) -> Trial {
        generate_trial(spec, &mut rng::stream(spec.seed))
    }
}

/// Full noisy input sequence and correct answer for a trial.
pub fn generate_trial(spec: &TrialSpec, rng: &mut RngStream) -> Trial {
    let prim = spec.primary_coherence();
    let correct_action = if prim > 0.0 {
        Action::Choice1
    } else if prim < 0.0 {
        Action::Choice2
    } else if rng.random_bool(0.5) {
        Action::Choice1
    } else {
        Action::Choice2
    };
    let n = spec.total_steps();
    let mut inputs = Vec::with_capacity(n);
    let mut stages = Vec::with_capacity(n);
    for t in 0..n {
        let stage = spec.stages.stage_of_step(t);
        let mut x = pure_input(spec, stage);
        if spec.noise > 0.0 {
            for v in x.iter_mut() {
                *v += spec.noise * rng.random_range(-1.0..1.0);
            }
        }
        inputs.push(x);
        stages.push(stage);
    }
    Trial {
        spec: *spec,
        inputs,
        stages,
        correct_action,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub abort: bool,
}

/// Reward for taking `action` during `stage`.
pub fn step_reward(stage: Stage, action: Action, correct: Action) -> StepOutcome {
    match (stage, action) {
        (Stage::Decision, a) if a == correct => StepOutcome {
            reward: 1.0,
            abort: false,
        },
        (Stage::Decision, _) => StepOutcome {
            reward: 0.0,
            abort: false,
        },
        (_, Action::Fixate) => StepOutcome {
            reward: 0.0,
            abort: false,
        },
        (_, _) => StepOutcome {
            reward: -1.0,
            abort: true,
        },
    }
}

/// Distribution over trials used for training and probing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: TaskKind,
    pub stages: StageLengths,
    pub noise: f64,
    /// Coherence magnitudes; each draw picks a magnitude and a random sign.
    pub coherences: Vec<f64>,
}

impl TaskConfig {
    pub fn new(task: TaskKind) -> Self {
        TaskConfig {
            task,
            stages: StageLengths::default(),
            noise: 0.05,
            coherences: TRAINING_COHERENCES.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stages.validate()?;
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidConfig("noise amplitude must be >= 0".into()));
        }
        if self.coherences.is_empty() {
            return Err(Error::InvalidConfig("empty coherence set".into()));
        }
        Ok(())
    }

    fn draw_coherence(&self, rng: &mut RngStream) -> f64 {
        let mag = self.coherences[rng.random_range(0..self.coherences.len())];
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    }

    /// Draws a trial spec; the trial's own seed is taken from the same stream.
    pub fn sample_spec(&self, rng: &mut RngStream) -> TrialSpec {
        let coh_a = self.draw_coherence(rng);
        let (context, coh_b) = match self.task {
            TaskKind::Dm => (Context::A, 0.0),
            TaskKind::CtxDm => {
                let c = if rng.random_bool(0.5) { Context::A } else { Context::B };
                (c, self.draw_coherence(rng))
            }
        };
        TrialSpec {
            task: self.task,
            context,
            coh_a,
            coh_b,
            stages: self.stages,
            noise: self.noise,
            seed: rng.random(),
        }
    }

    /// Draws `n` complete trials from one stream.
    pub fn sample_trials(&self, n: usize, rng: &mut RngStream) -> Vec<Trial> {
        (0..n)
            .map(|_| Trial::from_spec(&self.sample_spec(rng)))
            .collect()
    }
}
