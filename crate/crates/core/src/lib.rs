//! Reinforcement-learning and supervised training of vanilla ReLU recurrent
//! networks on perceptual decision tasks, plus the analyses applied to the
//! trained networks: attractor classification over coherence space,
//! template-based population labels, copula mutual information and a
//! correlation-aligned autoencoder embedding.

pub mod checkpoint;
pub mod dynamics;
pub mod embed;
pub mod ensemble;
pub mod error;
pub mod grad;
pub mod infotheory;
pub mod linalg;
pub mod optim;
pub mod populations;
pub mod rng;
pub mod rnn;
pub mod task;
pub mod trace;
pub mod train_rl;
pub mod train_sl;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use rnn::{ActionMode, EvalStats, NetworkParams, TrialRollout};
pub use task::{Action, Context, Stage, StageLengths, TaskConfig, TaskKind, Trial, TrialSpec};
pub use trace::{Paradigm, TrainStatus, TrainingTrace};
