//! Training traces shared by both trainers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnn::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(rename = "RL")]
    Rl,
    #[serde(rename = "SL")]
    Sl,
}

impl Paradigm {
    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Rl => "RL",
            Paradigm::Sl => "SL",
        }
    }
}

impl std::str::FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rl" | "ppo" => Ok(Paradigm::Rl),
            "sl" | "adam" => Ok(Paradigm::Sl),
            other => Err(Error::InvalidConfig(format!("unknown paradigm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStatus {
    Success,
    Failure,
    BudgetExceeded,
}

impl TrainStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrainStatus::Success => "success",
            TrainStatus::Failure => "failure",
            TrainStatus::BudgetExceeded => "budget-exceeded",
        }
    }
}

/// One evaluation point. `loss` is the mean training loss since the previous
/// row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub update: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub decision_accuracy: f64,
}

/// Parameters captured during training, tagged with their probe accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub update: usize,
    pub accuracy: f64,
    pub params: NetworkParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub paradigm: Paradigm,
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot>,
    pub status: TrainStatus,
    pub updates_used: usize,
    pub final_accuracy: f64,
    pub failure: Option<String>,
}

impl TrainingTrace {
    pub fn new(paradigm: Paradigm) -> Self {
        TrainingTrace {
            paradigm,
            rows: Vec::new(),
            snapshots: Vec::new(),
            status: TrainStatus::BudgetExceeded,
            updates_used: 0,
            final_accuracy: 0.0,
            failure: None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("update,loss,accuracy,decision_accuracy\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.update, r.loss, r.accuracy, r.decision_accuracy
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Shared loop bookkeeping: decides when to evaluate, snapshot and stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub max_updates: usize,
    pub eval_interval: usize,
    /// Snapshot every this many updates (0: only initial and final).
    pub checkpoint_interval: usize,
    pub accuracy_target: f64,
    pub probe_trials: usize,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.eval_interval == 0 || self.probe_trials == 0 {
            return Err(Error::InvalidConfig(
                "eval_interval and probe_trials must be positive".into(),
            ));
        }
        if !(self.accuracy_target > 0.0 && self.accuracy_target <= 1.0) {
            return Err(Error::InvalidConfig(
                "accuracy_target must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}
