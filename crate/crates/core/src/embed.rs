//! Low-dimensional embedding of hidden-state trajectories with an
//! autoencoder whose first two code units are pulled towards the primary
//! and secondary coherence.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::autoencoder::{ae_loss, ae_loss_grad, forward, AeLoss};
use crate::linalg::Mat;
use crate::optim::{AdamConfig, AdamState};
use crate::rng;
use crate::rnn::NetworkParams;
use crate::task::{Action, Stage, TaskConfig, Trial, TrialSpec};

pub const CODE_DIM: usize = 3;

/// `N -> H -> 3 -> H -> N` with tanh on both hidden layers. Biases are
/// column matrices so every tensor is a `Mat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
    pub w3: Mat,
    pub b3: Mat,
    pub w4: Mat,
    pub b4: Mat,
}

impl AutoencoderParams {
    /// Weights from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    pub fn init(n_in: usize, hidden: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed);
        let mut layer = |o: usize, i: usize| {
            let a = 1.0 / (i as f64).sqrt();
            (
                Mat::from_fn(o, i, |_, _| r.random_range(-a..a)),
                Mat::zeros(o, 1),
            )
        };
        let (w1, b1) = layer(hidden, n_in);
        let (w2, b2) = layer(CODE_DIM, hidden);
        let (w3, b3) = layer(hidden, CODE_DIM);
        let (w4, b4) = layer(n_in, hidden);
        AutoencoderParams {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            w4,
            b4,
        }
    }

    pub fn zeros_like(p: &AutoencoderParams) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows, m.cols);
        AutoencoderParams {
            w1: z(&p.w1),
            b1: z(&p.b1),
            w2: z(&p.w2),
            b2: z(&p.b2),
            w3: z(&p.w3),
            b3: z(&p.b3),
            w4: z(&p.w4),
            b4: z(&p.b4),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w1.cols
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows
    }

    pub fn code_dim(&self) -> usize {
        self.w2.rows
    }

    pub fn tensors(&self) -> [&Mat; 8] {
        [
            &self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3, &self.w4, &self.b4,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 8] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
            &mut self.w4,
            &mut self.b4,
        ]
    }
}

/// Hidden states with per-row annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub n_hidden: usize,
    /// `n x N` row-major.
    pub activity: Vec<f64>,
    pub coh_prim: Vec<f64>,
    pub coh_sec: Vec<f64>,
    pub stage: Vec<Stage>,
    /// Greedy choice of the network on the row's trial.
    pub choice: Vec<Action>,
    /// Rows entering the alignment term.
    pub align_mask: Vec<bool>,
}

impl EmbeddingBatch {
    pub fn len(&self) -> usize {
        self.coh_prim.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coh_prim.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.activity[r * self.n_hidden..(r + 1) * self.n_hidden]
    }

    pub fn subset(&self, rows: &[usize]) -> EmbeddingBatch {
        let mut activity = Vec::with_capacity(rows.len() * self.n_hidden);
        for &r in rows {
            activity.extend_from_slice(self.row(r));
        }
        EmbeddingBatch {
            n_hidden: self.n_hidden,
            activity,
            coh_prim: rows.iter().map(|&r| self.coh_prim[r]).collect(),
            coh_sec: rows.iter().map(|&r| self.coh_sec[r]).collect(),
            stage: rows.iter().map(|&r| self.stage[r]).collect(),
            choice: rows.iter().map(|&r| self.choice[r]).collect(),
            align_mask: rows.iter().map(|&r| self.align_mask[r]).collect(),
        }
    }

    /// Mean per-row squared distance to the column means, i.e. the MSE of
    /// the mean predictor under the reconstruction term's normalization.
    pub fn total_variance(&self) -> f64 {
        let n = self.len();
        let d = self.n_hidden;
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut s = 0.0;
        for r in 0..n {
            for (m, v) in mean.iter().zip(self.row(r)) {
                s += (v - m) * (v - m);
            }
        }
        s / n as f64
    }

    /// Rows of the network's hidden states over `trials`.
    pub fn from_trials(params: &NetworkParams, trials: &[Trial]) -> Self {
        let n = params.n_hidden();
        let mut b = EmbeddingBatch {
            n_hidden: n,
            activity: Vec::new(),
            coh_prim: Vec::new(),
            coh_sec: Vec::new(),
            stage: Vec::new(),
            choice: Vec::new(),
            align_mask: Vec::new(),
        };
        for tr in trials {
            let h = params.forward_hidden(&tr.inputs);
            let last = tr.len() - 1;
            let z = params.logits(&h[last * n..]);
            let choice = if z[Action::Choice1.index()] >= z[Action::Choice2.index()] {
                Action::Choice1
            } else {
                Action::Choice2
            };
            for t in 0..tr.len() {
                b.activity.extend_from_slice(&h[t * n..(t + 1) * n]);
                b.coh_prim.push(tr.spec.primary_coherence());
                b.coh_sec.push(tr.spec.secondary_coherence());
                b.stage.push(tr.stages[t]);
                b.choice.push(choice);
                b.align_mask
                    .push(matches!(tr.stages[t], Stage::Stimulus | Stage::Delay));
            }
        }
        b
    }
}

/// One trial per (context, coh_A, coh_B) combination from `coherences`
/// (signed values), each repeated `repeats` times with fresh noise.
pub fn grid_corpus(
    params: &NetworkParams,
    task: &TaskConfig,
    coherences: &[f64],
    repeats: usize,
    seed: u64,
) -> EmbeddingBatch {
    let mut r = rng::stream(seed);
    let mut trials = Vec::new();
    for &context in task.task.contexts() {
        for &a in coherences {
            let bs: &[f64] = match task.task {
                crate::task::TaskKind::Dm => &[0.0],
                crate::task::TaskKind::CtxDm => coherences,
            };
            for &b in bs {
                for _ in 0..repeats {
                    let spec = TrialSpec {
                        task: task.task,
                        context,
                        coh_a: a,
                        coh_b: b,
                        stages: task.stages,
                        noise: task.noise,
                        seed: r.random(),
                    };
                    trials.push(Trial::from_spec(&spec));
                }
            }
        }
    }
    EmbeddingBatch::from_trials(params, &trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub hidden: usize,
    pub lambda: f64,
    pub adam: AdamConfig,
    pub batch_rows: usize,
    pub max_updates: usize,
    pub scaling: InputScaling,
    /// Full-corpus loss is evaluated every `check_interval` updates; training
    /// stops when its relative change falls below `rel_tol`.
    pub check_interval: usize,
    pub rel_tol: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            hidden: 64,
            lambda: 0.1,
            adam: AdamConfig {
                learning_rate: 1e-3,
                max_grad_norm: None,
                ..AdamConfig::default()
            },
            batch_rows: 256,
            max_updates: 40_000,
            scaling: InputScaling::Global,
            check_interval: 100,
            rel_tol: 1e-5,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.hidden == 0 || self.batch_rows < 2 || self.check_interval == 0 || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("bad autoencoder settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeCurvePoint {
    pub update: usize,
    pub loss: f64,
    pub reconstruction: f64,
    pub r_primary: f64,
    pub r_secondary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeTraining {
    pub params: AutoencoderParams,
    pub curve: Vec<AeCurvePoint>,
    pub converged: bool,
    pub final_loss: AeLoss,
    /// Input transform applied before the encoder, if any.
    pub scaler: Option<Standardizer>,
    /// Mean-predictor MSE of the corpus in the space the model was fit in.
    pub corpus_variance: f64,
}

impl AeTraining {
    /// Codes for raw hidden states, applying the fitted input transform.
    pub fn encode(&self, states: &[f64], rows: usize) -> Vec<f64> {
        match &self.scaler {
            Some(s) => project(&self.params, &s.apply(states), rows),
            None => project(&self.params, states, rows),
        }
    }
}

/// Transform of the activity before it enters the autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputScaling {
    /// Raw firing rates.
    Raw,
    /// Each neuron centred and scaled to unit variance; silent neurons map
    /// to zero.
    PerNeuron,
    /// Each neuron centred, then one common factor so that the mean-predictor
    /// MSE of the corpus is 1. Relative neuron scales are kept.
    Global,
}

/// Per-column affine transform `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(batch: &EmbeddingBatch, mode: InputScaling) -> Option<Self> {
        match mode {
            InputScaling::Raw => None,
            InputScaling::PerNeuron => Some(Self::per_neuron(batch)),
            InputScaling::Global => {
                let mut s = Self::per_neuron(batch);
                let total = batch.total_variance();
                let k = if total > 1e-24 { total.sqrt() } else { f64::INFINITY };
                s.scale.iter_mut().for_each(|v| *v = k);
                Some(s)
            }
        }
    }

    fn per_neuron(batch: &EmbeddingBatch) -> Self {
        let (n, d) = (batch.len() as f64, batch.n_hidden);
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for r in 0..batch.len() {
            for (k, &v) in batch.row(r).iter().enumerate() {
                mean[k] += v / n;
            }
        }
        for r in 0..batch.len() {
            for (k, &v) in batch.row(r).iter().enumerate() {
                sq[k] += (v - mean[k]).powi(2) / n;
            }
        }
        let scale = sq.iter().map(|&v| if v > 1e-24 { v.sqrt() } else { f64::INFINITY }).collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, states: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        states
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i % d]) / self.scale[i % d])
            .collect()
    }

    pub fn apply_batch(&self, batch: &EmbeddingBatch) -> EmbeddingBatch {
        EmbeddingBatch {
            activity: self.apply(&batch.activity),
            ..batch.clone()
        }
    }
}

fn curve_point(update: usize, l: &AeLoss) -> AeCurvePoint {
    AeCurvePoint {
        update,
        loss: l.total,
        reconstruction: l.reconstruction,
        r_primary: l.r_primary,
        r_secondary: l.r_secondary,
    }
}

/// Minibatch Adam on the corpus. Deterministic given `seed`.
pub fn train_autoencoder(corpus: &EmbeddingBatch, cfg: &AeConfig, seed: u64) -> Result<AeTraining> {
    cfg.validate()?;
    if corpus.len() < cfg.batch_rows.min(2) {
        return Err(Error::InsufficientData("empty embedding corpus".into()));
    }
    let scaler = Standardizer::fit(corpus, cfg.scaling);
    let scaled;
    let corpus = match &scaler {
        Some(s) => {
            scaled = s.apply_batch(corpus);
            &scaled
        }
        None => corpus,
    };
    let mut params = AutoencoderParams::init(corpus.n_hidden, cfg.hidden, seed);
    let sizes: Vec<usize> = params.tensors().iter().map(|m| m.data.len()).collect();
    let mut adam = AdamState::new(&sizes);
    let mut r = rng::stream(rng::derive_seed(seed, 1));
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = order.len();
    let mut last = ae_loss(&params, corpus, cfg.lambda);
    let mut curve = vec![curve_point(0, &last)];
    let mut converged = false;
    for update in 1..=cfg.max_updates {
        if cursor + cfg.batch_rows > order.len() {
            order.shuffle(&mut r);
            cursor = 0;
        }
        let rows = &order[cursor..(cursor + cfg.batch_rows).min(order.len())];
        cursor += cfg.batch_rows;
        let batch = corpus.subset(rows);
        let (_, mut g) = ae_loss_grad(&params, &batch, cfg.lambda);
        {
            let mut ps: Vec<&mut [f64]> = params.tensors_mut().into_iter().map(|m| &mut m.data[..]).collect();
            let mut gs: Vec<&mut [f64]> = g.tensors_mut().into_iter().map(|m| &mut m.data[..]).collect();
            adam.step(&mut ps, &mut gs, &cfg.adam);
        }
        if update % cfg.check_interval == 0 || update == cfg.max_updates {
            let l = ae_loss(&params, corpus, cfg.lambda);
            if !l.total.is_finite() {
                return Err(Error::NumericOverflow { step: update });
            }
            curve.push(curve_point(update, &l));
            let rel = (last.total - l.total).abs() / last.total.abs().max(1e-12);
            last = l;
            if rel < cfg.rel_tol {
                converged = true;
                break;
            }
        }
    }
    Ok(AeTraining {
        params,
        curve,
        converged,
        final_loss: last,
        scaler,
        corpus_variance: corpus.total_variance(),
    })
}

/// Encoder forward pass: `rows x 3` codes.
pub fn project(params: &AutoencoderParams, states: &[f64], rows: usize) -> Vec<f64> {
    forward(params, states, rows).codes
}

/// Leading principal axis of the rows and the projections on it.
pub fn pca_first_component(batch: &EmbeddingBatch) -> (Vec<f64>, Vec<f64>) {
    let n = batch.len();
    let d = batch.n_hidden;
    let x = DMatrix::from_row_slice(n, d, &batch.activity);
    let mean = x.row_mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &mean;
    }
    let cov = xc.transpose() * &xc / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imax();
    let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    // Sign convention: largest-magnitude loading is positive.
    let big = v.iter().copied().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
    if big < 0.0 {
        v.iter_mut().for_each(|a| *a = -*a);
    }
    let proj = (0..n)
        .map(|r| {
            xc.row(r)
                .iter()
                .zip(&v)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    (v, proj)
}

fn action_name(a: Action) -> &'static str {
    match a {
        Action::Fixate => "fixate",
        Action::Choice1 => "choice1",
        Action::Choice2 => "choice2",
    }
}

pub fn codes_csv(batch: &EmbeddingBatch, codes: &[f64]) -> String {
    let mut s = String::from("code1,code2,code3,stage,coh_prim,coh_sec,choice\n");
    for r in 0..batch.len() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            codes[r * CODE_DIM],
            codes[r * CODE_DIM + 1],
            codes[r * CODE_DIM + 2],
            batch.stage[r].name(),
            batch.coh_prim[r],
            batch.coh_sec[r],
            action_name(batch.choice[r])
        ));
    }
    s
}

pub fn curve_csv(curve: &[AeCurvePoint]) -> String {
    let mut s = String::from("update,loss,reconstruction,r_primary,r_secondary\n");
    for p in curve {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            p.update, p.loss, p.reconstruction, p.r_primary, p.r_secondary
        ));
    }
    s
}

/// Writes `text`, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Ratio of the distance between the centroids of the two choices'
/// decision-stage codes to the mean within-choice RMS spread.
pub fn choice_separation(batch: &EmbeddingBatch, codes: &[f64]) -> Option<f64> {
    let mut groups: [Vec<[f64; CODE_DIM]>; 2] = [Vec::new(), Vec::new()];
    for r in 0..batch.len() {
        if batch.stage[r] != Stage::Decision {
            continue;
        }
        let c = [codes[r * 3], codes[r * 3 + 1], codes[r * 3 + 2]];
        match batch.choice[r] {
            Action::Choice1 => groups[0].push(c),
            Action::Choice2 => groups[1].push(c),
            Action::Fixate => {}
        }
    }
    if groups.iter().any(|g| g.len() < 2) {
        return None;
    }
    let centroid = |g: &[[f64; 3]]| {
        let mut m = [0.0; 3];
        for c in g {
            for k in 0..3 {
                m[k] += c[k] / g.len() as f64;
            }
        }
        m
    };
    let dist = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
    let c0 = centroid(&groups[0]);
    let c1 = centroid(&groups[1]);
    let spread = |g: &[[f64; 3]], c: &[f64; 3]| {
        (g.iter().map(|x| dist(x, c).powi(2)).sum::<f64>() / g.len() as f64).sqrt()
    };
    let within = 0.5 * (spread(&groups[0], &c0) + spread(&groups[1], &c1));
    Some(dist(&c0, &c1) / within.max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskKind;

    fn toy_batch() -> EmbeddingBatch {
        let p = NetworkParams::init(6, 0.3, 1).unwrap();
        let mut task = TaskConfig::new(TaskKind::CtxDm);
        task.stages = crate::task::StageLengths {
            fixation: 1,
            stimulus: 3,
            delay: 2,
            decision: 1,
        };
        grid_corpus(&p, &task, &[-0.2, 0.1, 0.4], 1, 3)
    }

    #[test]
    fn perfect_fit_reaches_the_floor() {
        // Loss floor: zero reconstruction, both correlations 1.
        let b = toy_batch();
        let l = AeLoss {
            reconstruction: 0.0,
            alignment: -2.0,
            ..Default::default()
        };
        assert_eq!(l.reconstruction + 0.1 * l.alignment, -0.2);
        let p = AutoencoderParams::init(b.n_hidden, 5, 2);
        let with = ae_loss(&p, &b, 0.1);
        let without = ae_loss(&p, &b, 0.0);
        assert_eq!(without.total, with.reconstruction);
        assert!(with.alignment >= -2.0 && with.alignment <= 2.0);
        assert!(with.total >= -0.2);
    }

    #[test]
    fn project_is_deterministic() {
        let b = toy_batch();
        let p = AutoencoderParams::init(b.n_hidden, 5, 2);
        assert_eq!(project(&p, &b.activity, b.len()), project(&p, &b.activity, b.len()));
        assert_eq!(project(&p, &b.activity, b.len()).len(), 3 * b.len());
    }

    #[test]
    fn training_is_reproducible_and_beats_the_mean() {
        let p = NetworkParams::init(16, 0.3, 4).unwrap();
        let task = TaskConfig::new(TaskKind::CtxDm);
        let corpus = grid_corpus(&p, &task, &[-0.4, -0.1, 0.1, 0.4], 1, 9);
        let cfg = AeConfig {
            hidden: 16,
            max_updates: 300,
            batch_rows: 128,
            ..AeConfig::default()
        };
        let a = train_autoencoder(&corpus, &cfg, 5).unwrap();
        let b = train_autoencoder(&corpus, &cfg, 5).unwrap();
        assert_eq!(a.curve, b.curve);
        assert!(a.final_loss.reconstruction < corpus.total_variance());
    }

    #[test]
    fn pca_of_a_line() {
        let b = EmbeddingBatch {
            n_hidden: 2,
            activity: vec![0.0, 0.0, 1.0, 2.0, 2.0, 4.0],
            coh_prim: vec![0.0; 3],
            coh_sec: vec![0.0; 3],
            stage: vec![Stage::Stimulus; 3],
            choice: vec![Action::Choice1; 3],
            align_mask: vec![true; 3],
        };
        let (v, proj) = pca_first_component(&b);
        let s = 5f64.sqrt();
        assert!((v[0] - 1.0 / s).abs() < 1e-12 && (v[1] - 2.0 / s).abs() < 1e-12);
        assert!((proj[2] - proj[1] - s).abs() < 1e-12);
    }
}
