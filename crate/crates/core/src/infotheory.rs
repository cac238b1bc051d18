//! Gaussian-copula mutual information between single-neuron activity and a
//! binary task variable, with permutation tests and Holm correction.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::populations::Population;
use crate::rng::{self, RngStream};
use crate::rnn::NetworkParams;
use crate::task::{Stage, TaskConfig, Trial};

/// Minimum samples per class for a conditional variance estimate.
pub const MIN_CLASS_SAMPLES: usize = 4;

/// Copula-normalized sample. A constant input has no rank information and
/// is marked degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaScores {
    pub scores: Vec<f64>,
    pub degenerate: bool,
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("NaN in sample"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Rank transform to `(rank - 0.5) / n` followed by the standard-normal
/// quantile function.
pub fn copula_normalize(x: &[f64]) -> CopulaScores {
    let n = x.len();
    let degenerate = n == 0 || x.iter().all(|&v| v == x[0]);
    if degenerate {
        return CopulaScores {
            scores: vec![0.0; n],
            degenerate: true,
        };
    }
    let std = Normal::standard();
    let scores = average_ranks(x)
        .into_iter()
        .map(|r| std.inverse_cdf((r - 0.5) / n as f64))
        .collect();
    CopulaScores {
        scores,
        degenerate: false,
    }
}

fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let (mut n, mut s) = (0usize, 0.0);
    for v in xs.clone() {
        n += 1;
        s += v;
    }
    let m = s / n as f64;
    let ss: f64 = xs.map(|v| (v - m) * (v - m)).sum();
    (m, ss / (n as f64 - 1.0), n)
}

/// MI estimate in bits with the pre-clamp value kept for bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcmiEstimate {
    pub bits: f64,
    pub raw_bits: f64,
    pub clamped: bool,
    pub degenerate: bool,
}

fn check_classes(classes: &[bool]) -> Result<(usize, usize)> {
    let n1 = classes.iter().filter(|&&c| c).count();
    let n0 = classes.len() - n1;
    if n0 < MIN_CLASS_SAMPLES || n1 < MIN_CLASS_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "class sizes {n0} and {n1}; need at least {MIN_CLASS_SAMPLES} each"
        )));
    }
    Ok((n0, n1))
}

/// GCMI of copula scores `z` against binary classes.
fn gcmi_scores(z: &[f64], classes: &[bool], n0: usize, n1: usize) -> f64 {
    let n = z.len() as f64;
    let (_, var_all, _) = mean_var(z.iter().copied());
    let pick = |want: bool| {
        z.iter()
            .zip(classes)
            .filter(move |(_, &c)| c == want)
            .map(|(&v, _)| v)
    };
    let (_, var0, _) = mean_var(pick(false));
    let (_, var1, _) = mean_var(pick(true));
    let (p0, p1) = (n0 as f64 / n, n1 as f64 / n);
    // H(pooled) - sum_c p_c H(c); the 2*pi*e terms cancel.
    0.5 * (var_all.ln() - p0 * var0.ln() - p1 * var1.ln()) / std::f64::consts::LN_2
}

/// Mutual information (bits) between a continuous sample and a binary class.
pub fn gcmi_discrete(x: &[f64], classes: &[bool]) -> Result<GcmiEstimate> {
    if x.len() != classes.len() {
        return Err(Error::Shape("activity and class lengths differ".into()));
    }
    let (n0, n1) = check_classes(classes)?;
    let c = copula_normalize(x);
    if c.degenerate {
        return Ok(GcmiEstimate {
            bits: 0.0,
            raw_bits: 0.0,
            clamped: false,
            degenerate: true,
        });
    }
    let raw = gcmi_scores(&c.scores, classes, n0, n1);
    Ok(GcmiEstimate {
        bits: raw.max(0.0),
        raw_bits: raw,
        clamped: raw < 0.0,
        degenerate: false,
    })
}

/// Permutation p-value `(1 + #{surrogate >= observed}) / (1 + n)` where
/// surrogates shuffle the class labels against the activity. Ranking uses
/// the unclamped statistic; clamping would tie every negative estimate at 0.
pub fn permutation_test(
    x: &[f64],
    classes: &[bool],
    n_surrogates: usize,
    rng: &mut RngStream,
) -> Result<(GcmiEstimate, f64)> {
    let obs = gcmi_discrete(x, classes)?;
    if obs.degenerate {
        return Ok((obs, 1.0));
    }
    let (n0, n1) = check_classes(classes)?;
    let z = copula_normalize(x).scores;
    let mut shuffled = classes.to_vec();
    let mut exceed = 0usize;
    for _ in 0..n_surrogates {
        shuffled.shuffle(rng);
        if gcmi_scores(&z, &shuffled, n0, n1) >= obs.raw_bits {
            exceed += 1;
        }
    }
    Ok((obs, (1 + exceed) as f64 / (1 + n_surrogates) as f64))
}

/// Holm step-down procedure: flags in the original order.
pub fn holm_correct(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).expect("NaN p-value").then(a.cmp(&b)));
    let mut flags = vec![false; m];
    for (rank, &i) in idx.iter().enumerate() {
        if p[i] <= alpha / (m - rank) as f64 {
            flags[i] = true;
        } else {
            break;
        }
    }
    flags
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// One sample per trial: mean stimulus-stage activity.
    TrialMean,
    /// One sample per stimulus-stage step.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiConfig {
    pub aggregation: Aggregation,
    pub n_surrogates: usize,
    pub alpha: f64,
    pub n_trials: usize,
}

impl Default for MiConfig {
    fn default() -> Self {
        MiConfig {
            aggregation: Aggregation::TrialMean,
            n_surrogates: 10_000,
            alpha: 0.01,
            n_trials: 400,
        }
    }
}

impl MiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must be in (0, 1)".into()));
        }
        if self.n_trials < 2 * MIN_CLASS_SAMPLES {
            return Err(Error::InvalidConfig("too few MI trials".into()));
        }
        Ok(())
    }
}

/// Neuron-by-sample activity matrix with the class of each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityCorpus {
    pub n_hidden: usize,
    /// `samples x N` row-major.
    pub activity: Vec<f64>,
    /// Sign of the primary coherence is positive.
    pub classes: Vec<bool>,
}

impl ActivityCorpus {
    pub fn n_samples(&self) -> usize {
        self.classes.len()
    }

    pub fn neuron(&self, i: usize) -> Vec<f64> {
        (0..self.n_samples())
            .map(|s| self.activity[s * self.n_hidden + i])
            .collect()
    }

    /// Stimulus-stage activity of each trial, aggregated per `agg`.
    pub fn from_trials(params: &NetworkParams, trials: &[Trial], agg: Aggregation) -> Self {
        let n = params.n_hidden();
        let mut activity = Vec::new();
        let mut classes = Vec::new();
        for tr in trials {
            let h = params.forward_hidden(&tr.inputs);
            let class = tr.spec.primary_coherence() > 0.0;
            let steps: Vec<usize> = (0..tr.len()).filter(|&t| tr.stages[t] == Stage::Stimulus).collect();
            match agg {
                Aggregation::TrialMean => {
                    let mut m = vec![0.0; n];
                    for &t in &steps {
                        for i in 0..n {
                            m[i] += h[t * n + i];
                        }
                    }
                    m.iter_mut().for_each(|v| *v /= steps.len() as f64);
                    activity.extend_from_slice(&m);
                    classes.push(class);
                }
                Aggregation::PerStep => {
                    for &t in &steps {
                        activity.extend_from_slice(&h[t * n..(t + 1) * n]);
                        classes.push(class);
                    }
                }
            }
        }
        ActivityCorpus {
            n_hidden: n,
            activity,
            classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiResult {
    pub neuron: usize,
    pub population: Option<Population>,
    pub mi: f64,
    pub p_value: f64,
    pub significant: bool,
    pub clamped: bool,
}

/// Per-neuron MI against the class labels, permutation-tested and
/// Holm-corrected across neurons. Results follow `ordering` when given.
pub fn mi_map(
    corpus: &ActivityCorpus,
    labels: Option<&[Population]>,
    ordering: Option<&[usize]>,
    cfg: &MiConfig,
    seed: u64,
) -> Result<Vec<MiResult>> {
    cfg.validate()?;
    let n = corpus.n_hidden;
    let tested: Vec<(GcmiEstimate, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(rng::derive_seed(seed, i as u64));
            permutation_test(&corpus.neuron(i), &corpus.classes, cfg.n_surrogates, &mut r)
        })
        .collect::<Result<_>>()?;
    let p: Vec<f64> = tested.iter().map(|t| t.1).collect();
    let flags = holm_correct(&p, cfg.alpha);
    let order: Vec<usize> = ordering.map_or_else(|| (0..n).collect(), |o| o.to_vec());
    Ok(order
        .into_iter()
        .map(|i| MiResult {
            neuron: i,
            population: labels.map(|l| l[i]),
            mi: tested[i].0.bits,
            p_value: p[i],
            significant: flags[i],
            clamped: tested[i].0.clamped,
        })
        .collect())
}

/// Draws the MI trial corpus for a network.
pub fn sample_corpus(
    params: &NetworkParams,
    task: &TaskConfig,
    cfg: &MiConfig,
    seed: u64,
) -> ActivityCorpus {
    let trials = task.sample_trials(cfg.n_trials, &mut rng::stream(seed));
    ActivityCorpus::from_trials(params, &trials, cfg.aggregation)
}

pub fn mi_csv(results: &[MiResult]) -> String {
    let mut s = String::from("neuron,population,mi_bits,p,significant\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.neuron,
            r.population.map_or("", |p| p.name()),
            r.mi,
            r.p_value,
            r.significant
        ));
    }
    s
}

pub fn write_mi_csv(path: &Path, results: &[MiResult]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(mi_csv(results).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Kolmogorov-Smirnov distance between a sample and U(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}
