//! Template matching of neurons into silent, positive-selective,
//! negative-selective and context-general populations.
//!
//! Each neuron gets a G x G activity-type matrix over (coh_A, coh_B): entry
//! 1 if it participates in the stationary regime of context A at that
//! stimulus, 2 for context B only, 3 for both, 0 for neither. The matrix is
//! compared against four idealized templates by squared error.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{scan_all_contexts, AttractorKind, CoherenceGrid, GridMap, SettleConfig};
use crate::error::{Error, Result};
use crate::rnn::NetworkParams;
use crate::task::{Context, TaskKind};

pub const U_SILENT: u8 = 0;
pub const U_A: u8 = 1;
pub const U_B: u8 = 2;
pub const U_BOTH: u8 = 3;

/// Per-neuron participation labels over the grid, indexed `[i_a * G + i_b]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityTypeMatrix {
    pub g: usize,
    pub entries: Vec<u8>,
    /// Cells whose labels come from an unresolved attractor.
    pub flagged: Vec<bool>,
}

impl ActivityTypeMatrix {
    pub fn from_fn(g: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut entries = Vec::with_capacity(g * g);
        for i in 0..g {
            for j in 0..g {
                let v = f(i, j);
                assert!(v <= U_BOTH, "activity label out of range");
                entries.push(v);
            }
        }
        ActivityTypeMatrix {
            g,
            entries,
            flagged: vec![false; g * g],
        }
    }

    pub fn get(&self, i_a: usize, i_b: usize) -> u8 {
        self.entries[i_a * self.g + i_b]
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.flagged.is_empty() {
            0.0
        } else {
            self.flagged.iter().filter(|&&f| f).count() as f64 / self.flagged.len() as f64
        }
    }

    /// Sum of squared label differences.
    pub fn sq_distance(&self, other: &ActivityTypeMatrix) -> u64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| {
                let d = a as i64 - b as i64;
                (d * d) as u64
            })
            .sum()
    }
}

fn map_for(maps: &[GridMap], c: Context) -> Option<&GridMap> {
    maps.iter().find(|m| m.context == c)
}

/// Participation matrix of one neuron from the per-context grid maps.
pub fn activity_type_matrix(maps: &[GridMap], neuron: usize) -> Result<ActivityTypeMatrix> {
    let a = map_for(maps, Context::A)
        .ok_or_else(|| Error::InsufficientData("no context-A scan".into()))?;
    let b = map_for(maps, Context::B);
    let g = a.grid.len();
    if let Some(b) = b {
        if b.grid != a.grid {
            return Err(Error::Shape("context scans use different grids".into()));
        }
    }
    let mut m = ActivityTypeMatrix::from_fn(g, |_, _| U_SILENT);
    for k in 0..g * g {
        let ra = &a.records[k];
        let mut v = u8::from(ra.active_set.binary_search(&neuron).is_ok()) * U_A;
        let mut flag = ra.kind == AttractorKind::Unresolved;
        if let Some(b) = b {
            let rb = &b.records[k];
            v += u8::from(rb.active_set.binary_search(&neuron).is_ok()) * U_B;
            flag |= rb.kind == AttractorKind::Unresolved;
        }
        m.entries[k] = v;
        m.flagged[k] = flag;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Population {
    #[serde(rename = "G_s")]
    Silent,
    #[serde(rename = "G_plus")]
    Plus,
    #[serde(rename = "G_minus")]
    Minus,
    #[serde(rename = "G_a")]
    General,
}

impl Population {
    /// Also the tie-break order.
    pub const ALL: [Population; 4] = [
        Population::Silent,
        Population::Plus,
        Population::Minus,
        Population::General,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Population::Silent => "G_s",
            Population::Plus => "G_plus",
            Population::Minus => "G_minus",
            Population::General => "G_a",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Templates in `Population::ALL` order.
///
/// In context A the primary axis is coh_A, in context B it is coh_B, so the
/// positive-selective template has a context-A label wherever coh_A > 0 and
/// a context-B label wherever coh_B > 0. The single-pair task only has
/// context A and its templates ignore coh_B.
pub fn make_templates(task: TaskKind, grid: &CoherenceGrid) -> [ActivityTypeMatrix; 4] {
    let g = grid.len();
    let v = &grid.values;
    let b_label = match task {
        TaskKind::Dm => 0,
        TaskKind::CtxDm => U_B,
    };
    let all = U_A + b_label;
    let sel = |pos: bool| {
        move |i: usize, j: usize| {
            let on = |x: f64| if pos { x > 0.0 } else { x < 0.0 };
            u8::from(on(v[i])) * U_A + u8::from(on(v[j])) * b_label
        }
    };
    [
        ActivityTypeMatrix::from_fn(g, |_, _| U_SILENT),
        ActivityTypeMatrix::from_fn(g, sel(true)),
        ActivityTypeMatrix::from_fn(g, sel(false)),
        ActivityTypeMatrix::from_fn(g, |_, _| all),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationAssignment {
    pub label: Population,
    pub sq_error: u64,
    pub errors: [u64; 4],
}

/// Nearest template by squared error; ties go to the earliest population in
/// `Population::ALL`.
pub fn assign_population(m: &ActivityTypeMatrix, templates: &[ActivityTypeMatrix; 4]) -> Result<PopulationAssignment> {
    let mut errors = [0u64; 4];
    for (e, t) in errors.iter_mut().zip(templates) {
        if t.g != m.g {
            return Err(Error::Shape(format!(
                "template is {0}x{0}, matrix is {1}x{1}",
                t.g, m.g
            )));
        }
        *e = m.sq_distance(t);
    }
    let mut best = 0;
    for k in 1..4 {
        if errors[k] < errors[best] {
            best = k;
        }
    }
    Ok(PopulationAssignment {
        label: Population::ALL[best],
        sq_error: errors[best],
        errors,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationSizes {
    pub g_s: usize,
    pub g_plus: usize,
    pub g_minus: usize,
    pub g_a: usize,
}

impl PopulationSizes {
    pub fn of(assignments: &[PopulationAssignment]) -> Self {
        let mut s = PopulationSizes::default();
        for a in assignments {
            match a.label {
                Population::Silent => s.g_s += 1,
                Population::Plus => s.g_plus += 1,
                Population::Minus => s.g_minus += 1,
                Population::General => s.g_a += 1,
            }
        }
        s
    }

    pub fn total(&self) -> usize {
        self.g_s + self.g_plus + self.g_minus + self.g_a
    }

    /// `|G_+| / |G_-|`, infinite when `G_-` is empty and `G_+` is not, NaN
    /// when both are empty.
    pub fn balance_ratio(&self) -> f64 {
        self.g_plus as f64 / self.g_minus as f64
    }

    /// `ln((|G_+| + 1) / (|G_-| + 1))`, finite for all networks; used for
    /// dispersion statistics.
    pub fn log_balance(&self) -> f64 {
        ((self.g_plus as f64 + 1.0) / (self.g_minus as f64 + 1.0)).ln()
    }

    pub fn is_balanced(&self) -> bool {
        let r = self.balance_ratio();
        (0.5..=2.0).contains(&r)
    }
}

/// Full per-network classification.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationResult {
    pub assignments: Vec<PopulationAssignment>,
    pub flagged_fraction: Vec<f64>,
    pub sizes: PopulationSizes,
}

impl PopulationResult {
    /// Neuron indices grouped by population (in `Population::ALL` order),
    /// ascending within each group.
    pub fn ordering(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.assignments.len()).collect();
        idx.sort_by_key(|&i| (self.assignments[i].label, i));
        idx
    }

    pub fn labels(&self) -> Vec<Population> {
        self.assignments.iter().map(|a| a.label).collect()
    }
}

/// Assigns every neuron from precomputed scans.
pub fn assign_all(maps: &[GridMap], task: TaskKind, n_hidden: usize) -> Result<PopulationResult> {
    let grid = &maps
        .first()
        .ok_or_else(|| Error::InsufficientData("no scans".into()))?
        .grid;
    let templates = make_templates(task, grid);
    let per: Vec<(PopulationAssignment, f64)> = (0..n_hidden)
        .into_par_iter()
        .map(|i| {
            let m = activity_type_matrix(maps, i)?;
            Ok((assign_population(&m, &templates)?, m.flagged_fraction()))
        })
        .collect::<Result<_>>()?;
    let assignments: Vec<PopulationAssignment> = per.iter().map(|p| p.0).collect();
    Ok(PopulationResult {
        sizes: PopulationSizes::of(&assignments),
        flagged_fraction: per.iter().map(|p| p.1).collect(),
        assignments,
    })
}

/// Scans and classifies one network.
pub fn classify_network(
    params: &NetworkParams,
    task: TaskKind,
    grid: &CoherenceGrid,
    cfg: &SettleConfig,
) -> Result<(Vec<GridMap>, PopulationResult)> {
    let maps = scan_all_contexts(params, task, grid, cfg)?;
    let res = assign_all(&maps, task, params.n_hidden())?;
    Ok((maps, res))
}

/// Population sizes at one training checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationPoint {
    pub update: usize,
    pub accuracy: f64,
    pub sizes: PopulationSizes,
    pub balance_ratio: f64,
}

/// Population sizes along a sequence of `(update, accuracy, params)`
/// checkpoints.
pub fn population_trajectory<'a>(
    checkpoints: impl IntoIterator<Item = (usize, f64, &'a NetworkParams)>,
    task: TaskKind,
    grid: &CoherenceGrid,
    cfg: &SettleConfig,
) -> Result<Vec<PopulationPoint>> {
    checkpoints
        .into_iter()
        .map(|(update, accuracy, p)| {
            let (_, r) = classify_network(p, task, grid, cfg)?;
            Ok(PopulationPoint {
                update,
                accuracy,
                sizes: r.sizes,
                balance_ratio: r.sizes.balance_ratio(),
            })
        })
        .collect()
}

pub fn assignments_csv(res: &PopulationResult) -> String {
    let mut s = String::from("neuron,label,sq_error,flagged_fraction\n");
    for (i, (a, f)) in res.assignments.iter().zip(&res.flagged_fraction).enumerate() {
        s.push_str(&format!("{i},{},{},{f}\n", a.label.name(), a.sq_error));
    }
    s
}

pub fn ordering_csv(res: &PopulationResult) -> String {
    let mut s = String::from("position,neuron,label\n");
    for (pos, i) in res.ordering().into_iter().enumerate() {
        s.push_str(&format!("{pos},{i},{}\n", res.assignments[i].label.name()));
    }
    s
}

pub fn trajectory_csv(points: &[PopulationPoint]) -> String {
    let mut s = String::from("update,accuracy,g_s,g_plus,g_minus,g_a,balance_ratio\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.update, p.accuracy, p.sizes.g_s, p.sizes.g_plus, p.sizes.g_minus, p.sizes.g_a, p.balance_ratio
        ));
    }
    s
}

pub fn write_outputs(dir: &Path, res: &PopulationResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [
        ("populations.csv", assignments_csv(res)),
        ("ordering.csv", ordering_csv(res)),
    ] {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
