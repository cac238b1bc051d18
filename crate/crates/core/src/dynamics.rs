//! Attractor identification over coherence space.
//!
//! For each coherence pair the stimulus stage is prolonged with a frozen,
//! noise-free input until the state settles. Within a fixed set of active
//! neurons the ReLU dynamics are affine, `h <- W_act h + s_act`, so the
//! spectrum of `W_act` decides the regime: leading modulus below one gives a
//! stable fixed point, a leading complex pair outside the unit circle gives a
//! quasi-periodic (oscillatory) attractor.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Complex64, Mat};
use crate::rnn::NetworkParams;
use crate::task::{pure_input, Context, Input, Stage, StageLengths, TaskKind, TrialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SettleConfig {
    /// Steps of prolonged stimulus before the window is judged.
    pub t_settle: usize,
    /// Trailing steps kept for analysis.
    pub t_window: usize,
    /// Activity above this counts as participation.
    pub eps_act: f64,
    /// Window step change below this counts as converged.
    pub converged_tol: f64,
    /// Any activity above this marks the run as diverged.
    pub divergence_bound: f64,
    /// A window with a fixed active set whose step change is still shrinking
    /// geometrically is simulated for another `t_settle` steps, at most this
    /// many times. Slow modes (|mu| near 1) need it to reach `converged_tol`.
    pub max_extensions: usize,
}

impl Default for SettleConfig {
    fn default() -> Self {
        SettleConfig {
            t_settle: 2000,
            t_window: 200,
            eps_act: 1e-6,
            converged_tol: 1e-8,
            divergence_bound: 1e6,
            max_extensions: 4,
        }
    }
}

impl SettleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_window == 0 || self.t_window > self.t_settle {
            return Err(Error::InvalidConfig(
                "t_window must be in 1..=t_settle".into(),
            ));
        }
        Ok(())
    }
}

/// Trailing window of a prolonged-stimulus simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SettledWindow {
    pub n_hidden: usize,
    /// `t_window x N` row-major.
    pub states: Vec<f64>,
    pub input: Input,
    /// Neurons active at any windowed step, sorted. For a run that diverged
    /// before the window, the neurons active in the last simulated state.
    pub active_set: Vec<usize>,
    /// Whether every windowed step has exactly this active set.
    pub active_set_stable: bool,
    pub diverged: bool,
}

impl SettledWindow {
    pub fn len(&self) -> usize {
        self.states.len() / self.n_hidden.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.n_hidden..(t + 1) * self.n_hidden]
    }

    /// Largest elementwise change between consecutive windowed states.
    pub fn max_step_change(&self) -> f64 {
        let mut m = 0.0f64;
        for t in 1..self.len() {
            for (a, b) in self.state(t).iter().zip(self.state(t - 1)) {
                m = m.max((a - b).abs());
            }
        }
        m
    }

    /// Largest per-neuron variance over the window.
    pub fn max_variance(&self) -> f64 {
        let w = self.len();
        if w < 2 {
            return 0.0;
        }
        let n = self.n_hidden;
        let mut best = 0.0f64;
        for i in 0..n {
            let mean = (0..w).map(|t| self.states[t * n + i]).sum::<f64>() / w as f64;
            let var = (0..w)
                .map(|t| (self.states[t * n + i] - mean).powi(2))
                .sum::<f64>()
                / w as f64;
            best = best.max(var);
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.states.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Trial spec used for prolonged-stimulus analysis at one grid point.
pub fn analysis_spec(task: TaskKind, context: Context, coh_a: f64, coh_b: f64) -> TrialSpec {
    TrialSpec {
        task,
        context,
        coh_a,
        coh_b,
        stages: StageLengths::default(),
        noise: 0.0,
        seed: 0,
    }
}

/// Runs the fixation stage from the origin, then holds the noise-free
/// stimulus input for `t_settle` steps (plus any extensions).
pub fn settle(params: &NetworkParams, spec: &TrialSpec, cfg: &SettleConfig) -> SettledWindow {
    let n = params.n_hidden();
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let fix = pure_input(spec, Stage::Fixation);
    for _ in 0..spec.stages.fixation {
        params.step_into(&h, &fix, &mut next);
        std::mem::swap(&mut h, &mut next);
    }
    let input = pure_input(spec, Stage::Stimulus);
    let mut window = run_segment(params, &mut h, &input, cfg);
    for _ in 0..cfg.max_extensions {
        if !still_converging(&window, cfg) {
            break;
        }
        window = run_segment(params, &mut h, &input, cfg);
    }
    window
}

/// Fixed active set, not yet converged, and step changes at the end of the
/// window at most half of those at its start.
fn still_converging(w: &SettledWindow, cfg: &SettleConfig) -> bool {
    let len = w.len();
    if w.diverged || !w.active_set_stable || len < 3 || w.max_step_change() < cfg.converged_tol {
        return false;
    }
    let change = |t: usize| {
        w.state(t)
            .iter()
            .zip(w.state(t - 1))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    change(len - 1) <= 0.5 * change(1)
}

/// Advances `h` by `t_settle` steps and returns the trailing window.
fn run_segment(params: &NetworkParams, h: &mut Vec<f64>, input: &Input, cfg: &SettleConfig) -> SettledWindow {
    let n = params.n_hidden();
    let mut next = vec![0.0; n];
    let w = cfg.t_window.min(cfg.t_settle);
    let mut states = Vec::with_capacity(w * n);
    let mut diverged = false;
    for t in 0..cfg.t_settle {
        params.step_into(h, input, &mut next);
        std::mem::swap(h, &mut next);
        if h.iter().any(|v| !v.is_finite() || *v > cfg.divergence_bound) {
            diverged = true;
            break;
        }
        if t >= cfg.t_settle - w {
            states.extend_from_slice(h);
        }
    }
    let mut active = vec![false; n];
    let mut stable = true;
    let rows = states.len() / n.max(1);
    for t in 0..rows {
        let s = &states[t * n..(t + 1) * n];
        for i in 0..n {
            let on = s[i] > cfg.eps_act;
            if t > 0 && on != (states[(t - 1) * n + i] > cfg.eps_act) {
                stable = false;
            }
            active[i] |= on;
        }
    }
    if diverged && rows == 0 {
        // Divergence before the window: the blown-up state itself marks the
        // participating neurons.
        for i in 0..n {
            active[i] = h[i] > cfg.eps_act;
        }
    }
    SettledWindow {
        n_hidden: n,
        states,
        input: *input,
        active_set: (0..n).filter(|&i| active[i]).collect(),
        active_set_stable: stable && !diverged,
        diverged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttractorKind {
    FixedPoint,
    QuasiPeriodic,
    Unresolved,
}

impl AttractorKind {
    pub fn name(self) -> &'static str {
        match self {
            AttractorKind::FixedPoint => "fixed_point",
            AttractorKind::QuasiPeriodic => "quasi_periodic",
            AttractorKind::Unresolved => "unresolved",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "fixed_point" => Some(AttractorKind::FixedPoint),
            "quasi_periodic" => Some(AttractorKind::QuasiPeriodic),
            "unresolved" => Some(AttractorKind::Unresolved),
            _ => None,
        }
    }
}

/// Linear subsystem on the active neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSubsystem {
    pub active_set: Vec<usize>,
    pub w_act: Mat,
    pub s_act: Vec<f64>,
}

impl ActiveSubsystem {
    pub fn new(params: &NetworkParams, active_set: &[usize], input: &Input) -> Self {
        let w_act = params.w_hh.submatrix(active_set);
        let mut drive = vec![0.0; params.n_hidden()];
        params.w_ih.matvec_into(input, &mut drive);
        let s_act = active_set.iter().map(|&i| drive[i]).collect();
        ActiveSubsystem {
            active_set: active_set.to_vec(),
            w_act,
            s_act,
        }
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.w_act.eigenvalues()
    }

    /// `h* = (I - W_act)^-1 s_act`, `None` if singular.
    pub fn fixed_point(&self) -> Option<Vec<f64>> {
        if self.active_set.is_empty() {
            return Some(Vec::new());
        }
        self.w_act.solve_identity_minus(&self.s_act)
    }
}

/// Eigenvalue of largest modulus; complex-pair members are returned with
/// nonnegative imaginary part.
pub fn leading_eigenvalue(ev: &[Complex64]) -> Option<Complex64> {
    ev.iter()
        .copied()
        .max_by(|a, b| {
            a.norm()
                .partial_cmp(&b.norm())
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        })
        .map(|z| Complex64::new(z.re, z.im.abs()))
}

/// Leading eigenvalue among those with nonzero imaginary part.
pub fn leading_complex_pair(ev: &[Complex64], im_tol: f64) -> Option<Complex64> {
    leading_eigenvalue(
        &ev.iter()
            .copied()
            .filter(|z| z.im.abs() > im_tol)
            .collect::<Vec<_>>(),
    )
}

/// Label assigned from the simulated window alone when the linear analysis
/// cannot be trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FallbackLabel {
    Stationary,
    Oscillating,
    Diverged,
}

impl FallbackLabel {
    pub fn name(self) -> &'static str {
        match self {
            FallbackLabel::Stationary => "stationary",
            FallbackLabel::Oscillating => "oscillating",
            FallbackLabel::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorRecord {
    pub coh_a: f64,
    pub coh_b: f64,
    pub context: Context,
    pub kind: AttractorKind,
    /// Fixed point embedded in the full state space (zeros off the active set).
    pub fixed_point: Option<Vec<f64>>,
    pub mu_lead: Option<Complex64>,
    /// Cycles per step, present iff the kind is quasi-periodic.
    pub frequency: Option<f64>,
    pub active_set: Vec<usize>,
    pub active_set_stable: bool,
    /// The candidate fixed point leaves the active orthant or would switch on
    /// an inactive neuron.
    pub consistency_violation: bool,
    pub fallback: Option<FallbackLabel>,
    pub max_step_change: f64,
    pub max_variance: f64,
}

impl AttractorRecord {
    pub fn mu_lead_abs(&self) -> Option<f64> {
        self.mu_lead.map(|z| z.norm())
    }
}

const SINGULAR_TOL: f64 = 1e-10;
const ORTHANT_TOL: f64 = 1e-9;
const IMAG_TOL: f64 = 1e-9;

fn fallback_label(window: &SettledWindow, cfg: &SettleConfig) -> Option<FallbackLabel> {
    if window.diverged {
        Some(FallbackLabel::Diverged)
    } else if window.max_step_change() < cfg.converged_tol {
        Some(FallbackLabel::Stationary)
    } else {
        Some(FallbackLabel::Oscillating)
    }
}

/// Classifies the settled window by the spectrum of its active subsystem.
///
/// The linear rule applies only when the active set is constant over the
/// window. A trajectory that crosses orthant boundaries, or diverges, is
/// `Unresolved` with a label taken from the simulation itself.
pub fn classify_attractor(
    params: &NetworkParams,
    window: &SettledWindow,
    spec: &TrialSpec,
    cfg: &SettleConfig,
) -> AttractorRecord {
    let mut rec = AttractorRecord {
        coh_a: spec.coh_a,
        coh_b: spec.coh_b,
        context: spec.context,
        kind: AttractorKind::Unresolved,
        fixed_point: None,
        mu_lead: None,
        frequency: None,
        active_set: window.active_set.clone(),
        active_set_stable: window.active_set_stable,
        consistency_violation: false,
        fallback: None,
        max_step_change: if window.diverged { f64::INFINITY } else { window.max_step_change() },
        max_variance: if window.diverged { f64::INFINITY } else { window.max_variance() },
    };
    if window.diverged {
        rec.fallback = Some(FallbackLabel::Diverged);
        return rec;
    }
    let sub = ActiveSubsystem::new(params, &window.active_set, &window.input);
    let ev = sub.eigenvalues();
    rec.mu_lead = leading_eigenvalue(&ev);
    let lead_abs = rec.mu_lead.map_or(0.0, |z| z.norm());
    let pair = leading_complex_pair(&ev, IMAG_TOL);

    // Candidate fixed point of the affine subsystem.
    let singular = ev.iter().any(|z| (Complex64::new(1.0, 0.0) - z).norm() < SINGULAR_TOL);
    let fp = if singular { None } else { sub.fixed_point() };
    if let Some(hs) = &fp {
        let n = params.n_hidden();
        let mut full = vec![0.0; n];
        for (k, &i) in sub.active_set.iter().enumerate() {
            full[i] = hs[k];
        }
        let mut drive = vec![0.0; n];
        params.drive_into(&full, &window.input, &mut drive);
        let leaves = hs.iter().any(|&v| v < -ORTHANT_TOL);
        let wakes = (0..n)
            .filter(|i| sub.active_set.binary_search(i).is_err())
            .any(|i| drive[i] > ORTHANT_TOL);
        rec.consistency_violation = leaves || wakes;
        rec.fixed_point = Some(full);
    }

    if window.active_set_stable && !singular {
        if lead_abs < 1.0 {
            if fp.is_some() {
                rec.kind = AttractorKind::FixedPoint;
                return rec;
            }
        } else if let Some(mu) = pair.filter(|z| z.norm() > 1.0) {
            rec.kind = AttractorKind::QuasiPeriodic;
            rec.frequency = Some(mu.arg().abs() / (2.0 * PI));
            rec.fixed_point = None;
            return rec;
        }
    }
    rec.fixed_point = None;
    rec.fallback = fallback_label(window, cfg);
    rec
}

/// Dominant frequency (cycles/step) of the windowed trajectory: peak of the
/// summed per-neuron power spectrum, excluding DC, refined by parabolic
/// interpolation.
pub fn dominant_frequency(window: &SettledWindow) -> Option<f64> {
    let w = window.len();
    let n = window.n_hidden;
    if w < 4 {
        return None;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(w);
    let mut power = vec![0.0; w / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); w];
    for i in 0..n {
        let mean = (0..w).map(|t| window.states[t * n + i]).sum::<f64>() / w as f64;
        for t in 0..w {
            buf[t] = Complex::new(window.states[t * n + i] - mean, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p += buf[k].norm_sqr();
        }
    }
    let (kmax, &pmax) = power
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    if pmax <= 0.0 {
        return None;
    }
    let mut k = kmax as f64;
    if kmax >= 1 && kmax + 1 < power.len() {
        let (a, b, c) = (power[kmax - 1], power[kmax], power[kmax + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 0.0 {
            k += 0.5 * (a - c) / denom;
        }
    }
    Some(k / w as f64)
}

/// Square grid of coherence values shared by both axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceGrid {
    pub values: Vec<f64>,
}

impl CoherenceGrid {
    /// `g` evenly spaced values over `[-limit, limit]`.
    pub fn symmetric(g: usize, limit: f64) -> Self {
        assert!(g >= 2);
        let step = 2.0 * limit / (g - 1) as f64;
        CoherenceGrid {
            values: (0..g).map(|k| -limit + step * k as f64).collect(),
        }
    }

    /// The default 44-point grid over [-0.43, 0.43]; zero is not a node.
    pub fn default_grid() -> Self {
        Self::with_size(44)
    }

    /// `g` nodes with the default 0.02 spacing profile rescaled to span
    /// [-0.43, 0.43].
    pub fn with_size(g: usize) -> Self {
        Self::symmetric(g, 0.43)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig("grid values must lie in [-1, 1]".into()));
        }
        Ok(())
    }
}

/// Records for one context over the grid, indexed `[i_a * G + i_b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub context: Context,
    pub grid: CoherenceGrid,
    pub records: Vec<AttractorRecord>,
}

impl GridMap {
    pub fn get(&self, i_a: usize, i_b: usize) -> &AttractorRecord {
        &self.records[i_a * self.grid.len() + i_b]
    }
}

pub fn analyze_point(
    params: &NetworkParams,
    spec: &TrialSpec,
    cfg: &SettleConfig,
) -> (AttractorRecord, SettledWindow) {
    let w = settle(params, spec, cfg);
    (classify_attractor(params, &w, spec, cfg), w)
}

/// Settles and classifies every grid point for one context.
///
/// For the single-pair task the B pair is never presented, so one row of
/// the grid is computed and replicated along `coh_b`.
pub fn scan_coherence_grid(
    params: &NetworkParams,
    task: TaskKind,
    context: Context,
    grid: &CoherenceGrid,
    cfg: &SettleConfig,
) -> Result<GridMap> {
    grid.validate()?;
    cfg.validate()?;
    if task == TaskKind::Dm && context != Context::A {
        return Err(Error::InvalidConfig("DM has only context A".into()));
    }
    let g = grid.len();
    let records: Vec<AttractorRecord> = match task {
        TaskKind::Dm => {
            let row: Vec<AttractorRecord> = grid
                .values
                .par_iter()
                .map(|&a| analyze_point(params, &analysis_spec(task, context, a, 0.0), cfg).0)
                .collect();
            let mut out = Vec::with_capacity(g * g);
            for rec in &row {
                for &b in &grid.values {
                    let mut r = rec.clone();
                    r.coh_b = b;
                    out.push(r);
                }
            }
            out
        }
        TaskKind::CtxDm => (0..g * g)
            .into_par_iter()
            .map(|k| {
                let (a, b) = (grid.values[k / g], grid.values[k % g]);
                analyze_point(params, &analysis_spec(task, context, a, b), cfg).0
            })
            .collect(),
    };
    Ok(GridMap {
        context,
        grid: grid.clone(),
        records,
    })
}

/// Scans every context the task presents.
pub fn scan_all_contexts(
    params: &NetworkParams,
    task: TaskKind,
    grid: &CoherenceGrid,
    cfg: &SettleConfig,
) -> Result<Vec<GridMap>> {
    task.contexts()
        .iter()
        .map(|&c| scan_coherence_grid(params, task, c, grid, cfg))
        .collect()
}

/// Counts of each kind over one or more grid maps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindCounts {
    pub fixed_point: usize,
    pub quasi_periodic: usize,
    pub unresolved: usize,
    /// Unresolved cells by fallback label.
    pub unresolved_stationary: usize,
    pub unresolved_oscillating: usize,
    pub unresolved_diverged: usize,
}

impl KindCounts {
    pub fn of(maps: &[GridMap]) -> Self {
        let mut c = KindCounts::default();
        for r in maps.iter().flat_map(|m| &m.records) {
            match r.kind {
                AttractorKind::FixedPoint => c.fixed_point += 1,
                AttractorKind::QuasiPeriodic => c.quasi_periodic += 1,
                AttractorKind::Unresolved => {
                    c.unresolved += 1;
                    match r.fallback {
                        Some(FallbackLabel::Stationary) => c.unresolved_stationary += 1,
                        Some(FallbackLabel::Oscillating) => c.unresolved_oscillating += 1,
                        Some(FallbackLabel::Diverged) | None => c.unresolved_diverged += 1,
                    }
                }
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.fixed_point + self.quasi_periodic + self.unresolved
    }

    /// Fraction of cells that oscillate persistently: quasi-periodic plus
    /// unresolved cells whose simulation oscillates.
    pub fn oscillatory_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.quasi_periodic + self.unresolved_oscillating) as f64 / self.total() as f64
        }
    }

    /// Fraction of cells labelled quasi-periodic.
    pub fn quasi_periodic_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.quasi_periodic as f64 / self.total() as f64
        }
    }
}

/// Ensemble summary of quasi-periodic prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSummary {
    pub networks: usize,
    /// Pooled fraction over all cells of all networks.
    pub cell_fraction: f64,
    /// Per-network fractions.
    pub per_network: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    /// Percentile bootstrap interval of the mean per-network fraction.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fraction of networks with at least one quasi-periodic cell.
    pub network_fraction: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Aggregates per-network grid maps (one entry per network, each holding its
/// per-context maps).
pub fn quasiperiodic_fraction(ensemble: &[Vec<GridMap>], bootstrap: usize, seed: u64) -> QpSummary {
    let counts: Vec<KindCounts> = ensemble.iter().map(|m| KindCounts::of(m)).collect();
    let per_network: Vec<f64> = counts.iter().map(|c| c.quasi_periodic_fraction()).collect();
    summarize_fractions(&per_network, &counts, bootstrap, seed)
}

pub fn summarize_fractions(
    per_network: &[f64],
    counts: &[KindCounts],
    bootstrap: usize,
    seed: u64,
) -> QpSummary {
    use rand::Rng;
    let total_cells: usize = counts.iter().map(|c| c.total()).sum();
    let qp_cells: usize = counts.iter().map(|c| c.quasi_periodic).sum();
    let n = per_network.len();
    let mean = if n == 0 { f64::NAN } else { per_network.iter().sum::<f64>() / n as f64 };
    let (mut lo, mut hi) = (mean, mean);
    if n > 0 && bootstrap > 0 {
        let mut rng = crate::rng::stream(seed);
        let mut means: Vec<f64> = (0..bootstrap)
            .map(|_| (0..n).map(|_| per_network[rng.random_range(0..n)]).sum::<f64>() / n as f64)
            .collect();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lo = quantile(&means, 0.025);
        hi = quantile(&means, 0.975);
    }
    QpSummary {
        networks: n,
        cell_fraction: if total_cells == 0 { 0.0 } else { qp_cells as f64 / total_cells as f64 },
        per_network: per_network.to_vec(),
        median: median(per_network),
        mean,
        ci_low: lo,
        ci_high: hi,
        network_fraction: if n == 0 {
            0.0
        } else {
            counts.iter().filter(|c| c.quasi_periodic > 0).count() as f64 / n as f64
        },
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn context_name(c: Context) -> &'static str {
    match c {
        Context::A => "A",
        Context::B => "B",
    }
}

/// CSV rows `coh_a,coh_b,context,kind,mu_lead_abs,frequency,...` for the maps.
pub fn grid_csv(maps: &[GridMap]) -> String {
    let mut s = String::from(
        "coh_a,coh_b,context,kind,mu_lead_abs,frequency,mu_lead_re,mu_lead_im,active_count,active_set_stable,consistency_violation,fallback\n",
    );
    for m in maps {
        for r in &m.records {
            let fb = r.fallback.map_or("", |f| f.name());
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.coh_a,
                r.coh_b,
                context_name(r.context),
                r.kind.name(),
                fmt_opt(r.mu_lead_abs()),
                fmt_opt(r.frequency),
                fmt_opt(r.mu_lead.map(|z| z.re)),
                fmt_opt(r.mu_lead.map(|z| z.im)),
                r.active_set.len(),
                r.active_set_stable,
                r.consistency_violation,
                fb
            ));
        }
    }
    s
}

pub fn write_grid_csv(path: &Path, maps: &[GridMap]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(grid_csv(maps).as_bytes())
        .map_err(|e| Error::io(path, e))
}
