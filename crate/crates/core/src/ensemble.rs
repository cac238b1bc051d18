//! Manifest-driven ensembles over (paradigm, delta, seed) cells.
//!
//! Every cell owns a directory under `cells/`; its `cell.json` is written
//! last and lists the hashes of everything the cell produced, so a rerun can
//! skip cells that verify and redo the rest. Aggregate tables are derived
//! from the records alone and are byte-identical across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, sha256_file, CheckpointInfo};
use crate::dynamics::{self, quantile, summarize_fractions, CoherenceGrid, KindCounts, SettleConfig};
use crate::error::{Error, Result};
use crate::populations::{self, PopulationSizes};
use crate::rnn::NetworkParams;
use crate::task::{TaskConfig, TaskKind};
use crate::trace::{Paradigm, TrainStatus, TrainingTrace};
use crate::train_rl::{train_ppo, PpoConfig};
use crate::train_sl::{train_supervised, SlConfig};

pub const SCHEMA: &str = "rnnlab-experiment";
pub const SCHEMA_VERSION: u32 = 1;
pub const EXPERIMENT_FILE: &str = "experiment.json";
pub const INDEX_FILE: &str = "MANIFEST.json";
pub const CELL_FILE: &str = "cell.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub scan: bool,
    pub populations: bool,
    pub grid_size: usize,
    pub settle: SettleConfig,
    pub bootstrap: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            scan: true,
            populations: true,
            grid_size: 44,
            settle: SettleConfig::default(),
            bootstrap: 1000,
        }
    }
}

/// Reproducible description of one experiment. Missing fields take the
/// desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema: String,
    pub schema_version: u32,
    pub task: TaskConfig,
    pub paradigms: Vec<Paradigm>,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_hidden: usize,
    pub sl: SlConfig,
    pub rl: PpoConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: SCHEMA.into(),
            schema_version: SCHEMA_VERSION,
            task: TaskConfig::new(TaskKind::Dm),
            paradigms: vec![Paradigm::Rl, Paradigm::Sl],
            deltas: vec![0.3, 0.4],
            seeds: (0..10).collect(),
            n_hidden: 64,
            sl: SlConfig::default(),
            rl: PpoConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::InvalidConfig(format!("unknown schema '{}'", self.schema)));
        }
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.paradigms.is_empty() || self.deltas.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("empty paradigm, delta or seed list".into()));
        }
        if self.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidConfig("delta must be positive".into()));
        }
        if self.n_hidden == 0 {
            return Err(Error::InvalidConfig("n_hidden must be positive".into()));
        }
        if self.analysis.grid_size < 2 {
            return Err(Error::InvalidConfig("grid_size must be at least 2".into()));
        }
        self.task.validate()?;
        self.sl.validate()?;
        self.rl.validate()?;
        self.analysis.settle.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &paradigm in &self.paradigms {
            for &delta in &self.deltas {
                for &seed in &self.seeds {
                    out.push(CellKey {
                        paradigm,
                        delta,
                        seed,
                    });
                }
            }
        }
        out
    }

    pub fn grid(&self) -> CoherenceGrid {
        CoherenceGrid::with_size(self.analysis.grid_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub paradigm: Paradigm,
    pub delta: f64,
    pub seed: u64,
}

impl CellKey {
    pub fn dir_name(&self) -> String {
        format!("{}_d{}_s{}", self.paradigm.name(), self.delta, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the experiment output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAnalysis {
    pub counts: KindCounts,
    pub qp_fraction: f64,
    pub oscillatory_fraction: f64,
    pub sizes: Option<PopulationSizes>,
    pub mean_flagged_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub paradigm: Paradigm,
    pub delta: f64,
    pub seed: u64,
    pub status: TrainStatus,
    pub updates_used: usize,
    pub final_accuracy: f64,
    /// Highest probe accuracy seen at any evaluation.
    pub best_accuracy: f64,
    /// First evaluated update with accuracy at or above each threshold.
    pub first_reached: BTreeMap<String, usize>,
    pub failure: Option<String>,
    pub checkpoint: String,
    pub analysis: Option<CellAnalysis>,
    pub files: Vec<FileHash>,
}

impl NetworkRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            paradigm: self.paradigm,
            delta: self.delta,
            seed: self.seed,
        }
    }

    pub fn reached(&self, threshold: f64) -> Option<usize> {
        self.first_reached.get(&threshold_key(threshold)).copied()
    }
}

/// Accuracy thresholds tracked in every record.
pub const TRACKED_THRESHOLDS: [f64; 3] = [0.85, 0.9, 0.95];

fn threshold_key(t: f64) -> String {
    format!("{t:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub config: ExperimentConfig,
    pub records: Vec<NetworkRecord>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub complete: bool,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: ExperimentManifest = serde_json::from_str(&text)?;
        m.config.validate()?;
        Ok(m)
    }

    /// Checks that every file a record references exists and hash-verifies.
    pub fn verify(&self, out_dir: &Path) -> Result<()> {
        for r in &self.records {
            verify_files(out_dir, &r.files)?;
        }
        Ok(())
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn rel(out_dir: &Path, p: &Path) -> String {
    p.strip_prefix(out_dir)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn hash_entry(out_dir: &Path, p: &Path) -> Result<FileHash> {
    Ok(FileHash {
        path: rel(out_dir, p),
        sha256: sha256_file(p)?,
    })
}

pub fn verify_files(out_dir: &Path, files: &[FileHash]) -> Result<()> {
    for f in files {
        let p = out_dir.join(&f.path);
        if !p.exists() || sha256_file(&p)? != f.sha256 {
            return Err(Error::HashMismatch { path: p });
        }
    }
    Ok(())
}

/// Trains one network with the paradigm's trainer.
pub fn train_network(
    params: NetworkParams,
    task: &TaskConfig,
    paradigm: Paradigm,
    sl: &SlConfig,
    rl: &PpoConfig,
    seed: u64,
) -> Result<(NetworkParams, TrainingTrace)> {
    match paradigm {
        Paradigm::Sl => train_supervised(params, task, sl, seed),
        Paradigm::Rl => train_ppo(params, task, rl, seed),
    }
}

fn first_reached(trace: &TrainingTrace) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for t in TRACKED_THRESHOLDS {
        if let Some(r) = trace.rows.iter().find(|r| r.accuracy >= t) {
            m.insert(threshold_key(t), r.update);
        }
    }
    m
}

/// Trains and analyses one cell, writing its directory. `cell.json` is
/// written last.
pub fn run_cell(cfg: &ExperimentConfig, key: CellKey, out_dir: &Path) -> Result<NetworkRecord> {
    let dir = out_dir.join("cells").join(key.dir_name());
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let params = NetworkParams::init(cfg.n_hidden, key.delta, key.seed)?;
    let (params, trace) = train_network(params, &cfg.task, key.paradigm, &cfg.sl, &cfg.rl, key.seed)?;

    let mut produced: Vec<PathBuf> = Vec::new();
    let trace_path = dir.join("trace.csv");
    write(&trace_path, &trace.to_csv())?;
    produced.push(trace_path);
    let info = |update, accuracy| CheckpointInfo {
        seed: key.seed,
        task: cfg.task.task,
        paradigm: key.paradigm,
        update,
        accuracy,
    };
    let ck_dir = dir.join("checkpoint");
    checkpoint::save(&ck_dir, &params, &info(trace.updates_used, trace.final_accuracy))?;
    produced.push(ck_dir.join(checkpoint::MANIFEST_FILE));
    for name in ["w_hh", "w_ih", "w_ho", "w_hv"] {
        produced.push(ck_dir.join(format!("{name}.f64")));
    }
    if cfg.sl.schedule.checkpoint_interval > 0 || cfg.rl.schedule.checkpoint_interval > 0 {
        for s in &trace.snapshots {
            let sd = dir.join("snapshots").join(format!("u{}", s.update));
            checkpoint::save(&sd, &s.params, &info(s.update, s.accuracy))?;
            produced.push(sd.join(checkpoint::MANIFEST_FILE));
        }
    }

    let mut analysis = None;
    if trace.status == TrainStatus::Success && cfg.analysis.scan {
        let grid = cfg.grid();
        let maps = dynamics::scan_all_contexts(&params, cfg.task.task, &grid, &cfg.analysis.settle)?;
        let grid_path = dir.join("grid.csv");
        write(&grid_path, &dynamics::grid_csv(&maps))?;
        produced.push(grid_path);
        let counts = KindCounts::of(&maps);
        let mut a = CellAnalysis {
            counts,
            qp_fraction: counts.quasi_periodic_fraction(),
            oscillatory_fraction: counts.oscillatory_fraction(),
            sizes: None,
            mean_flagged_fraction: None,
        };
        if cfg.analysis.populations {
            let res = populations::assign_all(&maps, cfg.task.task, params.n_hidden())?;
            for (name, text) in [
                ("populations.csv", populations::assignments_csv(&res)),
                ("ordering.csv", populations::ordering_csv(&res)),
            ] {
                let p = dir.join(name);
                write(&p, &text)?;
                produced.push(p);
            }
            a.sizes = Some(res.sizes);
            a.mean_flagged_fraction = Some(
                res.flagged_fraction.iter().sum::<f64>() / res.flagged_fraction.len().max(1) as f64,
            );
        }
        analysis = Some(a);
    }

    let files = produced
        .iter()
        .map(|p| hash_entry(out_dir, p))
        .collect::<Result<Vec<_>>>()?;
    let best = trace.rows.iter().map(|r| r.accuracy).fold(0.0, f64::max);
    let record = NetworkRecord {
        paradigm: key.paradigm,
        delta: key.delta,
        seed: key.seed,
        status: trace.status,
        updates_used: trace.updates_used,
        final_accuracy: trace.final_accuracy,
        best_accuracy: best,
        first_reached: first_reached(&trace),
        failure: trace.failure.clone(),
        checkpoint: rel(out_dir, &ck_dir),
        analysis,
        files,
    };
    write(&dir.join(CELL_FILE), &serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

/// A completed cell that still verifies, if any.
pub fn load_verified_cell(key: CellKey, out_dir: &Path) -> Option<NetworkRecord> {
    let path = out_dir.join("cells").join(key.dir_name()).join(CELL_FILE);
    let text = fs::read_to_string(path).ok()?;
    let rec: NetworkRecord = serde_json::from_str(&text).ok()?;
    (rec.key() == key && verify_files(out_dir, &rec.files).is_ok()).then_some(rec)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Stop after computing this many new cells (simulates an interruption).
    pub stop_after_cells: Option<usize>,
}

/// Runs (or resumes) the experiment into `out_dir`.
pub fn run_ensemble(cfg: &ExperimentConfig, out_dir: &Path, opts: RunOptions) -> Result<ExperimentManifest> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started_at = now();
    let keys = cfg.cells();
    let cached: Vec<Option<NetworkRecord>> = keys.iter().map(|&k| load_verified_cell(k, out_dir)).collect();
    let mut todo: Vec<usize> = (0..keys.len()).filter(|&i| cached[i].is_none()).collect();
    let interrupted = opts.stop_after_cells.is_some_and(|n| n < todo.len());
    if let Some(n) = opts.stop_after_cells {
        todo.truncate(n);
    }
    let fresh: Vec<(usize, NetworkRecord)> = todo
        .par_iter()
        .map(|&i| run_cell(cfg, keys[i], out_dir).map(|r| (i, r)))
        .collect::<Result<_>>()?;
    let mut records: Vec<Option<NetworkRecord>> = cached;
    for (i, r) in fresh {
        records[i] = Some(r);
    }
    let records: Vec<NetworkRecord> = records.into_iter().flatten().collect();
    let mut manifest = ExperimentManifest {
        config: cfg.clone(),
        records,
        started_at,
        finished_at: None,
        complete: !interrupted,
    };
    if manifest.complete {
        manifest.finished_at = Some(now());
        write_tables(&manifest, out_dir)?;
    }
    write(
        &out_dir.join(EXPERIMENT_FILE),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    write_index(out_dir, &manifest)?;
    Ok(manifest)
}

pub const TABLES: [&str; 5] = [
    "qp_fraction.csv",
    "qp_map.csv",
    "population_sizes.csv",
    "success_probability.csv",
    "networks.csv",
];

fn groups(m: &ExperimentManifest) -> Vec<(Paradigm, f64, Vec<&NetworkRecord>)> {
    let mut out = Vec::new();
    for &p in &m.config.paradigms {
        for &d in &m.config.deltas {
            let rs = m
                .records
                .iter()
                .filter(|r| r.paradigm == p && r.delta == d)
                .collect();
            out.push((p, d, rs));
        }
    }
    out
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Table of the quasi-periodic fraction per paradigm and delta.
pub fn qp_fraction_table(m: &ExperimentManifest) -> String {
    let mut s = String::from(
        "paradigm,delta,networks,median_qp_fraction,mean_qp_fraction,ci_low,ci_high,network_fraction,median_oscillatory_fraction\n",
    );
    for (gi, (p, d, rs)) in groups(m).into_iter().enumerate() {
        let analysed: Vec<&CellAnalysis> = rs.iter().filter_map(|r| r.analysis.as_ref()).collect();
        let fr: Vec<f64> = analysed.iter().map(|a| a.qp_fraction).collect();
        let counts: Vec<KindCounts> = analysed.iter().map(|a| a.counts).collect();
        let osc: Vec<f64> = analysed.iter().map(|a| a.oscillatory_fraction).collect();
        let q = summarize_fractions(&fr, &counts, m.config.analysis.bootstrap, gi as u64);
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.name(),
            d,
            q.networks,
            fmt(q.median),
            fmt(q.mean),
            fmt(q.ci_low),
            fmt(q.ci_high),
            fmt(q.network_fraction),
            fmt(dynamics::median(&osc))
        ));
    }
    s
}

/// Mean population sizes and balance statistics per paradigm and delta.
pub fn population_table(m: &ExperimentManifest) -> String {
    let mut s = String::from(
        "paradigm,delta,networks,mean_g_s,mean_g_plus,mean_g_minus,mean_g_a,balanced_fraction,iqr_log_balance\n",
    );
    for (p, d, rs) in groups(m) {
        let sizes: Vec<PopulationSizes> = rs
            .iter()
            .filter_map(|r| r.analysis.as_ref().and_then(|a| a.sizes))
            .collect();
        let n = sizes.len() as f64;
        let mean = |f: fn(&PopulationSizes) -> usize| {
            if sizes.is_empty() {
                f64::NAN
            } else {
                sizes.iter().map(|x| f(x) as f64).sum::<f64>() / n
            }
        };
        let balanced = if sizes.is_empty() {
            f64::NAN
        } else {
            sizes.iter().filter(|x| x.is_balanced()).count() as f64 / n
        };
        let logs: Vec<f64> = sizes.iter().map(|x| x.log_balance()).collect();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.name(),
            d,
            sizes.len(),
            fmt(mean(|x| x.g_s)),
            fmt(mean(|x| x.g_plus)),
            fmt(mean(|x| x.g_minus)),
            fmt(mean(|x| x.g_a)),
            fmt(balanced),
            fmt(iqr(&logs))
        ));
    }
    s
}

pub fn iqr(xs: &[f64]) -> f64 {
    quantile(xs, 0.75) - quantile(xs, 0.25)
}

pub fn success_table(m: &ExperimentManifest) -> String {
    let mut s = String::from("paradigm,delta,attempts,successes,failures,budget_exceeded,probability\n");
    for (p, d, rs) in groups(m) {
        let count = |st: TrainStatus| rs.iter().filter(|r| r.status == st).count();
        let (ok, bad, over) = (
            count(TrainStatus::Success),
            count(TrainStatus::Failure),
            count(TrainStatus::BudgetExceeded),
        );
        let prob = if rs.is_empty() { f64::NAN } else { ok as f64 / rs.len() as f64 };
        s.push_str(&format!(
            "{},{},{},{ok},{bad},{over},{}\n",
            p.name(),
            d,
            rs.len(),
            fmt(prob)
        ));
    }
    s
}

pub fn networks_table(m: &ExperimentManifest) -> String {
    let mut s = String::from(
        "paradigm,delta,seed,status,updates_used,final_accuracy,best_accuracy,qp_fraction,oscillatory_fraction,g_s,g_plus,g_minus,g_a\n",
    );
    for r in &m.records {
        let a = r.analysis.as_ref();
        let sz = a.and_then(|a| a.sizes);
        let opt = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
        let st = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.paradigm.name(),
            r.delta,
            r.seed,
            st,
            r.updates_used,
            r.final_accuracy,
            r.best_accuracy,
            a.map_or(String::new(), |a| a.qp_fraction.to_string()),
            a.map_or(String::new(), |a| a.oscillatory_fraction.to_string()),
            opt(sz.map(|x| x.g_s)),
            opt(sz.map(|x| x.g_plus)),
            opt(sz.map(|x| x.g_minus)),
            opt(sz.map(|x| x.g_a)),
        ));
    }
    s
}

#[derive(Debug, Deserialize)]
struct GridRow {
    coh_a: f64,
    coh_b: f64,
    context: String,
    kind: String,
    fallback: String,
}

/// Per-grid-cell probability of a quasi-periodic (and of any oscillatory)
/// label across the analysed networks of each paradigm and delta.
pub fn qp_map_table(m: &ExperimentManifest, out_dir: &Path) -> Result<String> {
    let mut s = String::from("paradigm,delta,context,coh_a,coh_b,networks,qp_probability,oscillatory_probability\n");
    for (p, d, rs) in groups(m) {
        // key: (context, row index) preserving file order
        let mut acc: Vec<(String, f64, f64, usize, usize)> = Vec::new();
        let mut nets = 0usize;
        for r in rs.iter().filter(|r| r.analysis.is_some()) {
            let path = out_dir.join("cells").join(r.key().dir_name()).join("grid.csv");
            let mut rd = csv::Reader::from_path(&path)?;
            for (i, row) in rd.deserialize::<GridRow>().enumerate() {
                let row = row?;
                if nets == 0 {
                    acc.push((row.context.clone(), row.coh_a, row.coh_b, 0, 0));
                }
                let e = acc
                    .get_mut(i)
                    .ok_or_else(|| Error::Shape(format!("{} has extra rows", path.display())))?;
                if row.kind == "quasi_periodic" {
                    e.3 += 1;
                }
                if row.kind == "quasi_periodic" || row.fallback == "oscillating" {
                    e.4 += 1;
                }
            }
            nets += 1;
        }
        for (c, a, b, qp, osc) in acc {
            s.push_str(&format!(
                "{},{},{c},{a},{b},{nets},{},{}\n",
                p.name(),
                d,
                qp as f64 / nets as f64,
                osc as f64 / nets as f64
            ));
        }
    }
    Ok(s)
}

/// Writes every aggregate table under `out_dir/tables`.
pub fn write_tables(m: &ExperimentManifest, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = out_dir.join("tables");
    let texts = [
        qp_fraction_table(m),
        qp_map_table(m, out_dir)?,
        population_table(m),
        success_table(m),
        networks_table(m),
    ];
    let mut paths = Vec::new();
    for (name, text) in TABLES.iter().zip(texts) {
        let p = dir.join(name);
        write(&p, &text)?;
        paths.push(p);
    }
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputIndex {
    pub schema: String,
    pub complete: bool,
    pub files: Vec<FileHash>,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// `MANIFEST.json`: every output file with its hash.
pub fn write_index(out_dir: &Path, m: &ExperimentManifest) -> Result<OutputIndex> {
    let mut paths = Vec::new();
    collect_files(out_dir, &mut paths)?;
    let files = paths
        .iter()
        .filter(|p| p.file_name().is_some_and(|n| n != INDEX_FILE))
        .map(|p| hash_entry(out_dir, p))
        .collect::<Result<Vec<_>>>()?;
    let idx = OutputIndex {
        schema: format!("{SCHEMA}-index"),
        complete: m.complete,
        files,
    };
    write(&out_dir.join(INDEX_FILE), &serde_json::to_string_pretty(&idx)?)?;
    Ok(idx)
}

/// Regenerates the tables of a finished experiment from its manifest.
pub fn report(manifest_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let m = ExperimentManifest::load(manifest_path)?;
    let src = manifest_path.parent().unwrap_or(Path::new("."));
    m.verify(src)?;
    let dir_tables = write_tables(&m, src)?;
    if out_dir != src {
        let mut copied = Vec::new();
        for p in dir_tables {
            let dst = out_dir.join("tables").join(p.file_name().expect("table file"));
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            write(&dst, &text)?;
            copied.push(dst);
        }
        return Ok(copied);
    }
    Ok(dir_tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> ExperimentConfig {
        let mut c = ExperimentConfig {
            deltas: vec![0.3],
            seeds: vec![1, 2],
            n_hidden: 6,
            ..Default::default()
        };
        c.sl.schedule.max_updates = 3;
        c.sl.schedule.eval_interval = 1;
        c.sl.schedule.probe_trials = 20;
        c.sl.batch_size = 4;
        c.rl.schedule.max_updates = 2;
        c.rl.schedule.eval_interval = 1;
        c.rl.schedule.probe_trials = 20;
        c.rl.rollout_trials = 4;
        c.rl.minibatch_trials = 2;
        c.rl.epochs = 2;
        c.analysis.grid_size = 4;
        c.analysis.bootstrap = 20;
        // Analyses are exercised even though tiny runs never succeed.
        c.sl.schedule.accuracy_target = 0.01;
        c
    }

    #[test]
    fn schema_is_checked() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.schema_version = 99;
        assert!(c.validate().unwrap_err().is_config());
        assert!(ExperimentConfig::from_json("{\"deltas\": []}").is_err());
        let c = ExperimentConfig::from_json("{\"seeds\": [4]}").unwrap();
        assert_eq!(c.seeds, vec![4]);
        assert_eq!(c.deltas, ExperimentConfig::default().deltas);
    }

    #[test]
    fn success_probability_counts() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_ensemble(&tiny_config(), dir.path(), RunOptions::default()).unwrap();
        assert_eq!(m.records.len(), 4);
        let t = fs::read_to_string(dir.path().join("tables/success_probability.csv")).unwrap();
        for line in t.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let attempts: f64 = f[2].parse().unwrap();
            let ok: f64 = f[3].parse().unwrap();
            let p: f64 = f[6].parse().unwrap();
            assert_eq!(p, ok / attempts);
            assert!((0.0..=1.0).contains(&p));
        }
        m.verify(dir.path()).unwrap();
    }
}
