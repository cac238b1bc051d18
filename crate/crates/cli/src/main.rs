use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rnnlab_core::checkpoint::{self, CheckpointInfo};
use rnnlab_core::dynamics::{self, CoherenceGrid, KindCounts};
use rnnlab_core::embed::{self, AeConfig};
use rnnlab_core::ensemble::{self, ExperimentConfig, RunOptions};
use rnnlab_core::infotheory::{self, MiConfig};
use rnnlab_core::populations;
use rnnlab_core::{Error, NetworkParams, Paradigm, TaskConfig, TaskKind};

#[derive(Parser, Debug)]
#[command(name = "rnnlab", version, about = "Train ReLU RNNs on decision tasks and analyse them")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory that receives all outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (1 gives the serial reference execution).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network.
    Train(TrainArgs),
    /// Run or resume a manifest-driven ensemble.
    Ensemble(EnsembleArgs),
    /// Classify attractors over the coherence grid of a checkpoint.
    Scan(ScanArgs),
    /// Assign functional populations for a checkpoint.
    Populations(ScanArgs),
    /// Per-neuron mutual information with the choice.
    Mi(MiArgs),
    /// Train the alignment autoencoder and export 3-D codes.
    Embed(EmbedArgs),
    /// Regenerate aggregate tables from an experiment manifest.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value = "dm")]
    task: TaskKind,
    #[arg(long, default_value = "rl")]
    paradigm: Paradigm,
    /// Initialisation scale.
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    #[arg(long, default_value_t = 64)]
    n_hidden: usize,
    /// Override the update budget.
    #[arg(long)]
    max_updates: Option<usize>,
}

#[derive(Args, Debug)]
struct EnsembleArgs {
    /// Stop after this many newly computed cells.
    #[arg(long, hide = true)]
    stop_after_cells: Option<usize>,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Points per coherence axis.
    #[arg(long, default_value_t = 44)]
    grid: usize,
}

#[derive(Args, Debug)]
struct MiArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 44)]
    grid: usize,
    #[arg(long, default_value_t = 400)]
    trials: usize,
    #[arg(long, default_value_t = 10_000)]
    surrogates: usize,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Noisy repeats per coherence combination.
    #[arg(long, default_value_t = 4)]
    repeats: usize,
    #[arg(long)]
    max_updates: Option<usize>,
    /// Weight of the correlation alignment term.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn emit_error(kind: &str, message: String) {
    let line = serde_json::to_string(&ErrorLine { error: kind, message }).unwrap_or_default();
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            if code == 1 {
                emit_error("usage", e.kind().to_string());
            }
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            emit_error("config", "--threads must be positive".into());
            return ExitCode::from(1);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config() => {
            emit_error("config", e.to_string());
            ExitCode::from(1)
        }
        Err(e) => {
            emit_error("runtime", e.to_string());
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> rnnlab_core::Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)
        }
    }
}

fn write(path: &Path, text: &str) -> rnnlab_core::Result<()> {
    embed::write_text(path, text)?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> rnnlab_core::Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = &cli.out_dir;
    match &cli.command {
        Command::Train(a) => train(cli, cfg, a),
        Command::Ensemble(a) => {
            let m = ensemble::run_ensemble(
                &cfg,
                out,
                RunOptions {
                    stop_after_cells: a.stop_after_cells,
                },
            )?;
            println!(
                "{} cells recorded, complete: {}",
                m.records.len(),
                m.complete
            );
            Ok(())
        }
        Command::Scan(a) => {
            let (params, man) = checkpoint::load(&a.checkpoint)?;
            let grid = CoherenceGrid::with_size(a.grid);
            grid.validate()?;
            let maps = dynamics::scan_all_contexts(&params, man.task, &grid, &cfg.analysis.settle)?;
            write(&out.join("grid.csv"), &dynamics::grid_csv(&maps))?;
            let c = KindCounts::of(&maps);
            println!(
                "fixed_point {} quasi_periodic {} unresolved {}",
                c.fixed_point, c.quasi_periodic, c.unresolved
            );
            Ok(())
        }
        Command::Populations(a) => {
            let (params, man) = checkpoint::load(&a.checkpoint)?;
            let grid = CoherenceGrid::with_size(a.grid);
            grid.validate()?;
            let (_, res) = populations::classify_network(&params, man.task, &grid, &cfg.analysis.settle)?;
            write(&out.join("populations.csv"), &populations::assignments_csv(&res))?;
            write(&out.join("ordering.csv"), &populations::ordering_csv(&res))?;
            let s = res.sizes;
            println!("G_s {} G_plus {} G_minus {} G_a {}", s.g_s, s.g_plus, s.g_minus, s.g_a);
            Ok(())
        }
        Command::Mi(a) => {
            let (params, man) = checkpoint::load(&a.checkpoint)?;
            let grid = CoherenceGrid::with_size(a.grid);
            grid.validate()?;
            let (_, res) = populations::classify_network(&params, man.task, &grid, &cfg.analysis.settle)?;
            let mc = MiConfig {
                n_trials: a.trials,
                n_surrogates: a.surrogates,
                ..MiConfig::default()
            };
            let task = TaskConfig {
                task: man.task,
                ..cfg.task.clone()
            };
            let corpus = infotheory::sample_corpus(&params, &task, &mc, cli.seed);
            let labels = res.labels();
            let order = res.ordering();
            let mi = infotheory::mi_map(&corpus, Some(&labels), Some(&order), &mc, cli.seed)?;
            write(&out.join("mi.csv"), &infotheory::mi_csv(&mi))?;
            Ok(())
        }
        Command::Embed(a) => {
            let (params, man) = checkpoint::load(&a.checkpoint)?;
            let task = TaskConfig {
                task: man.task,
                ..cfg.task.clone()
            };
            let cohs: Vec<f64> = task
                .coherences
                .iter()
                .flat_map(|&c| [-c, c])
                .collect();
            let corpus = embed::grid_corpus(&params, &task, &cohs, a.repeats, cli.seed);
            let mut ae = AeConfig {
                lambda: a.lambda,
                ..AeConfig::default()
            };
            if let Some(m) = a.max_updates {
                ae.max_updates = m;
            }
            let t = embed::train_autoencoder(&corpus, &ae, cli.seed)?;
            let codes = t.encode(&corpus.activity, corpus.len());
            write(&out.join("codes.csv"), &embed::codes_csv(&corpus, &codes))?;
            write(&out.join("ae_curve.csv"), &embed::curve_csv(&t.curve))?;
            let (_, pc) = embed::pca_first_component(&corpus);
            let mut s = String::from("pc1,stage,coh_prim,coh_sec\n");
            for (r, v) in pc.iter().enumerate() {
                s.push_str(&format!(
                    "{v},{},{},{}\n",
                    corpus.stage[r].name(),
                    corpus.coh_prim[r],
                    corpus.coh_sec[r]
                ));
            }
            write(&out.join("pca.csv"), &s)?;
            println!(
                "final loss {} reconstruction/variance {:.3} R(C1, coh_prim) {:.3} converged {}",
                t.final_loss.total,
                t.final_loss.reconstruction / t.corpus_variance,
                t.final_loss.r_primary,
                t.converged
            );
            Ok(())
        }
        Command::Report(a) => {
            for p in ensemble::report(&a.manifest, out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn train(cli: &Cli, mut cfg: ExperimentConfig, a: &TrainArgs) -> rnnlab_core::Result<()> {
    cfg.task.task = a.task;
    if let Some(m) = a.max_updates {
        cfg.sl.schedule.max_updates = m;
        cfg.rl.schedule.max_updates = m;
    }
    cfg.validate()?;
    let params = NetworkParams::init(a.n_hidden, a.delta, cli.seed)?;
    let (params, trace) = ensemble::train_network(params, &cfg.task, a.paradigm, &cfg.sl, &cfg.rl, cli.seed)?;
    let out = &cli.out_dir;
    let info = |update, accuracy| CheckpointInfo {
        seed: cli.seed,
        task: a.task,
        paradigm: a.paradigm,
        update,
        accuracy,
    };
    write(&out.join("trace.csv"), &trace.to_csv())?;
    checkpoint::save(&out.join("checkpoint"), &params, &info(trace.updates_used, trace.final_accuracy))?;
    for s in &trace.snapshots {
        checkpoint::save(
            &out.join("snapshots").join(format!("u{}", s.update)),
            &s.params,
            &info(s.update, s.accuracy),
        )?;
    }
    println!(
        "{} after {} updates, accuracy {:.3}",
        trace.status.name(),
        trace.updates_used,
        trace.final_accuracy
    );
    Ok(())
}
