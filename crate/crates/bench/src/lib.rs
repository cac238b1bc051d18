//! Benchmarks live in `benches/`; run them with `cargo bench -p rnnlab-bench`.

use rnnlab_core::{NetworkParams, TaskConfig, TaskKind, Trial};

/// Network and trial batch shared by the benchmarks.
pub fn fixture(n_hidden: usize, trials: usize) -> (NetworkParams, Vec<Trial>) {
    let params = NetworkParams::init(n_hidden, 0.3, 1).expect("valid init");
    let task = TaskConfig::new(TaskKind::CtxDm);
    let batch = task.sample_trials(trials, &mut rnnlab_core::rng::stream(2));
    (params, batch)
}
