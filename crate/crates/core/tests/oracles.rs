mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rnnlab_core::dynamics::{self, analysis_spec, dominant_frequency, CoherenceGrid, SettleConfig, SettledWindow};
use rnnlab_core::infotheory::{gcmi_discrete, holm_correct, ks_uniform, permutation_test};
use rnnlab_core::populations::{assign_population, make_templates, ActivityTypeMatrix, PopulationAssignment, PopulationSizes};
use rnnlab_core::{Context, NetworkParams, TaskKind};

/// Box-Muller standard normal.
fn gauss(r: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[test]
fn holm_matches_closed_testing() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let m = r.random_range(1..=10);
        let p: Vec<f64> = (0..m)
            .map(|_| if r.random_bool(0.5) { r.random::<f64>() * 0.02 } else { r.random() })
            .collect();
        assert_eq!(holm_correct(&p, 0.01), common::holm_brute_force(&p, 0.01), "{p:?}");
    }
}

#[test]
fn template_assignment_is_exhaustive_argmin() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for task in [TaskKind::Dm, TaskKind::CtxDm] {
        let grid = CoherenceGrid::with_size(6);
        let templates = make_templates(task, &grid);
        let mut assignments: Vec<PopulationAssignment> = Vec::new();
        for k in 0..500 {
            // Mix pure noise with perturbed templates so that ties occur.
            let m = if k % 2 == 0 {
                ActivityTypeMatrix::from_fn(6, |_, _| r.random_range(0..4))
            } else {
                let base = &templates[r.random_range(0..4)];
                let flips = r.random_range(0..8);
                let mut m = base.clone();
                for _ in 0..flips {
                    let i = r.random_range(0..m.entries.len());
                    m.entries[i] = r.random_range(0..4);
                }
                m
            };
            let a = assign_population(&m, &templates).unwrap();
            assert_eq!(a.label, common::argmin_template(&m, &templates));
            assignments.push(a);
        }
        assert_eq!(PopulationSizes::of(&assignments).total(), assignments.len());
    }
}

#[test]
fn gcmi_reaches_its_population_limit() {
    // The copula estimator is consistent for its own functional, which is
    // not the exact mixture MI; see the quadrature comparison in acceptance.
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let classes: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let x: Vec<f64> = classes.iter().map(|&c| gauss(&mut r) + if c { 2.0 } else { -2.0 }).collect();
    let est = gcmi_discrete(&x, &classes).unwrap().bits;
    let limit = common::mixture_gcmi_limit_bits(2.0);
    assert!((est - limit).abs() < 0.02, "est {est} limit {limit}");
    assert!(limit < common::mixture_mi_bits(2.0));
}

#[test]
fn quadrature_truth_sanity() {
    // Well separated classes carry one full bit; identical ones carry none.
    assert!((common::mixture_mi_bits(8.0) - 1.0).abs() < 1e-6);
    assert!(common::mixture_mi_bits(0.0).abs() < 1e-9);
}

#[test]
fn null_p_values_are_uniform() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let p: Vec<f64> = (0..200)
        .map(|_| {
            let x: Vec<f64> = (0..100).map(|_| gauss(&mut r)).collect();
            let c: Vec<bool> = (0..100).map(|_| r.random_bool(0.5)).collect();
            permutation_test(&x, &c, 500, &mut r).unwrap().1
        })
        .collect();
    let d = ks_uniform(&p);
    assert!(d < 0.1, "KS distance {d}");
}

#[test]
fn settle_labels_stable_under_doubling() {
    let p = NetworkParams::init(32, 0.3, 4).unwrap();
    let short = SettleConfig::default();
    let long = SettleConfig {
        t_settle: 2 * short.t_settle,
        ..short
    };
    for &(a, b) in &[(0.0, 0.0), (0.2, -0.1), (-0.4, 0.3), (0.05, 0.4)] {
        for ctx in [Context::A, Context::B] {
            let spec = analysis_spec(TaskKind::CtxDm, ctx, a, b);
            let (r1, _) = dynamics::analyze_point(&p, &spec, &short);
            let (r2, _) = dynamics::analyze_point(&p, &spec, &long);
            assert_eq!(r1.kind, r2.kind);
            assert_eq!(r1.fallback, r2.fallback);
        }
    }
}

fn sinusoid_window(freqs: &[f64], n_hidden: usize, len: usize) -> SettledWindow {
    let mut states = Vec::with_capacity(len * n_hidden);
    for t in 0..len {
        for i in 0..n_hidden {
            let f = freqs[i % freqs.len()];
            let phase = i as f64 * 0.7;
            states.push(2.0 + (2.0 * std::f64::consts::PI * f * t as f64 + phase).sin());
        }
    }
    SettledWindow {
        n_hidden,
        states,
        input: [0.0; 7],
        active_set: (0..n_hidden).collect(),
        active_set_stable: true,
        diverged: false,
    }
}

#[test]
fn fft_frequency_recovers_sinusoids() {
    for f in [0.013, 0.05, 0.11, 0.2371, 0.4] {
        let w = sinusoid_window(&[f], 5, 200);
        let est = dominant_frequency(&w).unwrap();
        assert!((est - f).abs() < 0.005, "f {f} est {est}");
    }
}
