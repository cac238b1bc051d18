//! Reference computations shared by the oracle and acceptance tests.
#![allow(dead_code)]

pub mod fd;

use rnnlab_core::populations::{ActivityTypeMatrix, Population};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Holm's procedure as closed testing with Bonferroni local tests:
/// H_j is rejected iff every intersection hypothesis containing j is
/// rejected, i.e. `min_{i in S} p_i <= alpha / |S|` for all S containing j.
pub fn holm_brute_force(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    assert!(m <= 16);
    (0..m)
        .map(|j| {
            (0u32..1 << m).filter(|s| s & (1 << j) != 0).all(|s| {
                let size = s.count_ones() as f64;
                let min = (0..m)
                    .filter(|i| s & (1 << i) != 0)
                    .map(|i| p[i])
                    .fold(f64::INFINITY, f64::min);
                min <= alpha / size
            })
        })
        .collect()
}

/// Composite Simpson rule over [a, b] with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

fn mixture(mu: f64) -> (Normal, Normal) {
    (Normal::new(-mu, 1.0).unwrap(), Normal::new(mu, 1.0).unwrap())
}

/// I(X; C) in bits for X | C ~ N(+-mu, 1) with equiprobable C.
pub fn mixture_mi_bits(mu: f64) -> f64 {
    let (n0, n1) = mixture(mu);
    let lim = mu + 12.0;
    let h_x = simpson(
        |x| {
            let p = 0.5 * (n0.pdf(x) + n1.pdf(x));
            if p > 0.0 { -p * p.ln() } else { 0.0 }
        },
        -lim,
        lim,
        20_000,
    );
    let h_x_given_c = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    (h_x - h_x_given_c) / std::f64::consts::LN_2
}

/// Large-sample limit of the copula estimator on the same mixture:
/// Z = Phi^-1(F(X)) is standard normal overall, and the estimator converges
/// to -1/2 sum_c p_c log2 Var(Z | c).
pub fn mixture_gcmi_limit_bits(mu: f64) -> f64 {
    let (n0, n1) = mixture(mu);
    let std = Normal::standard();
    let z = |x: f64| {
        let f = 0.5 * (n0.cdf(x) + n1.cdf(x));
        std.inverse_cdf(f.clamp(1e-300, 1.0 - 1e-16))
    };
    let lim = mu + 10.0;
    let var_given = |n: &Normal| {
        let m1 = simpson(|x| z(x) * n.pdf(x), -lim, lim, 20_000);
        let m2 = simpson(|x| z(x).powi(2) * n.pdf(x), -lim, lim, 20_000);
        m2 - m1 * m1
    };
    -0.5 * 0.5 * (var_given(&n0).log2() + var_given(&n1).log2())
}

/// Exhaustive nearest template with ties resolved in population order.
pub fn argmin_template(m: &ActivityTypeMatrix, templates: &[ActivityTypeMatrix; 4]) -> Population {
    let dist = |t: &ActivityTypeMatrix| -> u64 {
        m.entries
            .iter()
            .zip(&t.entries)
            .map(|(&a, &b)| {
                let d = a as i64 - b as i64;
                (d * d) as u64
            })
            .sum()
    };
    let mut cands: Vec<(u64, usize)> = templates.iter().enumerate().map(|(k, t)| (dist(t), k)).collect();
    cands.sort();
    Population::ALL[cands[0].1]
}
