//! Reverse-mode gradients for the fixed architectures in this crate.
//!
//! [`bptt`] differentiates the recurrent network through whole trials;
//! [`autoencoder`] differentiates the embedding network including its
//! correlation-alignment term.

pub mod autoencoder;
pub mod bptt;

pub use bptt::{
    bptt_grad, episode_loss, record_tape, Episode, EpisodeTargets, LossBreakdown, LossSpec,
    NetworkGrads, Tape,
};

/// Global L2 norm over a set of tensors.
pub fn global_norm(tensors: &[&[f64]]) -> f64 {
    tensors
        .iter()
        .map(|t| t.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Rescales the tensors in place so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(tensors: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = tensors
        .iter()
        .map(|t| t.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for t in tensors.iter_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn clipping_bounds_norm_and_keeps_direction(
            a in proptest::collection::vec(-10.0f64..10.0, 1..20),
            b in proptest::collection::vec(-10.0f64..10.0, 1..20),
            max_norm in 0.01f64..5.0,
        ) {
            let (mut ca, mut cb) = (a.clone(), b.clone());
            let before = clip_global_norm(&mut [&mut ca, &mut cb], max_norm);
            let after = global_norm(&[&ca, &cb]);
            prop_assert!(after <= max_norm * (1.0 + 1e-12) || after <= before);
            prop_assert!(after <= before * (1.0 + 1e-12));
            // Parallel: every component scaled by the same nonnegative factor.
            let s = if before > 0.0 { after / before } else { 1.0 };
            for (x, y) in a.iter().chain(&b).zip(ca.iter().chain(&cb)) {
                prop_assert!((x * s - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn clip_to_half() {
        let mut g = vec![6.0, 8.0];
        let n = clip_global_norm(&mut [&mut g], 0.5);
        assert_eq!(n, 10.0);
        assert!((global_norm(&[&g]) - 0.5).abs() < 1e-15);
    }
}
