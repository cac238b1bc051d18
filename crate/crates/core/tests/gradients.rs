//! Central finite-difference checks of the recurrent-network gradients.

mod common;

use common::fd::{self, REL_TOL};

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let err = fd::cross_entropy_error();
    assert!(err < REL_TOL, "max relative error {err:e}");
}

#[test]
fn ppo_gradient_matches_finite_differences() {
    let err = fd::ppo_error();
    assert!(err < REL_TOL, "max relative error {err:e}");
}

#[test]
fn autoencoder_gradient_matches_finite_differences() {
    let err = fd::autoencoder_error();
    assert!(err < REL_TOL, "max relative error {err:e}");
}
