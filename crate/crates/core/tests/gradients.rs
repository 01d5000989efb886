//! Central finite differences against backpropagation, 20 seeds per layer.

mod common;

use common::gradcheck::{gradient_cases, gradient_error, softmax_ce_error, TOL};

#[test]
fn every_layer_kind_matches_finite_differences() {
    for (name, input, layers, classes) in gradient_cases() {
        let e = gradient_error(&input, &layers, classes);
        assert!(e < TOL, "{name}: relative error {e}");
    }
}

#[test]
fn softmax_cross_entropy_logit_gradient() {
    let e = softmax_ce_error();
    assert!(e < TOL, "relative error {e}");
}
