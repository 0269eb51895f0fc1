//! Analytic input and parameter gradients against central finite differences.

mod common;

#[test]
fn input_gradient_matches_central_differences() {
    common::checks::input_gradient(11, 100, 1e-5).unwrap();
}

#[test]
fn loss_gradient_matches_central_differences() {
    common::checks::loss_gradient(12, 100, 1e-4).unwrap();
}
