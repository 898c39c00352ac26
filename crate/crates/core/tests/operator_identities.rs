mod common;

use common::{composition_error, magnitude_error, pairing_error};

#[test]
fn weyl_wigner_pairing_on_random_pairs() {
    let err = pairing_error(2024);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn magnitude_identity_on_random_offsets() {
    let err = magnitude_error(77);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn composition_matches_sequential_application() {
    let err = composition_error(5);
    assert!(err <= 1e-6, "{err}");
}
