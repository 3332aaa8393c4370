mod common;

use common::repro;

#[test]
fn autoencoder_is_reproducible_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    repro::autoencoder(dir.path()).unwrap();
}

#[test]
fn multimodal_is_reproducible_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    repro::multimodal(dir.path()).unwrap();
}

#[test]
fn pca_is_reproducible_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    repro::pca(dir.path()).unwrap();
}

#[test]
fn experiment_drivers_are_seeded() {
    repro::experiments().unwrap();
}
