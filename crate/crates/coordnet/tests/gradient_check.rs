//! Finite-difference verification of every reverse-mode gradient path:
//! conv, dense, relu, softmax+cross-entropy, maxpool routing, and the full
//! VAE objective, each over 20 seeded random instances per float width.
//! Instance construction lives in `gradcheck::suite` so the experiment
//! harness can rerun the identical checks.

use coordnet::gradcheck::suite;

const INSTANCES: u64 = 20;

#[test]
fn conv_gradients_f32() {
    let s = suite::conv::<f32>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn conv_gradients_f64() {
    let s = suite::conv::<f64>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn dense_gradients_f32() {
    let s = suite::dense::<f32>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn dense_gradients_f64() {
    let s = suite::dense::<f64>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn relu_gradients_f32() {
    let s = suite::relu_suite::<f32>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn relu_gradients_f64() {
    let s = suite::relu_suite::<f64>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn softmax_cross_entropy_gradients_f32() {
    let s = suite::softmax_cross_entropy::<f32>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn softmax_cross_entropy_gradients_f64() {
    let s = suite::softmax_cross_entropy::<f64>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn maxpool_routing_gradients_f32() {
    let s = suite::maxpool::<f32>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn maxpool_routing_gradients_f64() {
    let s = suite::maxpool::<f64>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn vae_loss_gradients_f32() {
    let s = suite::vae::<f32>(INSTANCES);
    assert!(s.ok(), "{s}");
}

#[test]
fn vae_loss_gradients_f64() {
    let s = suite::vae::<f64>(INSTANCES);
    assert!(s.ok(), "{s}");
}
