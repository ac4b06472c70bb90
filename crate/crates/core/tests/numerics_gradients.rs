mod common;

use common::{conv_oracle, layer_case, LayerKind};
use mocap_core::rng::derive_rng;

const CASES: usize = 100;
const TOLERANCE: f64 = 1e-4;

fn check(kind: LayerKind) {
    let mut rng = derive_rng(17, &format!("gradcheck/{kind:?}"));
    for case in 0..CASES {
        let err = layer_case(kind, &mut rng).unwrap();
        assert!(err < TOLERANCE, "{kind:?} case {case}: relative error {err:e}");
    }
}

#[test]
fn conv1d_gradients() {
    check(LayerKind::Conv1d);
}

#[test]
fn maxpool_gradients() {
    check(LayerKind::MaxPool);
}

#[test]
fn upsample_gradients() {
    check(LayerKind::Upsample);
}

#[test]
fn dense_gradients() {
    check(LayerKind::Dense);
}

#[test]
fn batchnorm_gradients() {
    check(LayerKind::BatchNorm);
}

#[test]
fn softmax_cross_entropy_gradients() {
    check(LayerKind::SoftmaxCrossEntropy);
}

#[test]
fn conv1d_matches_direct_loops() {
    let worst = conv_oracle(1000, 3).unwrap();
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}
