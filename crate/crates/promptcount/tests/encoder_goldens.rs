//! Pinned outputs of the deterministic toy backbone.
//!
//! These vectors were recorded once from a fresh build (seed 1234, d=8,
//! patch size 16) and frozen. Any drift means the backbone is no longer
//! reproducible across versions, which would silently invalidate stored
//! embedding dumps and checkpoints.

use approx::assert_abs_diff_eq;
use ndarray::Array3;
use promptcount::encoders::tokenizer::Tokenizer;
use promptcount::encoders::{encode_visual, Backbone, FfnHead, ToyBackbone};

const VISUAL_ZERO_GOLDEN: [f64; 8] = [
    -0.1815797251246114,
    -0.0848045237744568,
    -0.29980833130151296,
    0.07359559128215687,
    -0.08284954108887033,
    -0.13636300208168972,
    0.4154944546345303,
    0.2510440333534907,
];

const TEXT_SEASHELLS_GOLDEN: [f64; 8] = [
    0.011669458538544938,
    0.0002840380406990764,
    0.09055503545028064,
    -0.004769000879066079,
    -0.09348183475216806,
    0.08864833393622983,
    0.05544521803327573,
    0.09841563013979704,
];

#[test]
fn toy_backbone_zero_image_matches_recorded_golden() {
    let backbone = ToyBackbone::new(8, 16, 1234);
    let img = Array3::<f32>::zeros((16, 16, 3));
    let (_, pooled) = backbone.encode_image(&img).unwrap();
    for (got, want) in pooled.iter().zip(VISUAL_ZERO_GOLDEN) {
        assert_abs_diff_eq!(*got, want, epsilon = 0.0);
    }
    // identity head must not perturb the pinned values either
    let head = FfnHead::identity(8);
    let enc = encode_visual(&backbone, &head, &img, false).unwrap();
    for (got, want) in enc.pooled.iter().zip(VISUAL_ZERO_GOLDEN) {
        assert_abs_diff_eq!(*got, want, epsilon = 0.0);
    }
}

#[test]
fn toy_backbone_text_matches_recorded_golden() {
    let backbone = ToyBackbone::new(8, 16, 1234);
    let tok = Tokenizer::default();
    let e = backbone.encode_tokens(&tok.encode("sea shells")).unwrap();
    for (got, want) in e.iter().zip(TEXT_SEASHELLS_GOLDEN) {
        assert_abs_diff_eq!(*got, want, epsilon = 0.0);
    }
}
