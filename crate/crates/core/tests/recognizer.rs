use imgauth::features::FeatureVector;
use imgauth::raster::Raster;
use imgauth::recognizer::{
    euclidean_match, evaluate, model_to_bytes, recognize, save_model, synthetic_split, train_pipeline, Gallery,
    PipelineConfig, PipelineModel, Recognition, SyntheticSplit,
};
use imgauth::resample::{warp, AffineParams, KernelSpec};
use imgauth::synth;
use proptest::prelude::*;
use std::sync::OnceLock;

fn trained() -> &'static (PipelineModel, SyntheticSplit) {
    static MODEL: OnceLock<(PipelineModel, SyntheticSplit)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let split = synthetic_split(6, 64, 3, 4, 4.0, 21);
        let (model, _) = train_pipeline(&split.training, None, &PipelineConfig::default()).unwrap();
        (model, split)
    })
}

proptest! {
    #[test]
    fn match_agrees_with_brute_force(
        points in proptest::collection::vec(proptest::collection::vec(-10i32..10, 3), 1..20),
        probe in proptest::collection::vec(-10i32..10, 3),
    ) {
        let to_fv = |v: &[i32]| FeatureVector::new(v.iter().map(|&x| f64::from(x)).collect());
        let mut g = Gallery::new("g");
        for (i, p) in points.iter().enumerate() {
            g.enroll(format!("p{i}"), to_fv(p), "").unwrap();
        }
        let q = to_fv(&probe);
        let (label, dist) = euclidean_match(&q, &g).unwrap();
        let dists: Vec<f64> = points.iter().map(|p| to_fv(p).distance(&q)).collect();
        let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let first = dists.iter().position(|&d| d == best).unwrap();
        prop_assert_eq!(dist, best);
        prop_assert_eq!(label, format!("p{first}"));
    }
}

#[test]
fn noisy_probes_are_recognized() {
    let (model, split) = trained();
    let report = evaluate(model, &split.probes).unwrap();
    assert!(report.accuracy() >= 0.95, "accuracy {}", report.accuracy());
}

#[test]
fn decision_ignores_intensity_scaling() {
    let (model, split) = trained();
    for probe in &split.probes {
        let base = model.classify(&model.extract_features(&probe.image, None).unwrap()).unwrap().0;
        for k in [0.5, 2.0, 3.0] {
            let scaled = probe.image.map(|v| v * k);
            let got = model.classify(&model.extract_features(&scaled, None).unwrap()).unwrap().0;
            assert_eq!(got, base, "{} scaled by {k}", probe.source);
        }
    }
}

#[test]
fn gate_blocks_upscaled_probe() {
    let (model, split) = trained();
    let probe = &split.probes[0];
    match recognize(&probe.image, None, model, true).unwrap() {
        Recognition::Matched(m) => assert_eq!(m.gate.as_str(), "ORIGINAL"),
        Recognition::Blocked(v) => panic!("genuine probe blocked at score {}", v.score),
    }
    let up: Raster<f64> = synth::quantized(
        &warp(&probe.image, &AffineParams::scale(2.0, 2.0), &KernelSpec::linear(), (128, 128)).unwrap(),
    );
    assert!(matches!(recognize(&up, None, model, true).unwrap(), Recognition::Blocked(_)));
    assert!(matches!(recognize(&up, None, model, false).unwrap(), Recognition::Matched(_)));
}

#[test]
fn retraining_writes_identical_model_files() {
    let (model, split) = trained();
    let (again, _) = train_pipeline(&split.training, None, &PipelineConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.model"), dir.path().join("b.model"));
    save_model(model, &a).unwrap();
    save_model(&again, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(&a).unwrap(), model_to_bytes(model));
}
