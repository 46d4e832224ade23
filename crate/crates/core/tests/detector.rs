use imgauth::authenticator::{
    authenticate, autocovariance, derivative_image, emit_spectrum, periodicity_report, radon, spectrum_csv, Axis,
    DetectorConfig, Label,
};
use imgauth::raster::Raster;
use imgauth::resample::KernelSpec;
use imgauth::synth;
use proptest::prelude::*;
use rand::Rng;

fn rel_rms(a: &[f64], b: &[f64]) -> f64 {
    let norm: f64 = a.iter().map(|v| v * v).sum();
    let se: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (se / norm).sqrt()
}

#[test]
fn uniform_disk_projections_agree() {
    let n = 241;
    let c = 120.0;
    let disk = Raster::from_fn(n, n, |x, y| {
        if (x as f64 - c).hypot(y as f64 - c) <= 100.0 {
            1.0
        } else {
            0.0
        }
    });
    let angles: Vec<u32> = (0..180).collect();
    let sino = radon(&disk, &angles).unwrap();
    let cdf = |p: &[f64]| -> Vec<f64> {
        let total: f64 = p.iter().sum();
        p.iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc / total)
            })
            .collect()
    };
    let reference = cdf(sino.projections[0].samples());
    for (a, p) in sino.projections.iter().enumerate() {
        let worst = cdf(p.samples())
            .iter()
            .zip(&reference)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.005, "angle {a}: cdf gap {worst}");
    }
}

#[test]
fn quarter_rotation_permutes_angles() {
    let mut rng = synth::rng(17);
    let img = Raster::from_fn(64, 64, |x, y| {
        let blob = 100.0 * (-((x as f64 - 20.0).powi(2) + (y as f64 - 40.0).powi(2)) / 200.0).exp();
        blob + rng.random_range(0.0..5.0)
    });
    let rot = img.rotate90_ccw();
    let angles: Vec<u32> = (0..180).collect();
    let s0 = radon(&img, &angles).unwrap();
    let s1 = radon(&rot, &angles).unwrap();
    for theta in 0..180usize {
        let original = s0.projections[theta].samples();
        let mut rotated = s1.projections[(theta + 90) % 180].samples().to_vec();
        if theta < 90 {
            // odd bin count: the centre bin sits half a bin left of the middle
            rotated.reverse();
            rotated.rotate_left(1);
        }
        let e = rel_rms(original, &rotated);
        assert!(e < 0.01, "theta {theta}: rel rms {e}");
    }
}

#[test]
fn upscale_peaks_at_half_cycle_on_axis() {
    let img: Raster<f64> = synth::upscaled_noise(128, 2, &KernelSpec::linear(), 77);
    let report = periodicity_report(&img, &DetectorConfig::default()).unwrap();
    let bin = report.spectrum[1].0 - report.spectrum[0].0;
    assert!((report.best_frequency - 0.5).abs() <= bin);
    assert!(report.best_angle % 90 == 0, "best angle {}", report.best_angle);
    let max = report.per_angle_score.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(report.score, max);
}

#[test]
fn verdicts_and_spectrum_files() {
    let config = DetectorConfig::default();
    let forged: Raster<f64> = synth::upscaled_noise(64, 2, &KernelSpec::linear(), 3);
    let pristine: Raster<f64> = synth::pristine_noise(128, 4);
    let vf = authenticate(&forged, &config).unwrap();
    let vp = authenticate(&pristine, &config).unwrap();
    assert_eq!(vf.label, Label::Forged);
    assert_eq!(vp.label, Label::Original);
    for v in [&vf, &vp] {
        assert_eq!(v.label == Label::Forged, v.score > v.threshold);
    }
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    emit_spectrum(&vf, &a).unwrap();
    emit_spectrum(&vf, &b).unwrap();
    let ca = std::fs::read(a.with_extension("csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.with_extension("csv")).unwrap());
    let report = vf.report.as_ref().unwrap();
    assert_eq!(String::from_utf8(ca).unwrap().lines().count(), report.spectrum.len() + 1);
    assert_eq!(spectrum_csv(report).lines().count(), report.spectrum.len() + 1);
    assert!(authenticate(&Raster::filled(31, 40, 1.0), &config).is_err());
}

#[test]
fn f32_detector_agrees() {
    let img: Raster<f32> = synth::upscaled_noise(64, 2, &KernelSpec::linear(), 5);
    let v = authenticate(&img, &DetectorConfig::<f32>::default()).unwrap();
    assert_eq!(v.label, Label::Forged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn verdict_is_scale_invariant(seed in 0u64..1000, k in 0.05f64..20.0, forged in any::<bool>()) {
        let img: Raster<f64> = if forged {
            synth::upscaled_noise(64, 2, &KernelSpec::linear(), seed)
        } else {
            synth::pristine_noise(64, seed)
        };
        let config = DetectorConfig::default();
        let a = authenticate(&img, &config).unwrap();
        let b = authenticate(&img.map(|v| v * k), &config).unwrap();
        prop_assert_eq!(a.label, b.label);
        prop_assert!((a.score - b.score).abs() <= 1e-6 * a.score.max(1.0));
    }

    #[test]
    fn lag_zero_dominates(xs in proptest::collection::vec(-50.0f64..50.0, 20..80), lag in 1usize..19) {
        let r = autocovariance(&xs, lag).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let r0: f64 = xs.iter().map(|v| (v - mean).powi(2)).sum();
        prop_assert!((r.values[0] - r0).abs() <= 1e-9 * r0.max(1.0));
        for &v in &r.values {
            prop_assert!(v.abs() <= r.values[0] + 1e-9);
        }
    }

    #[test]
    fn mass_is_conserved(seed in 0u64..1000, w in 8usize..40, h in 8usize..40, n in 1u32..=2) {
        let mut rng = synth::rng(seed);
        let img = Raster::from_fn(w, h, |_, _| rng.random_range(0.0..255.0));
        let d = derivative_image(&img, n, Axis::Rows).unwrap().map(f64::abs);
        let total: f64 = d.pixels().iter().sum();
        let sino = radon(&d, &[0, 17, 45, 90, 123, 179]).unwrap();
        for p in &sino.projections {
            prop_assert!((p.samples().iter().sum::<f64>() - total).abs() <= 0.005 * total);
        }
    }
}
