use imgauth::preprocess::{contrast_stretch, crop, hist_equalize, preprocess, resize, PreprocConfig, Rect};
use imgauth::raster::Raster;
use imgauth::resample::KernelSpec;
use imgauth::synth;
use proptest::prelude::*;
use rand::Rng;

fn image(w: usize, h: usize, seed: u64) -> Raster<f64> {
    let mut r = synth::rng(seed);
    Raster::from_fn(w, h, |_, _| r.random_range(0.0..255.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equalize_is_idempotent(seed in 0u64..10_000, w in 1usize..30, h in 1usize..30) {
        let once = hist_equalize(&image(w, h, seed));
        prop_assert_eq!(hist_equalize(&once), once);
    }

    #[test]
    fn equalized_levels_follow_cdf(seed in 0u64..10_000) {
        let img = image(20, 15, seed).map(|v| v.round());
        let eq = hist_equalize(&img);
        let n = img.len() as f64;
        for (i, &v) in img.pixels().iter().enumerate() {
            let below = img.pixels().iter().filter(|&&u| u <= v).count() as f64;
            let min_count = img.pixels().iter().filter(|&&u| u <= img.min_max().0).count() as f64;
            let expect = ((below - min_count) / (n - min_count) * 255.0).round();
            prop_assert_eq!(eq.pixels()[i], expect);
        }
    }

    #[test]
    fn stretch_is_monotone_into_byte_range(seed in 0u64..10_000, lo in 0.0f64..20.0, hi in 80.0f64..100.0) {
        let img = image(17, 23, seed);
        let s = contrast_stretch(&img, lo, hi).unwrap();
        let mut pairs: Vec<(f64, f64)> = img.pixels().iter().copied().zip(s.pixels().iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            prop_assert!(w[1].1 >= w[0].1);
        }
        prop_assert!(s.pixels().iter().all(|v| (0.0..=255.0).contains(v)));
    }

    #[test]
    fn crops_compose(seed in 0u64..1000, a in 0usize..6, b in 0usize..6, c in 0usize..4, d in 0usize..4) {
        let img = image(24, 20, seed);
        let outer = Rect::new(a, b, 14, 12);
        let inner = Rect::new(c, d, 8, 6);
        let twice = crop(&crop(&img, outer).unwrap(), inner).unwrap();
        let once = crop(&img, Rect::new(a + c, b + d, 8, 6)).unwrap();
        prop_assert_eq!(twice, once);
    }
}

#[test]
fn halving_then_doubling_a_gradient_is_close() {
    let img = Raster::from_fn(64, 48, |x, y| 2.0 * x as f64 + 1.5 * y as f64);
    let linear = KernelSpec::linear();
    let small = resize(&img, 32, 24, &linear).unwrap();
    let back = resize(&small, 64, 48, &linear).unwrap();
    let se: f64 = back.pixels().iter().zip(img.pixels()).map(|(a, b)| (a - b).powi(2)).sum();
    let rms = (se / img.len() as f64).sqrt();
    assert!(rms < 2.0, "rms {rms}");
}

#[test]
fn chain_output_has_target_size() {
    let cfg = PreprocConfig {
        target_size: (20, 24),
        ..PreprocConfig::default()
    };
    let img = image(50, 40, 1);
    let out = preprocess(&img, &cfg, Some(Rect::new(5, 4, 30, 30))).unwrap();
    assert_eq!((out.width(), out.height()), (20, 24));
    assert!(preprocess(&img, &cfg, Some(Rect::new(30, 0, 30, 30))).is_err());
}
