//! Threshold calibration for the detector.
//!
//! The decision threshold is the 99th percentile (nearest rank) of the
//! scores of pristine images. A ROC table over every observed score is
//! produced alongside it.

use rayon::prelude::*;

use crate::authenticator::{periodicity_report, DetectorConfig};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::resample::KernelSpec;
use crate::scalar::Scalar;
use crate::synth;

/// Side length of synthesized calibration images.
pub const CALIBRATION_SIZE: usize = 128;

/// Percentile of pristine scores used as the threshold.
pub const PRISTINE_PERCENTILE: f64 = 99.0;

/// Seed for item `index` of stream `stream` derived from a base seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pristine and 2× linearly upscaled noise images for calibration run `seed`.
pub fn calibration_pair<T: Scalar>(seed: u64, index: u64) -> (Raster<T>, Raster<T>) {
    let pristine = synth::pristine_noise(CALIBRATION_SIZE, derive_seed(seed, 1, index));
    let forged = synth::upscaled_noise(
        CALIBRATION_SIZE,
        2,
        &KernelSpec::linear(),
        derive_seed(seed, 2, index),
    );
    (pristine, forged)
}

/// Detector scores of a set of images.
pub fn score_images<T: Scalar>(images: &[Raster<T>], config: &DetectorConfig<T>) -> Result<Vec<T>> {
    images
        .par_iter()
        .map(|img| periodicity_report(img, config).map(|r| r.score))
        .collect()
}

/// Nearest-rank percentile of `scores`.
pub fn percentile<T: Scalar>(scores: &[T], pct: f64) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::Empty("score list"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint<T> {
    pub threshold: T,
    pub tpr: f64,
    pub fpr: f64,
}

/// Rates of `score > threshold` at every distinct observed score, plus a
/// point below all scores.
pub fn roc_curve<T: Scalar>(pristine: &[T], forged: &[T]) -> Vec<RocPoint<T>> {
    let mut thresholds: Vec<T> = pristine.iter().chain(forged).copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    thresholds.dedup();
    if let Some(&lowest) = thresholds.first() {
        thresholds.insert(0, lowest - T::one());
    }
    thresholds
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            tpr: rate_above(forged, t),
            fpr: rate_above(pristine, t),
        })
        .collect()
}

/// Fraction of `scores` strictly above `threshold`.
pub fn rate_above<T: Scalar>(scores: &[T], threshold: T) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s > threshold).count() as f64 / scores.len() as f64
}

pub fn roc_csv<T: Scalar>(roc: &[RocPoint<T>]) -> String {
    use crate::plot::sig9;
    let mut out = String::from("threshold,tpr,fpr\n");
    for p in roc {
        out.push_str(&format!(
            "{},{},{}\n",
            sig9(p.threshold.as_f64()),
            sig9(p.tpr),
            sig9(p.fpr)
        ));
    }
    out
}

/// Outcome of a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T> {
    pub threshold: T,
    pub pristine_scores: Vec<T>,
    pub forged_scores: Vec<T>,
    pub tpr: f64,
    pub fpr: f64,
    pub roc: Vec<RocPoint<T>>,
}

/// Calibrates on precomputed scores.
pub fn calibrate_scores<T: Scalar>(pristine: Vec<T>, forged: Vec<T>) -> Result<Calibration<T>> {
    let threshold = percentile(&pristine, PRISTINE_PERCENTILE)?;
    Ok(Calibration {
        threshold,
        tpr: rate_above(&forged, threshold),
        fpr: rate_above(&pristine, threshold),
        roc: roc_curve(&pristine, &forged),
        pristine_scores: pristine,
        forged_scores: forged,
    })
}

/// Synthesizes `trials` pristine/forged pairs from `seed` and calibrates.
pub fn calibrate_synthetic<T: Scalar>(
    trials: usize,
    seed: u64,
    config: &DetectorConfig<T>,
) -> Result<Calibration<T>> {
    if trials == 0 {
        return Err(Error::Empty("calibration corpus"));
    }
    let scores: Vec<(T, T)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (p, f) = calibration_pair::<T>(seed, i);
            Ok((
                periodicity_report(&p, config)?.score,
                periodicity_report(&f, config)?.score,
            ))
        })
        .collect::<Result<_>>()?;
    let (pristine, forged) = scores.into_iter().unzip();
    calibrate_scores(pristine, forged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 99.0).unwrap(), 99.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 100.0);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert!(percentile::<f64>(&[], 50.0).is_err());
    }

    #[test]
    fn roc_endpoints() {
        let roc = roc_curve(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!((roc[0].tpr, roc[0].fpr), (1.0, 1.0));
        let last = roc.last().unwrap();
        assert_eq!((last.tpr, last.fpr), (0.0, 0.0));
        // threshold 2 separates perfectly
        let sep = roc.iter().find(|p| p.threshold == 2.0).unwrap();
        assert_eq!((sep.tpr, sep.fpr), (1.0, 0.0));
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(calibrate_synthetic::<f64>(0, 1, &DetectorConfig::default()).is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let a = derive_seed(7, 1, 0);
        assert_ne!(a, derive_seed(7, 2, 0));
        assert_ne!(a, derive_seed(7, 1, 1));
        assert_ne!(a, derive_seed(8, 1, 0));
    }
}
