//! Image conditioning ahead of feature extraction: box filtering,
//! percentile contrast stretching, histogram equalization, cropping and
//! resizing.

use crate::error::{Error, Result};
use crate::raster::{quantize, Raster};
use crate::resample::{warp, AffineParams, KernelSpec};
use crate::scalar::Scalar;

/// An axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self {
            x0,
            y0,
            width,
            height,
        }
    }

    pub fn full<T: Scalar>(image: &Raster<T>) -> Self {
        Self::new(0, 0, image.width(), image.height())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocConfig {
    /// Odd side length of the averaging window.
    pub filter_size: usize,
    pub stretch_low_pct: f64,
    pub stretch_high_pct: f64,
    /// Size of the conditioned image handed to feature extraction.
    pub target_size: (usize, usize),
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            filter_size: 3,
            stretch_low_pct: 1.0,
            stretch_high_pct: 99.0,
            target_size: (32, 32),
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_size == 0 || self.filter_size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "filter size must be odd and positive, got {}",
                self.filter_size
            )));
        }
        let (lo, hi) = (self.stretch_low_pct, self.stretch_high_pct);
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
            return Err(Error::InvalidArgument(format!(
                "stretch percentiles must satisfy 0 <= low < high <= 100, got ({lo}, {hi})"
            )));
        }
        if self.target_size.0 == 0 || self.target_size.1 == 0 {
            return Err(Error::InvalidArgument("target size must be positive".into()));
        }
        Ok(())
    }
}

/// `k`×`k` box mean with edge clamping.
pub fn average_filter<T: Scalar>(image: &Raster<T>, k: usize) -> Result<Raster<T>> {
    if k % 2 == 0 {
        return Err(Error::InvalidArgument(format!("filter size {k} is even")));
    }
    if k > image.width().min(image.height()) {
        return Err(Error::InvalidArgument(format!(
            "filter size {k} exceeds image side {}",
            image.width().min(image.height())
        )));
    }
    let r = (k / 2) as isize;
    let (w, h) = (image.width(), image.height());
    // separable: horizontal sums, then vertical sums of those
    let horiz = Raster::from_fn(w, h, |x, y| {
        (-r..=r)
            .map(|d| image.get_clamped(x as isize + d, y as isize))
            .sum::<T>()
    });
    let norm = T::from_usize_lossy(k * k);
    Ok(Raster::from_fn(w, h, |x, y| {
        (-r..=r)
            .map(|d| horiz.get_clamped(x as isize, y as isize + d))
            .sum::<T>()
            / norm
    }))
}

/// Intensity at the given percentile, nearest rank over a 256-bin
/// histogram spanning the image's own `[min, max]`.
pub fn intensity_percentile<T: Scalar>(image: &Raster<T>, pct: f64) -> T {
    let (lo, hi) = image.min_max();
    if hi <= lo {
        return lo;
    }
    let hist = range_histogram(image, lo, hi);
    let n = image.len();
    let rank = ((pct / 100.0) * n as f64).ceil().max(1.0) as usize;
    let mut cum = 0;
    let mut bin = 255;
    for (b, &c) in hist.iter().enumerate() {
        cum += c;
        if cum >= rank {
            bin = b;
            break;
        }
    }
    lo + (hi - lo) * T::from_usize_lossy(bin) / T::lit(255.0)
}

fn range_histogram<T: Scalar>(image: &Raster<T>, lo: T, hi: T) -> [usize; 256] {
    let mut hist = [0usize; 256];
    let scale = T::lit(255.0) / (hi - lo);
    for &v in image.pixels() {
        let b = ((v - lo) * scale).round().to_usize().unwrap_or(0).min(255);
        hist[b] += 1;
    }
    hist
}

/// Linear map of the `[low_pct, high_pct]` percentile range onto `[0, 255]`,
/// clamped. Images whose percentile range collapses are returned unchanged.
pub fn contrast_stretch<T: Scalar>(image: &Raster<T>, low_pct: f64, high_pct: f64) -> Result<Raster<T>> {
    if !(low_pct < high_pct) {
        return Err(Error::InvalidArgument(format!(
            "low percentile {low_pct} must be below high percentile {high_pct}"
        )));
    }
    let lo = intensity_percentile(image, low_pct);
    let hi = intensity_percentile(image, high_pct);
    if hi <= lo {
        return Ok(image.clone());
    }
    let span = hi - lo;
    let full = T::lit(255.0);
    Ok(image.map(|v| ((v - lo) / span).max(T::zero()).min(T::one()) * full))
}

/// Classic CDF remap on 8-bit levels:
/// `round((cdf(v) − cdf_min) / (N − cdf_min) · 255)`.
pub fn hist_equalize<T: Scalar>(image: &Raster<T>) -> Raster<T> {
    let levels: Vec<u8> = image.pixels().iter().map(|&v| quantize(v)).collect();
    let mut hist = [0usize; 256];
    for &l in &levels {
        hist[l as usize] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, &h) in cdf.iter_mut().zip(&hist) {
        acc += h;
        *c = acc;
    }
    let n = levels.len();
    let cdf_min = hist
        .iter()
        .zip(&cdf)
        .find(|(&h, _)| h > 0)
        .map(|(_, &c)| c)
        .unwrap_or(0);
    let map: Vec<T> = cdf
        .iter()
        .map(|&c| {
            if n == cdf_min {
                T::zero()
            } else {
                let r = (c.saturating_sub(cdf_min)) as f64 / (n - cdf_min) as f64;
                T::lit((r * 255.0).round())
            }
        })
        .collect();
    let pixels = levels.iter().map(|&l| map[l as usize]).collect();
    Raster::new(image.width(), image.height(), pixels).expect("same dimensions")
}

pub fn crop<T: Scalar>(image: &Raster<T>, rect: Rect) -> Result<Raster<T>> {
    let Rect {
        x0,
        y0,
        width,
        height,
    } = rect;
    if width == 0
        || height == 0
        || x0 + width > image.width()
        || y0 + height > image.height()
    {
        return Err(Error::InvalidArgument(format!(
            "crop {rect:?} outside {}x{} image",
            image.width(),
            image.height()
        )));
    }
    Ok(Raster::from_fn(width, height, |x, y| image.get(x0 + x, y0 + y)))
}

/// Pure scaling warp to `width`×`height`.
pub fn resize<T: Scalar>(
    image: &Raster<T>,
    width: usize,
    height: usize,
    spec: &KernelSpec<T>,
) -> Result<Raster<T>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("resize target must be positive".into()));
    }
    let sx = T::from_usize_lossy(width) / T::from_usize_lossy(image.width());
    let sy = T::from_usize_lossy(height) / T::from_usize_lossy(image.height());
    warp(image, &AffineParams::scale(sx, sy), spec, (width, height))
}

/// Full conditioning chain: filter, stretch, equalize, crop, resize.
pub fn preprocess<T: Scalar>(
    image: &Raster<T>,
    config: &PreprocConfig,
    region: Option<Rect>,
) -> Result<Raster<T>> {
    config.validate()?;
    let filtered = average_filter(image, config.filter_size)?;
    let stretched = contrast_stretch(&filtered, config.stretch_low_pct, config.stretch_high_pct)?;
    let equalized = hist_equalize(&stretched);
    let cropped = match region {
        Some(r) => crop(&equalized, r)?,
        None => equalized,
    };
    let (tw, th) = config.target_size;
    resize(&cropped, tw, th, &KernelSpec::linear())
}
