//! Seeded generators for labelled test corpora: pristine and resampled
//! noise images for the detector, and smooth face-like patterns for the
//! recognizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::raster::{quantize, Raster};
use crate::resample::{warp, AffineParams, KernelSpec};
use crate::scalar::Scalar;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform 8-bit noise, integer valued in `[0, 255]`.
pub fn noise_image<T: Scalar>(width: usize, height: usize, rng: &mut impl Rng) -> Raster<T> {
    Raster::from_fn(width, height, |_, _| T::from_u8(rng.random::<u8>()).unwrap())
}

/// Rounds and clamps to 8-bit levels, as saving to PGM would.
pub fn quantized<T: Scalar>(image: &Raster<T>) -> Raster<T> {
    image.map(|v| T::from_u8(quantize(v)).unwrap())
}

/// A `size`×`size` uniform-noise image.
pub fn pristine_noise<T: Scalar>(size: usize, seed: u64) -> Raster<T> {
    noise_image(size, size, &mut rng(seed))
}

/// A `size/factor` noise image upscaled by `factor` with `kernel`, then
/// quantized to 8 bits.
pub fn upscaled_noise<T: Scalar>(
    size: usize,
    factor: usize,
    kernel: &KernelSpec<T>,
    seed: u64,
) -> Raster<T> {
    let small = size / factor;
    let src: Raster<T> = noise_image(small, small, &mut rng(seed));
    let f = T::from_usize_lossy(factor);
    let up = warp(&src, &AffineParams::scale(f, f), kernel, (size, size))
        .expect("scaling is invertible");
    quantized(&up)
}

/// Parameters of one synthetic subject.
#[derive(Debug, Clone)]
struct FaceParams {
    background: f64,
    skin: f64,
    face_rx: f64,
    face_ry: f64,
    eye_dx: f64,
    eye_y: f64,
    eye_r: f64,
    eye_dark: f64,
    brow_dark: f64,
    nose_len: f64,
    mouth_y: f64,
    mouth_w: f64,
    mouth_dark: f64,
    hair: f64,
    hair_line: f64,
    blobs: Vec<(f64, f64, f64, f64)>,
}

impl FaceParams {
    fn random(rng: &mut impl Rng) -> Self {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let mut p = FaceParams {
            background: u(20.0, 90.0),
            skin: u(130.0, 220.0),
            face_rx: u(0.28, 0.40),
            face_ry: u(0.36, 0.46),
            eye_dx: u(0.10, 0.18),
            eye_y: u(-0.14, -0.04),
            eye_r: u(0.035, 0.07),
            eye_dark: u(50.0, 110.0),
            brow_dark: u(0.0, 70.0),
            nose_len: u(0.06, 0.16),
            mouth_y: u(0.16, 0.26),
            mouth_w: u(0.08, 0.18),
            mouth_dark: u(30.0, 90.0),
            hair: u(10.0, 120.0),
            hair_line: u(-0.40, -0.22),
            blobs: Vec::new(),
        };
        for _ in 0..3 {
            let b = (
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(0.05..0.15),
                rng.random_range(-40.0..40.0),
            );
            p.blobs.push(b);
        }
        p
    }

    /// Intensity at normalized coordinates `(u, v)` in `[-0.5, 0.5]²`.
    fn shade(&self, u: f64, v: f64) -> f64 {
        let g = |du: f64, dv: f64, r: f64| (-(du * du + dv * dv) / (2.0 * r * r)).exp();
        let smoothstep = |e: f64| 1.0 / (1.0 + (-e / 0.02).exp());
        let inside = 1.0 - ((u / self.face_rx).powi(2) + (v / self.face_ry).powi(2));
        let mut val = self.background + (self.skin - self.background) * smoothstep(inside);
        let hair = smoothstep(self.hair_line - v) * smoothstep(inside + 0.3);
        val += (self.hair - val) * hair;
        for side in [-1.0, 1.0] {
            let ex = side * self.eye_dx;
            val -= self.eye_dark * g(u - ex, v - self.eye_y, self.eye_r);
            val -= self.brow_dark * g((u - ex) * 0.5, v - self.eye_y + 0.07, 0.02);
        }
        let nose = g(u * 3.0, (v - self.nose_len * 0.5).max(0.0) - self.nose_len * 0.5, 0.03);
        val -= 25.0 * nose * (v > 0.0) as u8 as f64;
        val -= self.mouth_dark * g(u * 0.12 / self.mouth_w, v - self.mouth_y, 0.025);
        for &(bu, bv, br, amp) in &self.blobs {
            val += amp * g(u - bu, v - bv, br);
        }
        val
    }
}

/// A seeded population of smooth face-like subjects.
#[derive(Debug, Clone)]
pub struct FaceCorpus {
    subjects: Vec<FaceParams>,
    size: usize,
}

impl FaceCorpus {
    pub fn new(subjects: usize, size: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        Self {
            subjects: (0..subjects).map(|_| FaceParams::random(&mut r)).collect(),
            size,
        }
    }

    pub fn subject_count(&self) -> usize {
        self.subjects.len()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn label(subject: usize) -> String {
        format!("s{:02}", subject + 1)
    }

    /// Noise-free base image of a subject.
    pub fn base<T: Scalar>(&self, subject: usize) -> Raster<T> {
        let p = &self.subjects[subject];
        let n = self.size as f64;
        Raster::from_fn(self.size, self.size, |x, y| {
            let u = (x as f64 + 0.5) / n - 0.5;
            let v = (y as f64 + 0.5) / n - 0.5;
            T::lit(p.shade(u, v).clamp(0.0, 255.0))
        })
    }

    /// Base image plus i.i.d. Gaussian noise of standard deviation `sigma`,
    /// quantized to 8 bits.
    pub fn sample<T: Scalar>(&self, subject: usize, sigma: f64, seed: u64) -> Raster<T> {
        let base: Raster<T> = self.base(subject);
        let mut r = rng(seed ^ ((subject as u64 + 1) << 40));
        let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
        let noisy = base.map(|v| {
            let e = if sigma > 0.0 { normal.sample(&mut r) } else { 0.0 };
            v + T::lit(e)
        });
        quantized(&noisy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a: Raster<f64> = pristine_noise(16, 3);
        let b: Raster<f64> = pristine_noise(16, 3);
        assert_eq!(a, b);
        let c = FaceCorpus::new(4, 32, 9);
        let s1: Raster<f64> = c.sample(2, 4.0, 1);
        let s2: Raster<f64> = c.sample(2, 4.0, 1);
        assert_eq!(s1, s2);
    }

    #[test]
    fn upscaled_size_and_range() {
        let img: Raster<f64> = upscaled_noise(32, 2, &KernelSpec::linear(), 1);
        assert_eq!((img.width(), img.height()), (32, 32));
        let (lo, hi) = img.min_max();
        assert!(lo >= 0.0 && hi <= 255.0);
        assert!(img.pixels().iter().all(|v| v.fract() == 0.0));
    }

    #[test]
    fn subjects_are_distinct() {
        let c = FaceCorpus::new(10, 32, 5);
        let bases: Vec<Raster<f64>> = (0..10).map(|s| c.base(s)).collect();
        for i in 0..10 {
            for j in i + 1..10 {
                let d: f64 = bases[i]
                    .pixels()
                    .iter()
                    .zip(bases[j].pixels())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(d > 100.0, "subjects {i} and {j} too close: {d}");
            }
        }
    }
}
