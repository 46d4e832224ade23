//! Affine resampling with selectable interpolation kernels.
//!
//! This is both the forgery synthesizer (warp an image with a known affine
//! map and kernel) and the kernel library the detector's oracles rely on:
//! kernel values, their analytic derivatives, and the closed-form variance of
//! a differentiated, interpolated white-noise signal as a function of phase.

use crate::error::{Error, Result};
use crate::raster::{Raster, Signal1D};
use crate::scalar::Scalar;

/// Coefficients of `x' = a0 + a1 x + a2 y`, `y' = b0 + b1 x + b2 y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams<T> {
    pub a0: T,
    pub a1: T,
    pub a2: T,
    pub b0: T,
    pub b1: T,
    pub b2: T,
}

impl<T: Scalar> AffineParams<T> {
    pub fn new(a0: T, a1: T, a2: T, b0: T, b1: T, b2: T) -> Self {
        Self {
            a0,
            a1,
            a2,
            b0,
            b1,
            b2,
        }
    }

    pub fn identity() -> Self {
        let (z, o) = (T::zero(), T::one());
        Self::new(z, o, z, z, z, o)
    }

    pub fn scale(sx: T, sy: T) -> Self {
        let z = T::zero();
        Self::new(z, sx, z, z, z, sy)
    }

    /// Rotation matrix `[cos θ, sin θ; -sin θ, cos θ]` about the origin,
    /// with θ in degrees. Multiples of 90° are exact.
    pub fn rotation_deg(theta: T) -> Self {
        let (s, c) = sin_cos_deg(theta);
        let z = T::zero();
        Self::new(z, c, s, z, -s, c)
    }

    /// Rotation by θ degrees about `(cx, cy)`.
    pub fn rotation_about(theta: T, cx: T, cy: T) -> Self {
        let r = Self::rotation_deg(theta);
        Self::new(
            cx - r.a1 * cx - r.a2 * cy,
            r.a1,
            r.a2,
            cy - r.b1 * cx - r.b2 * cy,
            r.b1,
            r.b2,
        )
    }

    /// Shear `x' = x + kx y`, `y' = ky x + y`.
    pub fn skew(kx: T, ky: T) -> Self {
        let (z, o) = (T::zero(), T::one());
        Self::new(z, o, kx, z, ky, o)
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Self) -> Self {
        Self::new(
            self.a0 + self.a1 * inner.a0 + self.a2 * inner.b0,
            self.a1 * inner.a1 + self.a2 * inner.b1,
            self.a1 * inner.a2 + self.a2 * inner.b2,
            self.b0 + self.b1 * inner.a0 + self.b2 * inner.b0,
            self.b1 * inner.a1 + self.b2 * inner.b1,
            self.b1 * inner.a2 + self.b2 * inner.b2,
        )
    }

    pub fn determinant(&self) -> T {
        self.a1 * self.b2 - self.a2 * self.b1
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return Err(Error::NonInvertible(det.as_f64()));
        }
        let (i1, i2) = (self.b2 / det, -self.a2 / det);
        let (j1, j2) = (-self.b1 / det, self.a1 / det);
        Ok(Self::new(
            -(i1 * self.a0 + i2 * self.b0),
            i1,
            i2,
            -(j1 * self.a0 + j2 * self.b0),
            j1,
            j2,
        ))
    }

    pub fn as_array(&self) -> [T; 6] {
        [self.a0, self.a1, self.a2, self.b0, self.b1, self.b2]
    }
}

pub fn affine_apply<T: Scalar>(params: &AffineParams<T>, x: T, y: T) -> (T, T) {
    (
        params.a0 + params.a1 * x + params.a2 * y,
        params.b0 + params.b1 * x + params.b2 * y,
    )
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_deg<T: Scalar>(deg: T) -> (T, T) {
    let quarter = deg / T::lit(90.0);
    if quarter == quarter.round() {
        let q = quarter.as_f64().rem_euclid(4.0) as u8;
        let (s, c) = match q {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        };
        return (T::lit(s), T::lit(c));
    }
    deg.to_radians().sin_cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Nearest,
    Linear,
    Cubic,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Nearest => "nearest",
            KernelKind::Linear => "linear",
            KernelKind::Cubic => "cubic",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(KernelKind::Nearest),
            "linear" => Ok(KernelKind::Linear),
            "cubic" => Ok(KernelKind::Cubic),
            other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

/// An interpolation kernel. Cubic kernels use the Keys family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    pub cubic_a: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            cubic_a: T::lit(-0.5),
        }
    }

    pub fn nearest() -> Self {
        Self::new(KernelKind::Nearest)
    }

    pub fn linear() -> Self {
        Self::new(KernelKind::Linear)
    }

    pub fn cubic() -> Self {
        Self::new(KernelKind::Cubic)
    }

    /// Half-width of the kernel's support.
    pub fn support(&self) -> T {
        match self.kind {
            KernelKind::Nearest => T::lit(0.5),
            KernelKind::Linear => T::one(),
            KernelKind::Cubic => T::lit(2.0),
        }
    }

    fn reach(&self) -> isize {
        match self.kind {
            KernelKind::Nearest | KernelKind::Linear => 1,
            KernelKind::Cubic => 2,
        }
    }
}

/// Variance of the i.i.d. source samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T> {
    sigma2: T,
}

impl<T: Scalar> NoiseModel<T> {
    pub fn new(sigma2: T) -> Result<Self> {
        if !(sigma2 > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        Ok(Self { sigma2 })
    }

    pub fn unit() -> Self {
        Self { sigma2: T::one() }
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }
}

/// `w(t)`. The box kernel is half-open on `[-0.5, 0.5)`.
pub fn kernel_value<T: Scalar>(spec: &KernelSpec<T>, t: T) -> T {
    let s = t.abs();
    match spec.kind {
        KernelKind::Nearest => {
            if t >= T::lit(-0.5) && t < T::lit(0.5) {
                T::one()
            } else {
                T::zero()
            }
        }
        KernelKind::Linear => {
            if s < T::one() {
                T::one() - s
            } else {
                T::zero()
            }
        }
        KernelKind::Cubic => {
            let a = spec.cubic_a;
            let (two, three) = (T::lit(2.0), T::lit(3.0));
            if s <= T::one() {
                ((a + two) * s - (a + three)) * s * s + T::one()
            } else if s < two {
                ((a * s - T::lit(5.0) * a) * s + T::lit(8.0) * a) * s - T::lit(4.0) * a
            } else {
                T::zero()
            }
        }
    }
}

/// Analytic `n`th derivative of `w` at `t`, for `n` in {1, 2}.
///
/// At a knot the right-hand limit is returned. The box kernel's derivative
/// is zero away from its jumps and its jumps are not represented.
///
/// # Panics
/// If `n` is not 1 or 2.
pub fn kernel_derivative<T: Scalar>(spec: &KernelSpec<T>, n: u32, t: T) -> T {
    assert!(n == 1 || n == 2, "derivative order must be 1 or 2, got {n}");
    let s = t.abs();
    let (one, two) = (T::one(), T::lit(2.0));
    // Which polynomial piece governs the right-hand neighbourhood of t.
    // For t < 0 moving right shrinks |t|, so the interval ends flip.
    let piece = if t >= T::zero() {
        if s < one {
            0
        } else if s < two {
            1
        } else {
            2
        }
    } else if s <= one {
        0
    } else if s <= two {
        1
    } else {
        2
    };
    let sign = if t >= T::zero() { one } else { -one };
    match spec.kind {
        KernelKind::Nearest => T::zero(),
        KernelKind::Linear => match (piece, n) {
            (0, 1) => -sign,
            _ => T::zero(),
        },
        KernelKind::Cubic => {
            let a = spec.cubic_a;
            let (three, six) = (T::lit(3.0), T::lit(6.0));
            match (piece, n) {
                (0, 1) => sign * (three * (a + two) * s * s - two * (a + three) * s),
                (0, _) => six * (a + two) * s - two * (a + three),
                (1, 1) => sign * (three * a * s * s - T::lit(10.0) * a * s + T::lit(8.0) * a),
                (1, _) => six * a * s - T::lit(10.0) * a,
                _ => T::zero(),
            }
        }
    }
}

fn clamped<T: Scalar>(samples: &[T], k: isize) -> T {
    samples[k.clamp(0, samples.len() as isize - 1) as usize]
}

/// `Σ_k f_k w(x/Δx − k)` with edge-clamped samples.
pub fn interpolate_1d<T: Scalar>(signal: &Signal1D<T>, spec: &KernelSpec<T>, x: T) -> Result<T> {
    let f = signal.samples();
    if f.is_empty() {
        return Err(Error::EmptySignal);
    }
    let u = x / signal.step();
    let base = u.floor().to_isize().unwrap_or(0);
    let r = spec.reach() + 1;
    Ok(((base - r)..=(base + r))
        .map(|k| clamped(f, k) * kernel_value(spec, u - T::from_isize(k).unwrap()))
        .sum())
}

/// `n`th derivative with respect to `x` of the interpolated signal,
/// `Δx^-n Σ_k f_k Dⁿw(x/Δx − k)`.
pub fn interpolate_derivative_1d<T: Scalar>(
    signal: &Signal1D<T>,
    spec: &KernelSpec<T>,
    n: u32,
    x: T,
) -> Result<T> {
    let f = signal.samples();
    if f.is_empty() {
        return Err(Error::EmptySignal);
    }
    let u = x / signal.step();
    let base = u.floor().to_isize().unwrap_or(0);
    let r = spec.reach() + 1;
    let sum: T = ((base - r)..=(base + r))
        .map(|k| clamped(f, k) * kernel_derivative(spec, n, u - T::from_isize(k).unwrap()))
        .sum();
    Ok(sum / signal.step().powi(n as i32))
}

/// Kernel taps covering `u`: the first source index and up to six weights.
fn taps<T: Scalar>(spec: &KernelSpec<T>, u: T) -> (isize, [T; 6], usize) {
    let mut w = [T::zero(); 6];
    if spec.kind == KernelKind::Nearest {
        w[0] = T::one();
        return ((u + T::lit(0.5)).floor().to_isize().unwrap_or(0), w, 1);
    }
    let r = spec.reach();
    let first = u.floor().to_isize().unwrap_or(0) - r + 1;
    let count = (2 * r) as usize;
    for (i, wi) in w.iter_mut().take(count).enumerate() {
        *wi = kernel_value(spec, u - T::from_isize(first + i as isize).unwrap());
    }
    (first, w, count)
}

/// Inverse-mapped affine warp with separable kernel interpolation.
///
/// Output pixel `(x', y')` samples the source at the inverse affine image of
/// `(x', y')`. Source lookups outside the image are clamped to the border.
pub fn warp<T: Scalar>(
    image: &Raster<T>,
    params: &AffineParams<T>,
    spec: &KernelSpec<T>,
    out_size: (usize, usize),
) -> Result<Raster<T>> {
    let (ow, oh) = out_size;
    if ow == 0 || oh == 0 {
        return Err(Error::InvalidArgument("output size must be positive".into()));
    }
    let inv = params.inverse()?;
    Ok(Raster::from_fn(ow, oh, |xo, yo| {
        let (xs, ys) = affine_apply(
            &inv,
            T::from_usize_lossy(xo),
            T::from_usize_lossy(yo),
        );
        let (x0, wx, nx) = taps(spec, xs);
        let (y0, wy, ny) = taps(spec, ys);
        let mut acc = T::zero();
        for (j, &wyj) in wy.iter().take(ny).enumerate() {
            if wyj == T::zero() {
                continue;
            }
            let mut row = T::zero();
            for (i, &wxi) in wx.iter().take(nx).enumerate() {
                if wxi != T::zero() {
                    row = row + wxi * image.get_clamped(x0 + i as isize, y0 + j as isize);
                }
            }
            acc = acc + wyj * row;
        }
        acc
    }))
}

/// Closed-form variance of `Dⁿ` of a kernel-interpolated i.i.d. signal at a
/// given sub-sample phase: `σ² Σ_k Dⁿw(phase − k)²`. Periodic in `phase`
/// with period 1.
///
/// # Panics
/// If `n` is not 1 or 2.
pub fn predicted_variance<T: Scalar>(
    spec: &KernelSpec<T>,
    n: u32,
    noise: &NoiseModel<T>,
    phase: T,
) -> T {
    let p = phase - phase.floor();
    let r = spec.reach() + 1;
    let sum: T = (-r..=r)
        .map(|k| {
            let d = kernel_derivative(spec, n, p - T::from_isize(k).unwrap());
            d * d
        })
        .sum();
    noise.sigma2() * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn affine_examples() {
        let id = AffineParams::<f64>::identity();
        assert_eq!(affine_apply(&id, 3.0, 4.0), (3.0, 4.0));
        let s = AffineParams::scale(2.0, 2.0);
        assert_eq!(affine_apply(&s, 3.0, 4.0), (6.0, 8.0));
        let r = AffineParams::rotation_deg(90.0);
        assert_eq!(affine_apply(&r, 1.0, 0.0), (0.0, -1.0));
    }

    #[test]
    fn inverse_roundtrip() {
        let p = AffineParams::new(1.5, 1.2, 0.3, -2.0, -0.1, 0.9);
        let inv = p.inverse().unwrap();
        let (x, y) = affine_apply(&p, 3.0, -7.0);
        let (bx, by) = affine_apply(&inv, x, y);
        assert!(close(bx, 3.0, 1e-12) && close(by, -7.0, 1e-12));
        let singular = AffineParams::new(0.0, 1.0, 2.0, 0.0, 2.0, 4.0);
        assert!(matches!(singular.inverse(), Err(Error::NonInvertible(_))));
    }

    #[test]
    fn kernel_value_examples() {
        let lin = KernelSpec::<f64>::linear();
        assert_eq!(kernel_value(&lin, 0.0), 1.0);
        assert_eq!(kernel_value(&lin, 1.0), 0.0);
        assert_eq!(kernel_value(&lin, -1.0), 0.0);
        let cub = KernelSpec::<f64>::cubic();
        assert!(close(kernel_value(&cub, 0.5), 0.5625, 1e-15));
        assert!(close(kernel_value(&cub, 1.5), -0.0625, 1e-15));
        let nn = KernelSpec::<f64>::nearest();
        assert_eq!(kernel_value(&nn, 0.49), 1.0);
        assert_eq!(kernel_value(&nn, 0.51), 0.0);
    }

    #[test]
    fn kernel_derivative_examples() {
        let lin = KernelSpec::<f64>::linear();
        assert_eq!(kernel_derivative(&lin, 1, -0.5), 1.0);
        assert_eq!(kernel_derivative(&lin, 1, 0.5), -1.0);
        assert_eq!(kernel_derivative(&lin, 2, 0.5), 0.0);
        // right-limits at knots
        assert_eq!(kernel_derivative(&lin, 1, 0.0), -1.0);
        assert_eq!(kernel_derivative(&lin, 1, -1.0), 1.0);
        assert_eq!(kernel_derivative(&lin, 1, 1.0), 0.0);
        let cub = KernelSpec::<f64>::cubic();
        assert!(close(kernel_derivative(&cub, 1, 0.5), -1.375, 1e-15));
        assert!(close(kernel_derivative(&cub, 1, -0.5), 1.375, 1e-15));
    }

    #[test]
    fn cubic_derivative_matches_finite_difference() {
        let cub = KernelSpec::<f64>::cubic();
        let h = 1e-6;
        for i in 0..80 {
            let t = -2.3 + 0.0571 * i as f64;
            let fd1 = (kernel_value(&cub, t + h) - kernel_value(&cub, t - h)) / (2.0 * h);
            assert!(close(kernel_derivative(&cub, 1, t), fd1, 1e-6), "t={t}");
            let fd2 = (kernel_derivative(&cub, 1, t + h) - kernel_derivative(&cub, 1, t - h))
                / (2.0 * h);
            assert!(close(kernel_derivative(&cub, 2, t), fd2, 1e-5), "t={t}");
        }
    }

    #[test]
    fn interpolate_examples() {
        let lin = KernelSpec::<f64>::linear();
        let s = Signal1D::unit(vec![10.0, 20.0]);
        assert!(close(interpolate_1d(&s, &lin, 0.5).unwrap(), 15.0, 1e-12));
        let cub = KernelSpec::<f64>::cubic();
        let s = Signal1D::unit(vec![0.0, 1.0, 0.0, 0.0]);
        assert!(close(interpolate_1d(&s, &cub, 1.5).unwrap(), 0.5625, 1e-12));
        let stepped = Signal1D::new(vec![10.0, 20.0], 4.0).unwrap();
        assert!(close(interpolate_1d(&stepped, &lin, 2.0).unwrap(), 15.0, 1e-12));
        let empty = Signal1D::<f64>::unit(vec![]);
        assert!(matches!(
            interpolate_1d(&empty, &lin, 0.0),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn predicted_variance_examples() {
        let noise = NoiseModel::<f64>::unit();
        assert_eq!(
            predicted_variance(&KernelSpec::nearest(), 1, &noise, 0.3),
            0.0
        );
        assert!(close(
            predicted_variance(&KernelSpec::linear(), 1, &noise, 0.5),
            2.0,
            1e-15
        ));
        let four = NoiseModel::new(4.0).unwrap();
        assert!(close(
            predicted_variance(&KernelSpec::linear(), 1, &four, 0.5),
            8.0,
            1e-15
        ));
        assert!(NoiseModel::new(0.0f64).is_err());
    }

    #[test]
    fn warp_identity_and_constant() {
        let img = Raster::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 11) as f64);
        for spec in [KernelSpec::nearest(), KernelSpec::linear(), KernelSpec::cubic()] {
            let out = warp(&img, &AffineParams::identity(), &spec, (7, 5)).unwrap();
            assert_eq!(out, img);
            let flat = Raster::filled(6, 6, 42.0);
            let up = warp(&flat, &AffineParams::scale(2.0, 2.0), &spec, (12, 12)).unwrap();
            assert!(up.pixels().iter().all(|&v| close(v, 42.0, 1e-12)));
        }
    }

    #[test]
    fn warp_matches_interpolate_1d() {
        let row = Raster::new(2, 1, vec![0.0, 100.0]).unwrap();
        let lin = KernelSpec::linear();
        let up = warp(&row, &AffineParams::scale(2.0, 2.0), &lin, (4, 1)).unwrap();
        let sig = Signal1D::unit(vec![0.0, 100.0]);
        for (i, &v) in up.pixels().iter().enumerate() {
            let expect = interpolate_1d(&sig, &lin, i as f64 / 2.0).unwrap();
            assert!(close(v, expect, 1e-12));
        }
        assert_eq!(up.pixels(), &[0.0, 50.0, 100.0, 100.0]);
    }

    #[test]
    fn warp_rejects_singular() {
        let img = Raster::filled(4, 4, 1.0f64);
        let p = AffineParams::scale(0.0, 1.0);
        assert!(warp(&img, &p, &KernelSpec::linear(), (4, 4)).is_err());
    }

    #[test]
    fn f32_kernels_agree() {
        let c32 = KernelSpec::<f32>::cubic();
        assert!((kernel_value(&c32, 0.5f32) - 0.5625).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn partition_of_unity(t in -50.0f64..50.0) {
            for spec in [KernelSpec::nearest(), KernelSpec::linear(), KernelSpec::cubic()] {
                let base = t.floor() as i64;
                let total: f64 = (base - 4..=base + 4)
                    .map(|k| kernel_value(&spec, t - k as f64))
                    .sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn interpolation_property(samples in prop::collection::vec(-100.0f64..100.0, 1..20)) {
            let s = Signal1D::unit(samples.clone());
            for spec in [KernelSpec::nearest(), KernelSpec::linear(), KernelSpec::cubic()] {
                for (k, &f) in samples.iter().enumerate() {
                    prop_assert_eq!(interpolate_1d(&s, &spec, k as f64).unwrap(), f);
                }
            }
        }
    }
}
