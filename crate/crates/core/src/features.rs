//! Vectorization, 2-D DCT compression and PCA projection.

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, SymMatrix};
use crate::raster::Raster;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn scaled(&self, k: T) -> Self {
        Self::new(self.values.iter().map(|&v| v * k).collect())
    }
}

/// Row-major flatten.
pub fn vectorize<T: Scalar>(image: &Raster<T>) -> FeatureVector<T> {
    FeatureVector::new(image.pixels().to_vec())
}

/// Inverse of [`vectorize`] given the original dimensions.
pub fn reshape<T: Scalar>(v: &FeatureVector<T>, width: usize, height: usize) -> Result<Raster<T>> {
    Raster::new(width, height, v.values.clone())
}

/// Orthonormal DCT-II basis: `basis[u * n + i] = α(u) cos(π (2i+1) u / 2n)`.
fn dct_matrix<T: Scalar>(n: usize) -> Vec<T> {
    let nf = T::from_usize_lossy(n);
    let a0 = (T::one() / nf).sqrt();
    let a = (T::lit(2.0) / nf).sqrt();
    let mut m = Vec::with_capacity(n * n);
    for u in 0..n {
        let alpha = if u == 0 { a0 } else { a };
        for i in 0..n {
            let arg = T::PI() * T::from_usize_lossy((2 * i + 1) * u) / (T::lit(2.0) * nf);
            m.push(alpha * arg.cos());
        }
    }
    m
}

/// Applies `m` (or its transpose) along rows then columns.
fn separable<T: Scalar>(image: &Raster<T>, transpose: bool) -> Raster<T> {
    let (w, h) = (image.width(), image.height());
    let mw = dct_matrix::<T>(w);
    let mh = dct_matrix::<T>(h);
    let entry = |m: &[T], n: usize, r: usize, c: usize| {
        if transpose {
            m[c * n + r]
        } else {
            m[r * n + c]
        }
    };
    let rows = Raster::from_fn(w, h, |u, y| {
        image
            .row(y)
            .iter()
            .enumerate()
            .map(|(x, &v)| entry(&mw, w, u, x) * v)
            .sum()
    });
    Raster::from_fn(w, h, |u, v| {
        (0..h).map(|y| entry(&mh, h, v, y) * rows.get(u, y)).sum()
    })
}

/// Orthonormal 2-D DCT-II. Coefficient `(u, v)` sits at column `u`, row `v`.
pub fn dct2<T: Scalar>(block: &Raster<T>) -> Raster<T> {
    separable(block, false)
}

/// Inverse of [`dct2`] (orthonormal DCT-III).
pub fn idct2<T: Scalar>(coeffs: &Raster<T>) -> Raster<T> {
    separable(coeffs, true)
}

/// Top-left `keep`×`keep` block of the DCT, row-major.
pub fn dct_compress<T: Scalar>(image: &Raster<T>, keep: usize) -> Result<FeatureVector<T>> {
    if keep == 0 || keep > image.width().min(image.height()) {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {keep}x{keep} coefficients of a {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let c = dct2(image);
    let mut values = Vec::with_capacity(keep * keep);
    for v in 0..keep {
        values.extend_from_slice(&c.row(v)[..keep]);
    }
    Ok(FeatureVector::new(values))
}

/// Principal components of a set of training vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    pub mean: FeatureVector<T>,
    /// Orthonormal components, strongest first.
    pub basis: Vec<FeatureVector<T>>,
    /// Non-increasing, clamped at zero.
    pub eigenvalues: Vec<T>,
}

impl<T: Scalar> PcaModel<T> {
    pub fn m(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }
}

/// How the eigenvectors are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaMethod {
    /// Gram matrix when there are fewer vectors than dimensions.
    Auto,
    /// Eigenvectors of the `count`×`count` inner-product matrix, mapped back.
    Gram,
    /// Eigenvectors of the `dim`×`dim` covariance matrix.
    Covariance,
}

pub fn pca_fit<T: Scalar>(vectors: &[FeatureVector<T>], m: usize) -> Result<PcaModel<T>> {
    pca_fit_with(vectors, m, PcaMethod::Auto)
}

/// Fits PCA with sample covariance normalized by `count − 1`.
pub fn pca_fit_with<T: Scalar>(
    vectors: &[FeatureVector<T>],
    m: usize,
    method: PcaMethod,
) -> Result<PcaModel<T>> {
    let count = vectors.len();
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 vectors, got {count}"
        )));
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    let max_m = (count - 1).min(dim);
    if m == 0 || m > max_m {
        return Err(Error::InvalidArgument(format!(
            "cannot retain {m} components (max {max_m})"
        )));
    }
    let inv = T::one() / T::from_usize_lossy(count);
    let mean = FeatureVector::new(
        (0..dim)
            .map(|j| vectors.iter().map(|v| v.values[j]).sum::<T>() * inv)
            .collect(),
    );
    let centred: Vec<Vec<T>> = vectors
        .iter()
        .map(|v| v.values.iter().zip(&mean.values).map(|(&a, &b)| a - b).collect())
        .collect();
    let norm = T::one() / T::from_usize_lossy(count - 1);

    let use_gram = match method {
        PcaMethod::Auto => count < dim,
        PcaMethod::Gram => true,
        PcaMethod::Covariance => false,
    };
    let (values, mut basis) = if use_gram {
        let mut g = SymMatrix::zeros(count);
        for i in 0..count {
            for j in 0..=i {
                let d: T = centred[i].iter().zip(&centred[j]).map(|(&a, &b)| a * b).sum();
                g.set(i, j, d * norm);
                g.set(j, i, d * norm);
            }
        }
        let (vals, vecs) = symmetric_eigen(&g);
        let mut basis = Vec::with_capacity(m);
        for u in vecs.iter().take(m) {
            let mut v = vec![T::zero(); dim];
            for (ui, xi) in u.iter().zip(&centred) {
                for (vj, &xj) in v.iter_mut().zip(xi) {
                    *vj = *vj + *ui * xj;
                }
            }
            basis.push(v);
        }
        (vals, basis)
    } else {
        let mut c = SymMatrix::zeros(dim);
        for a in 0..dim {
            for b in 0..=a {
                let s: T = centred.iter().map(|x| x[a] * x[b]).sum::<T>() * norm;
                c.set(a, b, s);
                c.set(b, a, s);
            }
        }
        let (vals, vecs) = symmetric_eigen(&c);
        (vals, vecs.into_iter().take(m).collect())
    };

    orthonormalize(&mut basis);
    for v in basis.iter_mut() {
        canonical_sign(v);
    }
    let eigenvalues = values
        .into_iter()
        .take(m)
        .map(|l| l.max(T::zero()))
        .collect();
    Ok(PcaModel {
        mean,
        basis: basis.into_iter().map(FeatureVector::new).collect(),
        eigenvalues,
    })
}

/// Modified Gram-Schmidt. Vectors that vanish (rank-deficient data) are
/// replaced by the first standard basis vector independent of the rest.
fn orthonormalize<T: Scalar>(basis: &mut [Vec<T>]) {
    let dim = basis.first().map_or(0, Vec::len);
    let scale = basis
        .iter()
        .flat_map(|v| v.iter())
        .fold(T::zero(), |a, &b| a.max(b.abs()));
    let tiny = T::epsilon().sqrt() * scale.max(T::one());
    let mut next_unit = 0;
    for i in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(i);
        let v = &mut rest[0];
        loop {
            for q in done.iter() {
                let d: T = v.iter().zip(q).map(|(&a, &b)| a * b).sum();
                for (vj, &qj) in v.iter_mut().zip(q) {
                    *vj = *vj - d * qj;
                }
            }
            let n = v.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n > tiny || next_unit >= dim {
                for x in v.iter_mut() {
                    *x = *x / n;
                }
                break;
            }
            v.iter_mut().for_each(|x| *x = T::zero());
            v[next_unit] = T::one();
            next_unit += 1;
        }
    }
}

/// Flips `v` so its first non-negligible entry is positive.
fn canonical_sign<T: Scalar>(v: &mut [T]) {
    let eps = T::lit(1e-12);
    if let Some(&first) = v.iter().find(|x| x.abs() > eps) {
        if first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Coefficients of `v − mean` on each retained component.
pub fn pca_project<T: Scalar>(model: &PcaModel<T>, v: &FeatureVector<T>) -> Result<FeatureVector<T>> {
    if v.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: v.dim(),
        });
    }
    let centred: Vec<T> = v
        .values
        .iter()
        .zip(&model.mean.values)
        .map(|(&a, &b)| a - b)
        .collect();
    Ok(FeatureVector::new(
        model
            .basis
            .iter()
            .map(|b| b.values.iter().zip(&centred).map(|(&x, &y)| x * y).sum())
            .collect(),
    ))
}

/// `mean + Σ coeffs[i] basis[i]`.
pub fn pca_reconstruct<T: Scalar>(
    model: &PcaModel<T>,
    coeffs: &FeatureVector<T>,
) -> Result<FeatureVector<T>> {
    if coeffs.dim() != model.m() {
        return Err(Error::DimensionMismatch {
            expected: model.m(),
            actual: coeffs.dim(),
        });
    }
    let mut out = model.mean.values.clone();
    for (c, b) in coeffs.values.iter().zip(&model.basis) {
        for (o, &bj) in out.iter_mut().zip(&b.values) {
            *o = *o + *c * bj;
        }
    }
    Ok(FeatureVector::new(out))
}
