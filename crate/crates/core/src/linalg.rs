// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense vector/matrix helpers, seeded randomness and power-iteration PCA.
//!
//! Storage is `f32` everywhere; every reduction accumulates in `f64` and
//! rounds once at the end.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

/// Default cosine-distance tolerance between successive power iterates.
pub const PCA_TOL: f64 = 1e-12;
/// Default iteration cap for [`pca_first_component`].
pub const PCA_MAX_ITERS: usize = 5000;

/// Spectral norms below this are treated as "all rows identical".
const DEGENERATE_NORM: f64 = 1e-12;

/// Row-major dense `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Mat {
    /// Wraps `data` as a `rows x cols` matrix, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        ensure_finite(&data, "matrix")?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Stacks equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // `max(1)` keeps chunks_exact happy for zero-column matrices.
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Keeps only the first `n` rows.
    pub fn truncate_rows(&mut self, n: usize) {
        if n < self.rows {
            self.rows = n;
            self.data.truncate(n * self.cols);
        }
    }

    /// `self * x` with `f64` accumulation.
    pub fn matvec(&self, x: &[f32]) -> Result<Vec<f32>> {
        check_len(self.cols, x.len())?;
        Ok(self
            .iter_rows()
            .map(|r| dot_unchecked(r, x) as f32)
            .collect())
    }
}

/// Returns `DimensionMismatch` unless `got == expected`.
#[inline]
pub fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Returns `NonFinite(what)` if any entry is NaN or infinite.
pub fn ensure_finite(values: &[f32], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Inner product, accumulated in `f64` and rounded to `f32`.
pub fn dot(a: &[f32], b: &[f32]) -> Result<f32> {
    check_len(a.len(), b.len())?;
    Ok(dot_unchecked(a, b) as f32)
}

/// Returns `y + alpha * x`; neither input is modified.
pub fn axpy(alpha: f32, x: &[f32], y: &[f32]) -> Result<Vec<f32>> {
    check_len(y.len(), x.len())?;
    Ok(x.iter().zip(y).map(|(&xi, &yi)| yi + alpha * xi).collect())
}

/// Euclidean norm.
pub fn norm(a: &[f32]) -> f32 {
    dot_unchecked(a, a).sqrt() as f32
}

/// Cosine similarity; zero if either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f32> {
    check_len(a.len(), b.len())?;
    let na = dot_unchecked(a, a).sqrt();
    let nb = dot_unchecked(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot_unchecked(a, b) / (na * nb)) as f32)
}

pub fn sub(a: &[f32], b: &[f32]) -> Result<Vec<f32>> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Scales to unit L2 norm (in `f64`); zero vectors are returned unchanged.
pub fn normalized(a: &[f32]) -> Vec<f32> {
    let n = dot_unchecked(a, a).sqrt();
    if n == 0.0 {
        return a.to_vec();
    }
    a.iter().map(|&x| (f64::from(x) / n) as f32).collect()
}

/// SplitMix64 finalizer: a bijective 64-bit mixer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed for `stream` from a parent seed.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Seeded xoshiro256++ generator. Equal seeds give equal streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Child generator for a named sub-stream; does not advance `self`.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut probe = self.0.clone();
        Rng::new(derive_seed(probe.next_u64(), stream))
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// First principal component of the row-centred `samples` by power
/// iteration on the implicit covariance `XcᵀXc`.
///
/// Iterates until the cosine distance between successive iterates drops
/// below `tol` or `max_iters` is reached. The sign of the result is
/// arbitrary; callers orient it.
pub fn pca_first_component(samples: &Mat, tol: f64, max_iters: usize) -> Result<Vec<f32>> {
    let (n, d) = (samples.rows(), samples.cols());
    if n < 2 {
        return Err(Error::TooFewPairs { needed: 2, got: n });
    }
    if d == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    ensure_finite(samples.as_slice(), "pca samples")?;

    let mut mean = vec![0.0f64; d];
    for r in samples.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(r) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<f64> = samples
        .iter_rows()
        .flat_map(|r| r.iter().zip(&mean).map(|(&x, m)| f64::from(x) - m))
        .collect();

    let frob = centred.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob < DEGENERATE_NORM {
        return Err(Error::DegenerateCovariance(frob));
    }

    // Fixed start vector; a seeded Gaussian is almost surely not orthogonal
    // to the leading eigenvector.
    let mut start = Rng::new(0x00C0_FFEE_D15E_A5E5);
    let mut v: Vec<f64> = (0..d).map(|_| start.normal()).collect();
    normalize_f64(&mut v);

    let mut proj = vec![0.0f64; n];
    let mut w = vec![0.0f64; d];
    let mut rayleigh = 0.0;
    for _ in 0..max_iters {
        covariance_apply(&centred, d, &v, &mut proj, &mut w);
        rayleigh = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        if normalize_f64(&mut w) == 0.0 {
            return Err(Error::DegenerateCovariance(0.0));
        }
        let cos = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        std::mem::swap(&mut v, &mut w);
        if 1.0 - cos.abs() < tol {
            break;
        }
    }

    let spectral = rayleigh.max(0.0).sqrt();
    if spectral < DEGENERATE_NORM {
        return Err(Error::DegenerateCovariance(spectral));
    }
    Ok(v.into_iter().map(|x| x as f32).collect())
}

/// `out = Xcᵀ (Xc v)` for the row-major `n x d` matrix `xc`.
fn covariance_apply(xc: &[f64], d: usize, v: &[f64], proj: &mut [f64], out: &mut [f64]) {
    for (p, row) in proj.iter_mut().zip(xc.chunks_exact(d)) {
        *p = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for (&p, row) in proj.iter().zip(xc.chunks_exact(d)) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o += p * x;
        }
    }
}

fn normalize_f64(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}
