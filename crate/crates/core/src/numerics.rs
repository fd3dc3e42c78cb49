//! Dense complex vectors/matrices, the rank-one regularized solve, and
//! seeded random streams.
//!
//! Only the handful of operations the signal model and the beamformer need are
//! provided. Every binary operation checks shapes and fails with
//! [`Error::Shape`] instead of broadcasting.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Column (or row, by context) vector of complex entries.
#[derive(Clone, PartialEq, Default)]
pub struct ComplexVector(Vec<C64>);

impl fmt::Debug for ComplexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl ComplexVector {
    pub fn zeros(n: usize) -> Self {
        ComplexVector(vec![C64::new(0.0, 0.0); n])
    }

    pub fn from_vec(entries: Vec<C64>) -> Self {
        ComplexVector(entries)
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> C64) -> Self {
        ComplexVector((0..n).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.0.iter()
    }

    fn check_len(&self, other: &ComplexVector, op: &str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "{op}: length {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Unconjugated product `Σ self_k · other_k` (row times column).
    pub fn dotu(&self, other: &ComplexVector) -> Result<C64> {
        self.check_len(other, "dotu")?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    /// Hermitian inner product `selfᴴ other`.
    pub fn dotc(&self, other: &ComplexVector) -> Result<C64> {
        self.check_len(other, "dotc")?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn conj(&self) -> ComplexVector {
        ComplexVector(self.0.iter().map(|z| z.conj()).collect())
    }

    pub fn scale(&self, s: C64) -> ComplexVector {
        ComplexVector(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scale_real(&self, s: f64) -> ComplexVector {
        ComplexVector(self.0.iter().map(|z| z * s).collect())
    }

    pub fn add(&self, other: &ComplexVector) -> Result<ComplexVector> {
        self.check_len(other, "add")?;
        Ok(ComplexVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &ComplexVector) -> Result<ComplexVector> {
        self.check_len(other, "sub")?;
        Ok(ComplexVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: C64, other: &ComplexVector) -> Result<ComplexVector> {
        self.check_len(other, "axpy")?;
        Ok(ComplexVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect(),
        ))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

impl std::ops::Index<usize> for ComplexVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{}) ", self.rows, self.cols)?;
        f.debug_list().entries(self.data.iter()).finish()
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    /// Single column as a vector; used for N×1 link matrices.
    pub fn column(&self, c: usize) -> ComplexVector {
        ComplexVector::from_fn(self.rows, |r| self.get(r, c))
    }

    pub fn matvec(&self, x: &ComplexVector) -> Result<ComplexVector> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "matvec: {}x{} matrix with length-{} vector",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(ComplexVector::from_fn(self.rows, |r| {
            self.row(r).iter().zip(x.iter()).map(|(a, b)| a * b).sum()
        }))
    }

    /// Row vector times matrix: `xᵀ A` (no conjugation of `x`).
    pub fn vecmat(&self, x: &ComplexVector) -> Result<ComplexVector> {
        if x.len() != self.rows {
            return Err(Error::Shape(format!(
                "vecmat: length-{} vector with {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = ComplexVector::zeros(self.cols);
        for (r, xr) in x.iter().enumerate() {
            for (o, a) in out.as_mut_slice().iter_mut().zip(self.row(r)) {
                *o += xr * a;
            }
        }
        Ok(out)
    }

    pub fn scale_real(&self, s: f64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn mean_power(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }
}

/// Deterministic random stream identified by `(seed, stream)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so two streams with the same seed never overlap.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream for a `(purpose, index)` pair, independent of how much
    /// of the parent has been consumed.
    pub fn derive(&self, purpose: u64, index: u64) -> RngStream {
        let mixed = splitmix(splitmix(self.stream ^ purpose.rotate_left(32)) ^ index);
        RngStream::new(self.seed, mixed)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One circularly symmetric complex Gaussian draw, `CN(0, variance)`.
pub fn cgauss(rng: &mut RngStream, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    C64::new(s * rng.normal(), s * rng.normal())
}

/// `n` i.i.d. draws from `CN(0, variance)`.
pub fn cgauss_sample(rng: &mut RngStream, n: usize, variance: f64) -> Result<ComplexVector> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!(
            "complex Gaussian variance must be finite and >= 0, got {variance}"
        )));
    }
    Ok(ComplexVector::from_fn(n, |_| cgauss(rng, variance)))
}

/// Solves `(v·I + f·a aᴴ) x = b` with the rank-one (Sherman–Morrison) identity
/// `x = b/v − f (aᴴb) a / (v (v + f‖a‖²))`.
pub fn solve_rank1_regularized(
    v: f64,
    f: f64,
    a: &ComplexVector,
    b: &ComplexVector,
) -> Result<ComplexVector> {
    if !(v > 0.0) {
        return Err(Error::Singular(format!(
            "regularizer must be positive, got {v}"
        )));
    }
    if !(f >= 0.0) {
        return Err(Error::Domain(format!(
            "rank-one weight must be >= 0, got {f}"
        )));
    }
    let ahb = a.dotc(b)?;
    let denom = v * (v + f * a.norm_sqr());
    let coef = ahb * (-f / denom);
    b.scale_real(1.0 / v).axpy(coef, a)
}
