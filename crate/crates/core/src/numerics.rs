//! Dense linear algebra and seeded randomness shared by every other module.
//!
//! Matrices are plain `ndarray` arrays. Training runs in `f32`, oracle and
//! gradient-check paths in `f64`; everything numeric is generic over [`Real`].
//! Reductions accumulate sequentially in `f64` so results do not depend on
//! thread count or input precision.

use ndarray::{Array1, Array2, ArrayBase, ArrayView2, Axis, Data, Ix2, NdFloat};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Floating point element type usable for models and inference.
pub trait Real: NdFloat + Default {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Row-major dense matrix. Batches store one sample per column.
pub type Matrix<T> = Array2<T>;

/// Shape-checked matrix product.
pub fn matmul<T: Real>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Result<Matrix<T>> {
    if a.ncols() != b.nrows() {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    Ok(a.dot(&b))
}

pub fn transpose<T: Real>(a: ArrayView2<'_, T>) -> Matrix<T> {
    a.t().to_owned()
}

/// Matrix with i.i.d. `N(mean, std^2)` entries.
pub fn randn<T: Real>(rng: &mut SeededRng, rows: usize, cols: usize, mean: f64, std: f64) -> Matrix<T> {
    debug_assert!(std >= 0.0);
    Array2::from_shape_simple_fn((rows, cols), || {
        let x: f64 = StandardNormal.sample(rng);
        T::from_f64(mean + std * x)
    })
}

pub fn sum<S, T>(a: &ArrayBase<S, Ix2>) -> f64
where
    S: Data<Elem = T>,
    T: Real,
{
    a.iter().fold(0.0, |acc, &v| acc + v.as_f64())
}

pub fn mean<S, T>(a: &ArrayBase<S, Ix2>) -> f64
where
    S: Data<Elem = T>,
    T: Real,
{
    if a.is_empty() {
        return 0.0;
    }
    sum(a) / a.len() as f64
}

/// Mean and unbiased (`n - 1`) variance over all entries.
pub fn mean_var<S, T>(a: &ArrayBase<S, Ix2>) -> (f64, f64)
where
    S: Data<Elem = T>,
    T: Real,
{
    let n = a.len();
    let mu = mean(a);
    if n < 2 {
        return (mu, 0.0);
    }
    let ss = a.iter().fold(0.0, |acc, &v| {
        let d = v.as_f64() - mu;
        acc + d * d
    });
    (mu, ss / (n - 1) as f64)
}

/// Per-row mean and unbiased variance. With a code batch `l x n` this gives
/// each latent component's statistics across the batch.
pub fn row_mean_var<S, T>(a: &ArrayBase<S, Ix2>) -> (Array1<f64>, Array1<f64>)
where
    S: Data<Elem = T>,
    T: Real,
{
    let n = a.ncols();
    let mut means = Array1::zeros(a.nrows());
    let mut vars = Array1::zeros(a.nrows());
    for (j, row) in a.axis_iter(Axis(0)).enumerate() {
        let mu = row.iter().fold(0.0, |acc, &v| acc + v.as_f64()) / n.max(1) as f64;
        means[j] = mu;
        if n >= 2 {
            let ss = row.iter().fold(0.0, |acc, &v| {
                let d = v.as_f64() - mu;
                acc + d * d
            });
            vars[j] = ss / (n - 1) as f64;
        }
    }
    (means, vars)
}

pub fn frobenius_norm<S, T>(a: &ArrayBase<S, Ix2>) -> f64
where
    S: Data<Elem = T>,
    T: Real,
{
    a.iter()
        .fold(0.0, |acc, &v| {
            let x = v.as_f64();
            acc + x * x
        })
        .sqrt()
}

pub fn squared_norm_diff<S1, S2, T>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> f64
where
    S1: Data<Elem = T>,
    S2: Data<Elem = T>,
    T: Real,
{
    a.iter().zip(b.iter()).fold(0.0, |acc, (&x, &y)| {
        let d = x.as_f64() - y.as_f64();
        acc + d * d
    })
}

pub fn l1_norm<S, T>(a: &ArrayBase<S, Ix2>) -> f64
where
    S: Data<Elem = T>,
    T: Real,
{
    a.iter().fold(0.0, |acc, &v| acc + v.as_f64().abs())
}

/// l2 norm of every column.
pub fn column_norms<S, T>(a: &ArrayBase<S, Ix2>) -> Vec<f64>
where
    S: Data<Elem = T>,
    T: Real,
{
    a.axis_iter(Axis(1))
        .map(|c| c.iter().fold(0.0, |acc, &v| acc + v.as_f64() * v.as_f64()).sqrt())
        .collect()
}

pub fn all_finite<S, T>(a: &ArrayBase<S, Ix2>) -> bool
where
    S: Data<Elem = T>,
    T: Real,
{
    a.iter().all(|v| v.is_finite())
}

pub fn cast<T: Real, U: Real>(a: ArrayView2<'_, T>) -> Matrix<U> {
    a.mapv(|v| U::from_f64(v.as_f64()))
}

/// Deterministic random source: ChaCha8 keyed by a 64-bit seed, with
/// independent named sub-streams so that, say, the shuffle order does not
/// move when the initializer draws a different number of samples.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Sub-stream `name` of `seed`. Stream ids are FNV-1a hashes of the name.
    pub fn substream(seed: u64, name: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a(name.as_bytes()));
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        "chacha8"
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
