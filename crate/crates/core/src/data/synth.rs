//! Planted sparse data for dictionary-recovery checks.

use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::models::LinearDecoder;
use crate::numerics::{Matrix, SeededRng};

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: Dataset,
    /// planted dictionary, unit-norm columns
    pub planted: LinearDecoder<f32>,
    /// the codes that generated each sample
    pub codes: Matrix<f32>,
}

/// `y = W z + eps` with `k_active` uniformly chosen components of `z` set to
/// `|N(0, 1)|` values and `eps ~ N(0, noise_std^2)`.
pub fn synth_sparse(d: usize, l: usize, k_active: usize, n: usize, noise_std: f64, rng: &mut SeededRng) -> Synthetic {
    assert!(k_active <= l, "k_active = {k_active} exceeds l = {l}");
    let mut w = Matrix::<f64>::from_shape_simple_fn((d, l), || StandardNormal.sample(rng));
    for mut col in w.columns_mut() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            col /= norm;
        } else {
            col[0] = 1.0;
        }
    }
    let mut z = Matrix::<f64>::zeros((l, n));
    for i in 0..n {
        for j in rand::seq::index::sample(rng, l, k_active) {
            let v: f64 = StandardNormal.sample(rng);
            z[[j, i]] = v.abs();
        }
    }
    let mut y = w.dot(&z);
    if noise_std > 0.0 {
        y.mapv_inplace(|v| {
            let e: f64 = StandardNormal.sample(rng);
            v + noise_std * e
        });
    }
    let mut data = Dataset::new(y.mapv(|v| v as f32), None, "synthetic").expect("no labels");
    data.peak = Some(data.range());
    Synthetic {
        data,
        planted: LinearDecoder { w: w.mapv(|v| v as f32) },
        codes: z.mapv(|v| v as f32),
    }
}
