//! Local contrast normalization with a Gaussian window.
//!
//! `v = x - g * x`, then `v / max(sqrt(g * v^2), floor)`, where `*` is a
//! 2-D convolution with reflect padding (the edge pixel is not repeated).
//! The window is separable, so both convolutions run as a row pass followed
//! by a column pass.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LcnConfig {
    /// odd window side
    pub size: usize,
    pub sigma: f64,
    /// lower bound on the divisive denominator
    pub floor: f64,
}

impl Default for LcnConfig {
    fn default() -> Self {
        Self {
            size: 13,
            sigma: 5.0,
            floor: 1e-4,
        }
    }
}

/// 1-D Gaussian taps normalized to sum 1. The 2-D window is their outer
/// product and therefore also sums to 1.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Array1<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Array1<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - c;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s = k.sum();
    k / s
}

/// Index into `0..n` with reflection about the first and last samples.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

fn convolve_separable(x: &Array2<f64>, k: &Array1<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    let r = (k.len() / 2) as isize;
    let mut rows = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                acc += kv * x[[i, reflect(j as isize + t as isize - r, w)]];
            }
            rows[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                acc += kv * rows[[reflect(i as isize + t as isize - r, h), j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Subtractive stage only: `x - g * x`.
pub fn lcn_subtractive(image: &Array2<f64>, cfg: &LcnConfig) -> Result<Array2<f64>> {
    check(image, cfg)?;
    let k = gaussian_kernel(cfg.size, cfg.sigma);
    Ok(image - &convolve_separable(image, &k))
}

pub fn lcn(image: &Array2<f64>, cfg: &LcnConfig) -> Result<Array2<f64>> {
    check(image, cfg)?;
    let k = gaussian_kernel(cfg.size, cfg.sigma);
    let v = image - &convolve_separable(image, &k);
    let local = convolve_separable(&v.mapv(|a| a * a), &k);
    Ok(ndarray::Zip::from(&v)
        .and(&local)
        .map_collect(|&a, &s| a / s.max(0.0).sqrt().max(cfg.floor)))
}

fn check(image: &Array2<f64>, cfg: &LcnConfig) -> Result<()> {
    if cfg.size % 2 == 0 || cfg.size == 0 {
        return Err(Error::Config(format!("LCN window must be odd, got {}", cfg.size)));
    }
    let (h, w) = image.dim();
    if h < cfg.size || w < cfg.size {
        return Err(Error::Data(format!(
            "image {h}x{w} is smaller than the {0}x{0} LCN window",
            cfg.size
        )));
    }
    Ok(())
}
