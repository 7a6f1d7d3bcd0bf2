//! Reconstruction and code metrics, denoising, atom inspection, dictionary
//! recovery scoring, linear probes and sparsity/PSNR trade-off tables.

mod atoms;
mod probe;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Axis};

pub use atoms::{atom_grid_pixels, atoms, export_atom_grid, match_atoms, AtomMatch};
pub use probe::{
    probe, probe_lista_on_raw, probe_linear_on_raw, stratified_subset, train_classifier, LinearClassifier,
    ProbeConfig, ProbeResult,
};

use crate::data::{add_gaussian_noise, Dataset};
use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::inference::EnergyScale;
use crate::numerics::{l1_norm, row_mean_var, Matrix, Real, SeededRng};

/// PSNR reported for an exact reconstruction.
pub const PSNR_CAP: f64 = 99.0;
/// Magnitude at or below which a code entry counts as inactive.
pub const ZERO_TOL: f64 = 1e-12;
/// Samples processed per chunk in the amortized evaluation passes.
const CHUNK: usize = 1000;

/// Per-image (per-column) `10 log10(peak^2 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr<T: Real>(reference: &Matrix<T>, candidate: &Matrix<T>, peak: f64) -> Result<Vec<f64>> {
    if reference.shape() != candidate.shape() {
        return Err(Error::shape("psnr", reference.shape(), candidate.shape()));
    }
    if !(peak > 0.0) {
        return Err(Error::Config(format!("PSNR peak must be > 0, got {peak}")));
    }
    let d = reference.nrows() as f64;
    Ok(reference
        .axis_iter(Axis(1))
        .zip(candidate.axis_iter(Axis(1)))
        .map(|(r, c)| {
            let mse = r.iter().zip(c.iter()).fold(0.0, |acc, (&a, &b)| {
                let e = a.as_f64() - b.as_f64();
                acc + e * e
            }) / d;
            if mse == 0.0 {
                PSNR_CAP
            } else {
                (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
            }
        })
        .collect())
}

/// The peak recorded with a dataset, else its own dynamic range.
pub fn auto_peak(ds: &Dataset) -> f64 {
    ds.peak.unwrap_or_else(|| ds.range())
}

/// Percentage of entries with `|z| <= 1e-12`.
pub fn sparsity<T: Real>(z: &Matrix<T>) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let zeros = z.iter().filter(|v| v.as_f64().abs() <= ZERO_TOL).count();
    100.0 * zeros as f64 / z.len() as f64
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Amortized-inference evaluation of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub psnr_mean: f64,
    pub psnr: Vec<f64>,
    pub sparsity_pct: f64,
    pub mean_l1: f64,
    pub mean_component_std: f64,
    /// mean per-sample `1/2 ||y - D(E(y))||^2 + lambda ||E(y)||_1`, with the
    /// squared error replaced by its per-dimension mean under `EnergyScale::Mean`
    pub energy: f64,
}

/// Encode every sample with the encoder alone, decode, and score.
pub fn evaluate_amortized(
    model: &Autoencoder<f32>,
    data: &Matrix<f32>,
    peak: f64,
    lambda: f64,
    scale: EnergyScale,
) -> Result<EvalRecord> {
    let n = data.ncols();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let recon_weight = match scale {
        EnergyScale::Sum => 0.5,
        EnergyScale::Mean => 1.0 / data.nrows().max(1) as f64,
    };
    let mut psnrs = Vec::with_capacity(n);
    let (mut zeros, mut l1, mut energy) = (0.0, 0.0, 0.0);
    let mut sum = vec![0.0f64; model.decoder.latent_dim()];
    let mut sumsq = vec![0.0f64; model.decoder.latent_dim()];
    for start in (0..n).step_by(CHUNK) {
        let y = data.slice(s![.., start..(start + CHUNK).min(n)]).to_owned();
        let z = model.encoder.encode(&y)?;
        let recon = model.decoder.decode(&z)?;
        psnrs.extend(psnr(&y, &recon, peak)?);
        zeros += sparsity(&z) * z.len() as f64 / 100.0;
        let batch_l1 = l1_norm(&z);
        l1 += batch_l1;
        energy += recon_weight * crate::numerics::squared_norm_diff(&y, &recon) + lambda * batch_l1;
        for (j, row) in z.axis_iter(Axis(0)).enumerate() {
            for &v in row {
                sum[j] += v as f64;
                sumsq[j] += v as f64 * v as f64;
            }
        }
    }
    let nf = n as f64;
    let l = sum.len();
    let mean_component_std = if n < 2 || l == 0 {
        0.0
    } else {
        sum.iter()
            .zip(&sumsq)
            .map(|(&s, &q)| ((q - s * s / nf) / (nf - 1.0)).max(0.0).sqrt())
            .sum::<f64>()
            / l as f64
    };
    Ok(EvalRecord {
        psnr_mean: mean(&psnrs),
        psnr: psnrs,
        sparsity_pct: 100.0 * zeros / (nf * l as f64),
        mean_l1: l1 / nf,
        mean_component_std,
        energy: energy / nf,
    })
}

/// Mean over components of the per-component standard deviation of one batch.
pub fn mean_component_std<T: Real>(z: &Matrix<T>) -> f64 {
    if z.nrows() == 0 || z.ncols() < 2 {
        return 0.0;
    }
    let (_, vars) = row_mean_var(z);
    vars.iter().map(|v| v.sqrt()).sum::<f64>() / vars.len() as f64
}

/// One row of the denoising table.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRecord {
    pub sigma: f64,
    pub psnr_clean_recon: f64,
    pub psnr_noisy_input: f64,
    pub psnr_noisy_recon: f64,
    pub sparsity_clean: f64,
    pub sparsity_noisy: f64,
}

pub const DENOISE_HEADER: &str = "sigma,psnr_clean_recon,psnr_noisy_input,psnr_noisy_recon,sparsity_clean,sparsity_noisy";

/// Corrupt `test` with `N(0, sigma^2)` noise and compare amortized
/// reconstructions of the clean and noisy inputs against the clean images.
pub fn denoise_eval(
    model: &Autoencoder<f32>,
    test: &Dataset,
    sigma: f64,
    peak: f64,
    rng: &mut SeededRng,
) -> Result<DenoiseRecord> {
    if test.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(sigma >= 0.0) {
        return Err(Error::Config(format!("sigma must be >= 0, got {sigma}")));
    }
    let y = &test.samples;
    let noisy = add_gaussian_noise(y, sigma, rng);
    let n = y.ncols();
    let (mut clean_recon, mut noisy_input, mut noisy_recon) = (Vec::new(), Vec::new(), Vec::new());
    let (mut zc, mut zn, mut total) = (0.0, 0.0, 0.0);
    for start in (0..n).step_by(CHUNK) {
        let cols = s![.., start..(start + CHUNK).min(n)];
        let yc = y.slice(cols).to_owned();
        let yn = noisy.slice(cols).to_owned();
        let codes_c = model.encoder.encode(&yc)?;
        let codes_n = model.encoder.encode(&yn)?;
        clean_recon.extend(psnr(&yc, &model.decoder.decode(&codes_c)?, peak)?);
        noisy_input.extend(psnr(&yc, &yn, peak)?);
        noisy_recon.extend(psnr(&yc, &model.decoder.decode(&codes_n)?, peak)?);
        zc += sparsity(&codes_c) * codes_c.len() as f64;
        zn += sparsity(&codes_n) * codes_n.len() as f64;
        total += codes_c.len() as f64;
    }
    Ok(DenoiseRecord {
        sigma,
        psnr_clean_recon: mean(&clean_recon),
        psnr_noisy_input: mean(&noisy_input),
        psnr_noisy_recon: mean(&noisy_recon),
        sparsity_clean: zc / total,
        sparsity_noisy: zn / total,
    })
}

pub fn write_denoise_csv(path: &Path, rows: &[DenoiseRecord]) -> Result<()> {
    let mut out = format!("{DENOISE_HEADER}\n");
    for r in rows {
        let vals = [
            r.sigma,
            r.psnr_clean_recon,
            r.psnr_noisy_input,
            r.psnr_noisy_recon,
            r.sparsity_clean,
            r.sparsity_noisy,
        ];
        writeln!(out, "{}", csv_row(&vals)).expect("string write");
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub lambda: f64,
    pub sparsity_pct: f64,
    pub psnr: f64,
}

pub const TRADEOFF_HEADER: &str = "lambda,sparsity_pct,psnr";

/// One row per `(lambda, model)` using amortized codes on `test`, sorted by
/// increasing sparsity.
pub fn tradeoff_curve(models: &[(f64, Autoencoder<f32>)], test: &Dataset, peak: f64) -> Result<Vec<TradeoffRow>> {
    let mut rows = Vec::with_capacity(models.len());
    for (lambda, model) in models {
        let rec = evaluate_amortized(model, &test.samples, peak, *lambda, EnergyScale::Sum)?;
        rows.push(TradeoffRow {
            lambda: *lambda,
            sparsity_pct: rec.sparsity_pct,
            psnr: rec.psnr_mean,
        });
    }
    rows.sort_by(|a, b| a.sparsity_pct.total_cmp(&b.sparsity_pct));
    Ok(rows)
}

pub fn write_tradeoff_csv(path: &Path, rows: &[TradeoffRow]) -> Result<()> {
    let mut out = format!("{TRADEOFF_HEADER}\n");
    for r in rows {
        writeln!(out, "{}", csv_row(&[r.lambda, r.sparsity_pct, r.psnr])).expect("string write");
    }
    write_text(path, &out)
}

/// `printf("%g")` formatting: 6 significant digits, trailing zeros dropped,
/// scientific notation for exponents below -4 or at least 6.
pub fn format_g(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_row(vals: &[f64]) -> String {
    vals.iter().map(|&v| format_g(v)).collect::<Vec<_>>().join(",")
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
