//! Sparse inference: ISTA/FISTA on the l1-penalized reconstruction energy,
//! extended to whole mini-batches with a squared hinge on each latent
//! component's batch standard deviation and a pull toward encoder
//! predictions.
//!
//! For a batch `Y` (d x n) and codes `Z` (l x n) the minimized energy is
//!
//! ```text
//! sum_i 1/2 ||y_i - D(z_i)||^2                        reconstruction
//!   + beta  sum_j [(T - sqrt(Var(Z_j.)))_+]^2         variance hinge
//!   + gamma sum_i ||z_i - E(y_i)||^2                  encoder pull
//!   + lambda sum_i ||z_i||_1
//! ```
//!
//! The first three terms form the smooth part and take the gradient step; the
//! l1 term is handled by shrinkage with threshold `lambda * eta`.
//! [`EnergyScale::Mean`] swaps the two squared errors for per-dimension means
//! and is solved through the equivalent rescaled sum form.

use ndarray::{ArrayView1, Axis, Zip};

use crate::error::{Error, Result};
use crate::models::{Decoder, ListaEncoder};
use crate::numerics::{frobenius_norm, l1_norm, row_mean_var, squared_norm_diff, Matrix, Real};

/// Variance below this is treated as exactly zero by the hinge gradient.
const ZERO_VARIANCE: f64 = 1e-12;
const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    /// l1 weight
    pub lambda: f64,
    /// variance hinge weight
    pub beta: f64,
    /// per-component standard deviation threshold `T`
    pub threshold: f64,
    /// encoder pull weight
    pub gamma: f64,
    /// constant step size
    pub eta: f64,
    pub max_iters: usize,
    /// relative change below which iteration stops; `0` disables early stopping
    pub tol: f64,
    /// restrict codes to be non-negative
    pub nonneg: bool,
    pub step_rule: StepRule,
    pub scale: EnergyScale,
}

/// Normalization of the squared-error terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyScale {
    /// `1/2 ||y - D(z)||^2` and `gamma ||z - E(y)||^2` as written above
    #[default]
    Sum,
    /// mean squared errors: `(1/d) ||y - D(z)||^2` and
    /// `(gamma/l) ||z - E(y)||^2`, the l1 and hinge terms unchanged
    Mean,
}

impl std::str::FromStr for EnergyScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(EnergyScale::Sum),
            "mean" => Ok(EnergyScale::Mean),
            _ => Err(Error::Config(format!("unknown energy scale {s:?} (expected sum or mean)"))),
        }
    }
}

impl std::fmt::Display for EnergyScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnergyScale::Sum => "sum",
            EnergyScale::Mean => "mean",
        })
    }
}

/// How the gradient step is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// `eta` is the step
    #[default]
    Constant,
    /// the step is `eta / L`, where `L` bounds the curvature of the
    /// reconstruction and encoder-pull terms for the current decoder
    Lipschitz,
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(StepRule::Constant),
            "lipschitz" => Ok(StepRule::Lipschitz),
            _ => Err(Error::Config(format!("unknown step rule {s:?} (expected constant or lipschitz)"))),
        }
    }
}

impl std::fmt::Display for StepRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepRule::Constant => "constant",
            StepRule::Lipschitz => "lipschitz",
        })
    }
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            beta: 0.0,
            threshold: 0.5,
            gamma: 0.0,
            eta: 1.0,
            max_iters: 200,
            tol: 1e-3,
            nonneg: true,
            step_rule: StepRule::Constant,
            scale: EnergyScale::Sum,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [("lambda", self.lambda), ("beta", self.beta), ("gamma", self.gamma), ("tol", self.tol)];
        for (name, v) in weights {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.beta > 0.0 && (!self.threshold.is_finite() || self.threshold <= 0.0) {
            return Err(Error::Config(format!("threshold must be > 0 when beta > 0, got {}", self.threshold)));
        }
        Ok(())
    }

    /// The equivalent `Sum`-scaled configuration for inputs of dimension `d`
    /// and codes of dimension `l`, plus the factor converting its energies
    /// back to this configuration's scale. Minimizers and iterates coincide.
    pub fn sum_form(&self, d: usize, l: usize) -> (InferenceConfig, f64) {
        match self.scale {
            EnergyScale::Sum => (self.clone(), 1.0),
            EnergyScale::Mean => {
                let k = d as f64 / 2.0;
                let cfg = InferenceConfig {
                    lambda: self.lambda * k,
                    beta: self.beta * k,
                    gamma: self.gamma * k / l.max(1) as f64,
                    eta: match self.step_rule {
                        StepRule::Constant => self.eta / k,
                        StepRule::Lipschitz => self.eta,
                    },
                    scale: EnergyScale::Sum,
                    ..self.clone()
                };
                (cfg, 1.0 / k)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceResult<T> {
    pub codes: Matrix<T>,
    pub iters_run: usize,
    pub converged: bool,
    pub final_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ista,
    Fista,
}

/// Soft-threshold `x` by `alpha`; with `nonneg` negative outputs are clamped
/// to zero as well.
#[inline]
pub fn shrink_scalar(x: f64, alpha: f64, nonneg: bool) -> f64 {
    let mag = (x.abs() - alpha).max(0.0);
    let v = if x < 0.0 { -mag } else { mag };
    if nonneg {
        v.max(0.0)
    } else {
        v
    }
}

pub fn shrink<T: Real>(x: &Matrix<T>, alpha: f64, nonneg: bool) -> Matrix<T> {
    let mut out = x.clone();
    shrink_inplace(&mut out, alpha, nonneg);
    out
}

pub fn shrink_inplace<T: Real>(x: &mut Matrix<T>, alpha: f64, nonneg: bool) {
    let a = T::from_f64(alpha);
    let zero = T::zero();
    if nonneg {
        x.mapv_inplace(|v| if v > a { v - a } else { zero });
    } else {
        x.mapv_inplace(|v| {
            if v > a {
                v - a
            } else if v < -a {
                v + a
            } else {
                zero
            }
        });
    }
}

/// `1/2 ||y - D(z)||^2 + lambda ||z||_1` for a single sample.
pub fn base_energy<T: Real>(z: ArrayView1<'_, T>, y: ArrayView1<'_, T>, dec: &Decoder<T>, lambda: f64) -> Result<f64> {
    let z = z.to_owned().insert_axis(Axis(1));
    let y = y.to_owned().insert_axis(Axis(1));
    let recon = dec.decode(&z)?;
    if recon.shape() != y.shape() {
        return Err(Error::shape("base_energy", recon.shape(), y.shape()));
    }
    Ok(0.5 * squared_norm_diff(&y, &recon) + lambda * l1_norm(&z))
}

/// `beta * sum_j [(T - sqrt(Var(z_j.)))_+]^2` with the `n - 1` variance.
pub fn variance_penalty<T: Real>(z: &Matrix<T>, beta: f64, threshold: f64) -> Result<f64> {
    if z.ncols() < 2 {
        return Err(Error::BatchTooSmall(z.ncols()));
    }
    let (_, vars) = row_mean_var(z);
    Ok(beta
        * vars
            .iter()
            .map(|&v| {
                let h = (threshold - v.sqrt()).max(0.0);
                h * h
            })
            .sum::<f64>())
}

/// Gradient of [`variance_penalty`]. Entry `(s, t)` is
/// `-(2 beta / (n-1)) (T - std_s) / std_s * (z_st - mu_s)` when `std_s < T`,
/// otherwise zero. Rows with (numerically) zero variance get a zero gradient.
pub fn variance_penalty_grad<T: Real>(z: &Matrix<T>, beta: f64, threshold: f64) -> Result<Matrix<T>> {
    let n = z.ncols();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let (means, vars) = row_mean_var(z);
    let mut g = Matrix::zeros(z.raw_dim());
    for (s, (mut grow, zrow)) in g.axis_iter_mut(Axis(0)).zip(z.axis_iter(Axis(0))).enumerate() {
        let var = vars[s];
        let std = var.sqrt();
        if var < ZERO_VARIANCE || std >= threshold {
            continue;
        }
        let coef = -(2.0 * beta / (n - 1) as f64) * (threshold - std) / std;
        let mu = means[s];
        Zip::from(&mut grow)
            .and(&zrow)
            .for_each(|g, &v| *g = T::from_f64(coef * (v.as_f64() - mu)));
    }
    Ok(g)
}

/// Full batch energy. The encoder pull is included only when `gamma > 0` and
/// an encoder is given; the variance hinge only when `beta > 0`.
pub fn batch_energy<T: Real>(
    z: &Matrix<T>,
    y: &Matrix<T>,
    dec: &Decoder<T>,
    enc: Option<&ListaEncoder<T>>,
    cfg: &InferenceConfig,
) -> Result<f64> {
    let target = match enc {
        Some(enc) if cfg.gamma > 0.0 => Some(enc.encode(y)?),
        _ => None,
    };
    batch_energy_with_target(z, y, dec, target.as_ref(), cfg)
}

/// [`batch_energy`] with precomputed encoder predictions.
pub fn batch_energy_with_target<T: Real>(
    z: &Matrix<T>,
    y: &Matrix<T>,
    dec: &Decoder<T>,
    target: Option<&Matrix<T>>,
    cfg: &InferenceConfig,
) -> Result<f64> {
    if cfg.scale != EnergyScale::Sum {
        let (sum_cfg, factor) = cfg.sum_form(y.nrows(), z.nrows());
        return Ok(batch_energy_with_target(z, y, dec, target, &sum_cfg)? * factor);
    }
    let recon = dec.decode(z)?;
    if recon.shape() != y.shape() {
        return Err(Error::shape("batch_energy", recon.shape(), y.shape()));
    }
    let mut e = 0.5 * squared_norm_diff(y, &recon) + cfg.lambda * l1_norm(z);
    if cfg.beta > 0.0 {
        e += variance_penalty(z, cfg.beta, cfg.threshold)?;
    }
    if let (Some(t), true) = (target, cfg.gamma > 0.0) {
        if t.shape() != z.shape() {
            return Err(Error::shape("batch_energy", z.shape(), t.shape()));
        }
        e += cfg.gamma * squared_norm_diff(z, t);
    }
    Ok(e)
}

/// Reconstruction gradient prepared once per call. For a linear dictionary
/// the Gram matrix `W^T W` and `W^T Y` are formed up front so each iteration
/// costs `l x l x n` instead of `2 x d x l x n`.
enum Reconstruction<'a, T> {
    Gram { gram: Matrix<T>, wty: Matrix<T> },
    General { dec: &'a Decoder<T>, y: &'a Matrix<T> },
}

impl<'a, T: Real> Reconstruction<'a, T> {
    fn new(dec: &'a Decoder<T>, y: &'a Matrix<T>) -> Self {
        match dec {
            Decoder::Linear(lin) => Reconstruction::Gram {
                gram: lin.w.t().dot(&lin.w),
                wty: lin.w.t().dot(y),
            },
            Decoder::Mlp(_) => Reconstruction::General { dec, y },
        }
    }

    /// Upper bound on the largest eigenvalue of the reconstruction Hessian
    /// (exact for a linear dictionary up to power-iteration accuracy).
    fn curvature(&self) -> f64 {
        match self {
            Reconstruction::Gram { gram, .. } => spectral_norm_sq(&gram.view(), true),
            Reconstruction::General { dec, .. } => match dec {
                Decoder::Mlp(m) => spectral_norm_sq(&m.w1.view(), false) * spectral_norm_sq(&m.w2.view(), false),
                Decoder::Linear(l) => spectral_norm_sq(&l.w.view(), false),
            },
        }
    }

    fn grad(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        match self {
            Reconstruction::Gram { gram, wty } => Ok(gram.dot(x) - wty),
            Reconstruction::General { dec, y } => dec.grad_z(x, y),
        }
    }
}

const POWER_ITERS: usize = 50;

/// Largest eigenvalue of `a` when `symmetric` (a positive semi-definite Gram
/// matrix), otherwise of `a^T a`, by power iteration from the all-ones vector.
/// Slightly inflated to stay on the safe side of the true value.
pub fn spectral_norm_sq<T: Real>(a: &ndarray::ArrayView2<'_, T>, symmetric: bool) -> f64 {
    let a = a.mapv(|v| v.as_f64());
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = ndarray::Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..POWER_ITERS {
        let w = if symmetric { a.dot(&v) } else { a.t().dot(&a.dot(&v)) };
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return est;
        }
        est = v.dot(&w);
        v = w / norm;
    }
    est * 1.01
}

fn check_batch<T: Real>(y: &Matrix<T>, dec: &Decoder<T>, cfg: &InferenceConfig) -> Result<()> {
    if y.nrows() != dec.output_dim() {
        return Err(Error::shape("inference", &[dec.output_dim(), dec.latent_dim()], y.shape()));
    }
    if cfg.beta > 0.0 && y.ncols() < 2 {
        return Err(Error::BatchTooSmall(y.ncols()));
    }
    Ok(())
}

/// FISTA inference. Without `z0` the codes start from the encoder prediction
/// when an encoder is given, else from zero.
pub fn fista_infer<T: Real>(
    y: &Matrix<T>,
    dec: &Decoder<T>,
    enc: Option<&ListaEncoder<T>>,
    cfg: &InferenceConfig,
    z0: Option<&Matrix<T>>,
) -> Result<InferenceResult<T>> {
    infer(Method::Fista, y, dec, enc, cfg, z0)
}

/// ISTA inference, same contract as [`fista_infer`] without momentum.
pub fn ista_infer<T: Real>(
    y: &Matrix<T>,
    dec: &Decoder<T>,
    enc: Option<&ListaEncoder<T>>,
    cfg: &InferenceConfig,
    z0: Option<&Matrix<T>>,
) -> Result<InferenceResult<T>> {
    infer(Method::Ista, y, dec, enc, cfg, z0)
}

pub fn infer<T: Real>(
    method: Method,
    y: &Matrix<T>,
    dec: &Decoder<T>,
    enc: Option<&ListaEncoder<T>>,
    cfg: &InferenceConfig,
    z0: Option<&Matrix<T>>,
) -> Result<InferenceResult<T>> {
    let prediction = enc.map(|e| e.encode(y)).transpose()?;
    let z0 = z0.or(prediction.as_ref());
    infer_with_target(method, y, dec, prediction.as_ref(), cfg, z0)
}

/// Inference against precomputed encoder predictions `target` (treated as
/// constants). `z0` defaults to zero.
pub fn infer_with_target<T: Real>(
    method: Method,
    y: &Matrix<T>,
    dec: &Decoder<T>,
    target: Option<&Matrix<T>>,
    cfg: &InferenceConfig,
    z0: Option<&Matrix<T>>,
) -> Result<InferenceResult<T>> {
    cfg.validate()?;
    check_batch(y, dec, cfg)?;
    let (cfg, energy_factor) = cfg.sum_form(y.nrows(), dec.latent_dim());
    let cfg = &cfg;
    let shape = (dec.latent_dim(), y.ncols());
    let mut z = match z0 {
        Some(z0) if z0.dim() != shape => return Err(Error::shape("inference", &[shape.0, shape.1], z0.shape())),
        Some(z0) => z0.clone(),
        None => Matrix::zeros(shape),
    };
    let target = target.filter(|_| cfg.gamma > 0.0);
    if let Some(t) = target {
        if t.dim() != shape {
            return Err(Error::shape("inference", &[shape.0, shape.1], t.shape()));
        }
    }

    let recon = Reconstruction::new(dec, y);
    let step = match cfg.step_rule {
        StepRule::Constant => cfg.eta,
        StepRule::Lipschitz => {
            let pull = if target.is_some() { 2.0 * cfg.gamma } else { 0.0 };
            let l = recon.curvature() + pull;
            if l > 0.0 {
                cfg.eta / l
            } else {
                cfg.eta
            }
        }
    };
    let eta = T::from_f64(step);
    let pull = T::from_f64(2.0 * cfg.gamma);
    let threshold = cfg.lambda * step;

    let mut z_prev = z.clone();
    let mut t_k = 1.0f64;
    let mut iters_run = 0;
    let mut converged = false;

    for k in 1..=cfg.max_iters {
        // momentum point; z^(-1) = z^(0) makes the first coefficient vanish
        let x = match method {
            Method::Fista if k > 1 => {
                let t_next = (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt()) / 2.0;
                let coef = T::from_f64((t_k - 1.0) / t_next);
                t_k = t_next;
                let mut x = &z - &z_prev;
                x.mapv_inplace(|v| v * coef);
                x += &z;
                x
            }
            _ => z.clone(),
        };

        let mut grad = recon.grad(&x)?;
        if cfg.beta > 0.0 {
            grad += &variance_penalty_grad(&x, cfg.beta, cfg.threshold)?;
        }
        if let Some(t) = target {
            Zip::from(&mut grad)
                .and(&x)
                .and(t)
                .for_each(|g, &xv, &tv| *g = *g + pull * (xv - tv));
        }

        let mut next = x;
        Zip::from(&mut next).and(&grad).for_each(|v, &g| *v = *v - eta * g);
        shrink_inplace(&mut next, threshold, cfg.nonneg);

        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { iteration: k });
        }

        iters_run = k;
        let change = frobenius_norm(&(&next - &z));
        let prev_norm = frobenius_norm(&z);
        z_prev = std::mem::replace(&mut z, next);
        if cfg.tol > 0.0 {
            let done = if prev_norm < ZERO_NORM {
                frobenius_norm(&z) < ZERO_NORM
            } else {
                change / prev_norm < cfg.tol
            };
            if done {
                converged = true;
                break;
            }
        }
    }

    let final_energy = batch_energy_with_target(&z, y, dec, target, cfg)? * energy_factor;
    if !final_energy.is_finite() {
        return Err(Error::Diverged { iteration: iters_run });
    }
    Ok(InferenceResult {
        codes: z,
        iters_run,
        converged,
        final_energy,
    })
}
