//! Alternating training: encoder prediction, FISTA inference from that
//! prediction, one Adam step on the decoder against the inferred codes, one
//! on the encoder. The model with the lowest validation energy (computed with
//! encoder codes only) is kept.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Axis;
use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{auto_peak, csv_row, evaluate_amortized, mean_component_std, write_text};
use crate::inference::{infer_with_target, InferenceConfig, Method};
use crate::models::{Autoencoder, Decoder, ListaEncoder};
use crate::numerics::{Matrix, Real, SeededRng};
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// linear dictionary, unit-norm columns
    Sdl,
    /// linear dictionary, variance-regularized codes
    Vdl,
    /// MLP decoder, unit-norm columns in both layers
    SdlNl,
    /// MLP decoder, variance-regularized codes
    VdlNl,
}

impl Variant {
    pub fn is_linear(self) -> bool {
        matches!(self, Variant::Sdl | Variant::Vdl)
    }

    /// Whether decoder columns are projected to unit norm after each step.
    pub fn projects(self) -> bool {
        matches!(self, Variant::Sdl | Variant::SdlNl)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sdl => "sdl",
            Variant::Vdl => "vdl",
            Variant::SdlNl => "sdl-nl",
            Variant::VdlNl => "vdl-nl",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sdl" => Ok(Variant::Sdl),
            "vdl" => Ok(Variant::Vdl),
            "sdl-nl" => Ok(Variant::SdlNl),
            "vdl-nl" => Ok(Variant::VdlNl),
            _ => Err(Error::Config(format!("unknown variant {s:?} (expected sdl, vdl, sdl-nl, vdl-nl)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub inference: InferenceConfig,
    pub lr_dec: f64,
    pub lr_enc: f64,
    /// weight decay on the decoder hidden bias (MLP only)
    pub wd_b_dec: f64,
    /// weight decay on the encoder bias
    pub wd_b_enc: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lista_iters: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    /// halve the decoder learning rate every this many epochs
    pub lr_dec_anneal: Option<usize>,
    /// PSNR peak for validation; the validation set's recorded peak when unset
    pub psnr_peak: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sdl,
            epochs: 100,
            batch_size: 250,
            inference: InferenceConfig::default(),
            lr_dec: 1e-3,
            lr_enc: 3e-4,
            wd_b_dec: 0.0,
            wd_b_enc: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lista_iters: 3,
            latent_dim: 128,
            hidden_dim: 1024,
            seed: 0,
            lr_dec_anneal: None,
            psnr_peak: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.inference.validate()?;
        if self.inference.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if self.variant.projects() && self.inference.beta > 0.0 {
            return Err(Error::Config(format!(
                "variant {} fixes decoder column norms and must use beta = 0",
                self.variant
            )));
        }
        if self.inference.beta > 0.0 && self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2 when beta > 0".into()));
        }
        if self.batch_size == 0 || self.latent_dim == 0 {
            return Err(Error::Config("batch_size and latent_dim must be >= 1".into()));
        }
        if !self.variant.is_linear() && self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        for (name, v) in [
            ("lr_dec", self.lr_dec),
            ("lr_enc", self.lr_enc),
            ("wd_b_dec", self.wd_b_dec),
            ("wd_b_enc", self.wd_b_enc),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps be > 0".into()));
        }
        if self.lr_dec_anneal == Some(0) {
            return Err(Error::Config("lr_dec_anneal must be >= 1".into()));
        }
        if !self.variant.projects() && self.inference.beta == 0.0 {
            log::warn!("variant {} with beta = 0: codes are unregularized and may collapse", self.variant);
        }
        Ok(())
    }

    /// Decoder learning rate in effect during `epoch` (1-based).
    pub fn lr_dec_at(&self, epoch: usize) -> f64 {
        match self.lr_dec_anneal {
            Some(n) => self.lr_dec * 0.5f64.powi(((epoch - 1) / n) as i32),
            None => self.lr_dec,
        }
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Freshly initialized model for `cfg`, drawn from the `init` sub-stream.
pub fn init_model(cfg: &TrainConfig, input_dim: usize) -> Autoencoder<f32> {
    let mut rng = SeededRng::substream(cfg.seed, "init");
    let mut decoder = if cfg.variant.is_linear() {
        Decoder::linear_random(input_dim, cfg.latent_dim, &mut rng)
    } else {
        Decoder::mlp_random(input_dim, cfg.hidden_dim, cfg.latent_dim, &mut rng)
    };
    if cfg.variant.projects() {
        decoder.project_columns_unit_norm(&mut rng);
    }
    let encoder = ListaEncoder::random(input_dim, cfg.latent_dim, cfg.lista_iters, &mut rng);
    Autoencoder { decoder, encoder }
}

/// Code statistics of one epoch of inferred codes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollapseMetrics {
    pub mean_l1: f64,
    pub median_l1: f64,
    /// per-component standard deviation, averaged over components and batches
    pub mean_component_std: f64,
    /// fraction of components whose standard deviation, averaged over batches,
    /// is at least the reference level given to [`CollapseTracker::finish`]
    pub frac_components_above: f64,
}

/// Accumulates code statistics batch by batch.
#[derive(Debug, Clone, Default)]
pub struct CollapseTracker {
    l1: Vec<f64>,
    batch_std_means: Vec<f64>,
    component_std_sums: Vec<f64>,
    batches: usize,
}

impl CollapseTracker {
    pub fn record<T: Real>(&mut self, z: &Matrix<T>) {
        for col in z.axis_iter(Axis(1)) {
            self.l1.push(col.iter().fold(0.0, |a, v| a + v.as_f64().abs()));
        }
        if z.ncols() >= 2 {
            let (_, vars) = crate::numerics::row_mean_var(z);
            if self.component_std_sums.len() != vars.len() {
                self.component_std_sums = vec![0.0; vars.len()];
            }
            for (s, v) in self.component_std_sums.iter_mut().zip(vars.iter()) {
                *s += v.sqrt();
            }
            self.batch_std_means.push(mean_component_std(z));
            self.batches += 1;
        }
    }

    pub fn finish(&self, reference_std: f64) -> CollapseMetrics {
        let mut sorted = self.l1.clone();
        sorted.sort_by(f64::total_cmp);
        let median_l1 = match sorted.len() {
            0 => 0.0,
            n if n % 2 == 1 => sorted[n / 2],
            n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        };
        let b = self.batches.max(1) as f64;
        let comps = self.component_std_sums.len().max(1) as f64;
        CollapseMetrics {
            mean_l1: crate::eval::mean(&self.l1),
            median_l1,
            mean_component_std: crate::eval::mean(&self.batch_std_means),
            frac_components_above: self
                .component_std_sums
                .iter()
                .filter(|&&s| s / b >= reference_std)
                .count() as f64
                / comps,
        }
    }
}

/// Statistics of a sequence of code batches, e.g. the inferred codes of one
/// epoch.
pub fn collapse_metrics<T: Real>(history: &[Matrix<T>], reference_std: f64) -> CollapseMetrics {
    let mut t = CollapseTracker::default();
    for z in history {
        t.record(z);
    }
    t.finish(reference_std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// mean per-sample batch energy at the inferred codes
    pub train_energy: f64,
    /// mean per-sample energy of encoder codes on the validation set
    pub val_energy: f64,
    pub val_psnr: f64,
    pub val_sparsity_pct: f64,
    /// statistics of the codes inferred during the epoch
    pub mean_l1: f64,
    pub median_l1: f64,
    pub mean_component_std: f64,
    pub frac_components_above_half_t: f64,
    pub mean_atom_norm: f64,
    pub mean_fista_iters: f64,
    pub lr_dec: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,train_energy,val_energy,val_psnr,val_sparsity_pct,mean_l1,mean_component_std";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation energy
    pub best_epoch: Option<usize>,
    pub best_checkpoint: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    /// mean decoder atom norm at initialization
    pub initial_atom_norm: f64,
}

impl TrainReport {
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for r in &self.records {
            let vals = [
                r.epoch as f64,
                r.train_energy,
                r.val_energy,
                r.val_psnr,
                r.val_sparsity_pct,
                r.mean_l1,
                r.mean_component_std,
            ];
            writeln!(out, "{}", csv_row(&vals)).expect("string write");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// model of the best validation epoch (the initial model if no epoch ran)
    pub best: Autoencoder<f32>,
    pub last: Autoencoder<f32>,
}

pub const BEST_CHECKPOINT: &str = "best.spck";
pub const LAST_CHECKPOINT: &str = "last.spck";
pub const METRICS_FILE: &str = "metrics.csv";

/// Initialize a model and train it. With `out_dir` the best and final
/// checkpoints and the metrics CSV are written there.
pub fn train(train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let model = init_model(cfg, train_set.dim());
    train_model(model, train_set, val_set, cfg, out_dir)
}

/// Train `model` in place of a fresh initialization.
pub fn train_model(
    mut model: Autoencoder<f32>,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = model.decoder.output_dim();
    if train_set.dim() != d || val_set.dim() != d || model.encoder.input_dim() != d {
        return Err(Error::shape("train", &[d], &[train_set.dim(), val_set.dim()]));
    }
    if model.decoder.is_linear() != cfg.variant.is_linear() {
        return Err(Error::Config(format!("model decoder does not match variant {}", cfg.variant)));
    }
    let peak = cfg.psnr_peak.unwrap_or_else(|| auto_peak(val_set));
    let lambda = cfg.inference.lambda;
    let min_batch = if cfg.inference.beta > 0.0 { 2 } else { 1 };

    let mut shuffle_rng = SeededRng::substream(cfg.seed, "shuffle");
    let mut proj_rng = SeededRng::substream(cfg.seed, "project");
    let mut adam_dec = AdamState::<f32>::new(cfg.adam(cfg.lr_dec)).with_weight_decay("dec.b1", cfg.wd_b_dec);
    let mut adam_enc = AdamState::<f32>::new(cfg.adam(cfg.lr_enc)).with_weight_decay("enc.b", cfg.wd_b_enc);

    let mut report = TrainReport {
        records: Vec::new(),
        best_epoch: None,
        best_checkpoint: None,
        metrics_path: out_dir.map(|d| d.join(METRICS_FILE)),
        initial_atom_norm: model.decoder.mean_atom_norm(),
    };
    let mut best = model.clone();
    let mut best_energy = f64::INFINITY;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    if let Some(dir) = out_dir {
        write_text(&dir.join(METRICS_FILE), &report.metrics_csv())?;
    }

    for epoch in 1..=cfg.epochs {
        let lr_dec = cfg.lr_dec_at(epoch);
        adam_dec.set_lr(lr_dec);
        order.shuffle(&mut shuffle_rng);
        let mut tracker = CollapseTracker::default();
        let (mut energy_sum, mut seen, mut iters, mut batches) = (0.0, 0usize, 0usize, 0usize);

        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < min_batch {
                continue;
            }
            let y = train_set.samples.select(Axis(1), chunk);
            let target = model.encoder.encode(&y)?;
            let res = infer_with_target(Method::Fista, &y, &model.decoder, Some(&target), &cfg.inference, Some(&target))
                .map_err(|e| match e {
                    Error::Diverged { iteration } => {
                        log::error!("epoch {epoch}, batch {}: inference diverged at iteration {iteration}", b + 1);
                        e
                    }
                    other => other,
                })?;
            let z = res.codes;
            energy_sum += res.final_energy;
            seen += chunk.len();
            iters += res.iters_run;
            batches += 1;
            tracker.record(&z);

            let gd = model.decoder.grad_params(&z, &y)?;
            adam_dec.step(model.decoder.params_mut(), &gd.named())?;
            if cfg.variant.projects() {
                model.decoder.project_columns_unit_norm(&mut proj_rng);
            }
            let ge = model.encoder.grad_params(&y, &z)?;
            adam_enc.step(model.encoder.params_mut(), &ge.named())?;

            if !model.all_finite() {
                return Err(Error::NonFinite(format!("model parameters after epoch {epoch}, batch {}", b + 1)));
            }
        }

        let val = evaluate_amortized(&model, &val_set.samples, peak, lambda, cfg.inference.scale)?;
        let stats = tracker.finish(cfg.inference.threshold / 2.0);
        let record = EpochRecord {
            epoch,
            train_energy: if seen > 0 { energy_sum / seen as f64 } else { 0.0 },
            val_energy: val.energy,
            val_psnr: val.psnr_mean,
            val_sparsity_pct: val.sparsity_pct,
            mean_l1: stats.mean_l1,
            median_l1: stats.median_l1,
            mean_component_std: stats.mean_component_std,
            frac_components_above_half_t: stats.frac_components_above,
            mean_atom_norm: model.decoder.mean_atom_norm(),
            mean_fista_iters: if batches > 0 { iters as f64 / batches as f64 } else { 0.0 },
            lr_dec,
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} psnr {:.3} sparsity {:.2}% l1 {:.4} std {:.4} fista {:.1}",
            record.train_energy,
            record.val_energy,
            record.val_psnr,
            record.val_sparsity_pct,
            record.mean_l1,
            record.mean_component_std,
            record.mean_fista_iters
        );
        report.records.push(record);

        if val.energy < best_energy {
            best_energy = val.energy;
            best = model.clone();
            report.best_epoch = Some(epoch);
            if let Some(dir) = out_dir {
                let path = dir.join(BEST_CHECKPOINT);
                best.save(&path)?;
                report.best_checkpoint = Some(path);
            }
        }
        if let Some(dir) = out_dir {
            write_text(&dir.join(METRICS_FILE), &report.metrics_csv())?;
        }
    }
    if let Some(dir) = out_dir {
        model.save(&dir.join(LAST_CHECKPOINT))?;
    }
    Ok(TrainOutcome {
        report,
        best,
        last: model,
    })
}
