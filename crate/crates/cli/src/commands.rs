//! Subcommand implementations. Each returns the library error type so the
//! binary can map numerical failures to their own exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::s;
use sparsedict::data::{build_patch_datasets, load_mnist, synth_sparse, Dataset, PatchPipelineConfig};
use sparsedict::eval::{
    atoms, auto_peak, denoise_eval, export_atom_grid, format_g, probe, probe_linear_on_raw, probe_lista_on_raw,
    sparsity, tradeoff_curve, write_denoise_csv, write_tradeoff_csv, ProbeConfig, ProbeResult,
};
use sparsedict::inference::{batch_energy_with_target, infer_with_target, Method};
use sparsedict::models::{Autoencoder, Decoder};
use sparsedict::numerics::{l1_norm, Matrix, SeededRng};
use sparsedict::spck::{Container, Tensor};
use sparsedict::training::{train, TrainReport};
use sparsedict::{Error, Result};

use crate::config::{DataSource, RunConfig};

/// Train / validation / test sets of one data family.
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

fn require_path(p: &Path, what: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", p.display())))
    }
}

/// Load the data family named by the configuration.
pub fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    let seed = cfg.train.seed;
    let mut splits = match cfg.dataset {
        DataSource::Mnist => {
            require_path(&cfg.mnist_dir, "MNIST directory")?;
            let m = load_mnist(&cfg.mnist_dir, seed)?;
            Splits {
                train: m.train,
                val: m.val,
                test: m.test,
            }
        }
        DataSource::Patches => {
            require_path(&cfg.patches_dir, "image directory")?;
            let p = build_patch_datasets(
                &cfg.patches_dir,
                &PatchPipelineConfig {
                    patch_size: cfg.patch_size,
                    n_train: cfg.patch_train,
                    n_val: cfg.patch_val,
                    n_test: cfg.patch_test,
                    seed,
                    ..Default::default()
                },
            )?;
            Splits {
                train: p.train,
                val: p.val,
                test: p.test,
            }
        }
        DataSource::Files => {
            let path = cfg
                .train_file
                .as_ref()
                .ok_or_else(|| Error::Config("dataset = files needs train_file".into()))?;
            require_path(path, "train_file")?;
            let all = Dataset::load(path)?;
            let (train, val) = match &cfg.val_file {
                Some(v) => {
                    require_path(v, "val_file")?;
                    (all, Dataset::load(v)?)
                }
                None => holdout(&all, cfg.val_fraction, seed)?,
            };
            let test = match &cfg.test_file {
                Some(t) => {
                    require_path(t, "test_file")?;
                    Dataset::load(t)?
                }
                None => val.clone(),
            };
            Splits { train, val, test }
        }
    };
    if cfg.train_subset > 0 {
        splits.train = splits.train.head(cfg.train_subset);
    }
    Ok(splits)
}

/// Seeded split of one dataset into training and validation parts.
fn holdout(all: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    use rand::seq::SliceRandom;
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("val_fraction must lie in [0, 1), got {fraction}")));
    }
    let n_val = ((all.len() as f64 * fraction).round() as usize).max(1);
    if n_val >= all.len() {
        return Err(Error::Data(format!("{} samples are too few to hold out {n_val}", all.len())));
    }
    let mut idx: Vec<usize> = (0..all.len()).collect();
    idx.shuffle(&mut SeededRng::substream(seed, "split"));
    let (v, t) = idx.split_at(n_val);
    Ok((all.subset(t), all.subset(v)))
}

fn peak_for(cfg: &RunConfig, splits: &Splits) -> f64 {
    cfg.train.psnr_peak.unwrap_or_else(|| auto_peak(&splits.train))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.train.validate()?;
    let splits = load_splits(cfg)?;
    cfg.write_resolved()?;
    let mut tc = cfg.train.clone();
    tc.psnr_peak = Some(peak_for(cfg, &splits));
    let out = train(&splits.train, &splits.val, &tc, Some(&cfg.out_dir))?;
    if let Some(last) = out.report.records.last() {
        println!(
            "trained {} epochs: best epoch {} val_energy {} val_psnr {} val_sparsity {}%",
            last.epoch,
            out.report.best_epoch.unwrap_or(0),
            format_g(last.val_energy),
            format_g(last.val_psnr),
            format_g(last.val_sparsity_pct)
        );
    }
    Ok(out.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferMode {
    Amortized,
    Fista,
}

/// Summary of one `infer` call.
#[derive(Debug, Clone, PartialEq)]
pub struct InferSummary {
    pub samples: usize,
    pub sparsity_pct: f64,
    pub mean_l1: f64,
    /// total energy of the codes, summed over batches of `batch_size`
    pub energy: f64,
}

impl std::fmt::Display for InferSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "samples {} sparsity {}% mean_l1 {} energy {}",
            self.samples,
            format_g(self.sparsity_pct),
            format_g(self.mean_l1),
            format_g(self.energy)
        )
    }
}

/// Codes for every column of `y`. FISTA runs batch by batch (the variance
/// term is a batch statistic) starting from, and pulled toward, the encoder.
pub fn infer_codes(model: &Autoencoder<f32>, y: &Matrix<f32>, mode: InferMode, cfg: &RunConfig) -> Result<(Matrix<f32>, f64)> {
    if y.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    let inf = &cfg.train.inference;
    let bs = cfg.train.batch_size.max(1);
    let mut codes = Matrix::zeros((model.decoder.latent_dim(), y.ncols()));
    let mut energy = 0.0;
    for start in (0..y.ncols()).step_by(bs) {
        let end = (start + bs).min(y.ncols());
        let yb = y.slice(s![.., start..end]).to_owned();
        let pred = model.encoder.encode(&yb)?;
        let z = match mode {
            InferMode::Amortized => pred.clone(),
            InferMode::Fista => infer_with_target(Method::Fista, &yb, &model.decoder, Some(&pred), inf, Some(&pred))?.codes,
        };
        let mut e_cfg = inf.clone();
        if yb.ncols() < 2 {
            e_cfg.beta = 0.0;
        }
        energy += batch_energy_with_target(&z, &yb, &model.decoder, Some(&pred), &e_cfg)?;
        codes.slice_mut(s![.., start..end]).assign(&z);
    }
    Ok((codes, energy))
}

fn read_samples(input: &Path) -> Result<Matrix<f32>> {
    require_path(input, "input")?;
    let c = Container::load(input)?;
    c.require("samples")?.to_matrix()
}

pub fn cmd_infer(cfg: &RunConfig, checkpoint: &Path, input: &Path, mode: InferMode, output: &Path) -> Result<InferSummary> {
    require_path(checkpoint, "checkpoint")?;
    let model = Autoencoder::<f32>::load(checkpoint)?;
    let y = read_samples(input)?;
    if y.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    if y.nrows() != model.decoder.output_dim() {
        return Err(Error::Shape {
            op: "infer",
            lhs: vec![model.decoder.output_dim()],
            rhs: y.shape().to_vec(),
        });
    }
    cfg.write_resolved()?;
    let (codes, energy) = infer_codes(&model, &y, mode, cfg)?;
    let mut c = Container::new();
    c.push(Tensor::matrix("codes", codes.view()));
    c.save(output)?;
    Ok(InferSummary {
        samples: y.ncols(),
        sparsity_pct: sparsity(&codes),
        mean_l1: l1_norm(&codes) / y.ncols() as f64,
        energy,
    })
}

pub fn cmd_denoise(cfg: &RunConfig, checkpoint: &Path, sigmas: &[f64]) -> Result<PathBuf> {
    require_path(checkpoint, "checkpoint")?;
    let model = Autoencoder::<f32>::load(checkpoint)?;
    let splits = load_splits(cfg)?;
    cfg.write_resolved()?;
    let peak = peak_for(cfg, &splits);
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let mut rng = SeededRng::substream(cfg.train.seed, "noise");
        rows.push(denoise_eval(&model, &splits.test, sigma, peak, &mut rng)?);
    }
    let path = cfg.out_dir.join("denoise.csv");
    write_denoise_csv(&path, &rows)?;
    Ok(path)
}

/// Grid shape holding `l` tiles: `ceil(sqrt(l))` columns.
pub fn grid_for(l: usize) -> (usize, usize) {
    let cols = (l as f64).sqrt().ceil().max(1.0) as usize;
    (l.div_ceil(cols).max(1), cols)
}

pub fn cmd_atoms(cfg: &RunConfig, checkpoint: &Path, grid: Option<(usize, usize)>) -> Result<PathBuf> {
    require_path(checkpoint, "checkpoint")?;
    let model = Autoencoder::<f32>::load(checkpoint)?;
    cfg.write_resolved()?;
    let a = atoms(&model.decoder);
    let (rows, cols) = grid.unwrap_or_else(|| grid_for(a.ncols()));
    let path = cfg.out_dir.join("atoms.pgm");
    export_atom_grid(&a, rows, cols, &path)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub samples_per_class: usize,
    pub seeds: usize,
    pub epochs: usize,
    pub lr: f64,
    pub baselines: bool,
}

/// Frozen-encoder probe (and optionally the two raw-input baselines) over
/// several seeds; writes `probe.csv`.
pub fn cmd_probe(cfg: &RunConfig, checkpoint: Option<&Path>, opts: &ProbeOptions) -> Result<(PathBuf, Vec<(String, u64, ProbeResult)>)> {
    let model = match checkpoint {
        Some(p) => {
            require_path(p, "checkpoint")?;
            Some(Autoencoder::<f32>::load(p)?)
        }
        None => None,
    };
    if model.is_none() && !opts.baselines {
        return Err(Error::Config("probe needs a checkpoint or --baselines".into()));
    }
    let splits = load_splits(cfg)?;
    cfg.write_resolved()?;
    let mut results = Vec::new();
    for k in 0..opts.seeds.max(1) {
        let seed = cfg.train.seed + k as u64;
        let pc = ProbeConfig {
            samples_per_class: opts.samples_per_class,
            epochs: opts.epochs,
            lr: opts.lr,
            seed,
            ..Default::default()
        };
        let val = Some(&splits.val);
        if let Some(m) = &model {
            results.push(("encoder".to_string(), seed, probe(&m.encoder, &splits.train, val, &splits.test, &pc)?));
        }
        if opts.baselines {
            results.push(("linear_raw".to_string(), seed, probe_linear_on_raw(&splits.train, val, &splits.test, &pc)?));
            let (l, iters) = (cfg.train.latent_dim, cfg.train.lista_iters);
            results.push((
                "lista_raw".to_string(),
                seed,
                probe_lista_on_raw(&splits.train, val, &splits.test, &pc, l, iters)?,
            ));
        }
    }
    let mut out = String::from("model,samples_per_class,seed,top1,top3\n");
    for (name, seed, r) in &results {
        let _ = writeln!(
            out,
            "{name},{},{seed},{},{}",
            opts.samples_per_class,
            format_g(r.top1),
            format_g(r.top3)
        );
    }
    let path = cfg.out_dir.join("probe.csv");
    std::fs::write(&path, out).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok((path, results))
}

pub fn cmd_tradeoff(cfg: &RunConfig, models: &[(f64, PathBuf)]) -> Result<PathBuf> {
    if models.is_empty() {
        return Err(Error::Config("tradeoff needs at least one --model LAMBDA=PATH".into()));
    }
    let mut loaded = Vec::with_capacity(models.len());
    for (lambda, p) in models {
        require_path(p, "checkpoint")?;
        loaded.push((*lambda, Autoencoder::<f32>::load(p)?));
    }
    let splits = load_splits(cfg)?;
    cfg.write_resolved()?;
    let rows = tradeoff_curve(&loaded, &splits.test, peak_for(cfg, &splits))?;
    let path = cfg.out_dir.join("tradeoff.csv");
    write_tradeoff_csv(&path, &rows)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub d: usize,
    pub l: usize,
    pub k: usize,
    pub n: usize,
    pub noise: f64,
}

/// Generate a planted-dictionary dataset. Writes `synth.spck` (dataset) and
/// `planted.spck` (the dictionary `dec.W` and generating `codes`); the seed is
/// recorded in the resolved configuration.
pub fn cmd_synth(cfg: &RunConfig, opts: &SynthOptions) -> Result<(PathBuf, PathBuf)> {
    if opts.k > opts.l || opts.d == 0 || opts.l == 0 || opts.n == 0 {
        return Err(Error::Config(format!(
            "synth needs d, l, n >= 1 and k <= l (got d={} l={} k={} n={})",
            opts.d, opts.l, opts.k, opts.n
        )));
    }
    if !(opts.noise >= 0.0) {
        return Err(Error::Config(format!("noise must be >= 0, got {}", opts.noise)));
    }
    let mut rng = SeededRng::substream(cfg.train.seed, "synth");
    let s = synth_sparse(opts.d, opts.l, opts.k, opts.n, opts.noise, &mut rng);
    let mut resolved = cfg.clone();
    resolved.dataset = DataSource::Files;
    let data_path = cfg.out_dir.join("synth.spck");
    let planted_path = cfg.out_dir.join("planted.spck");
    resolved.train_file = Some(data_path.clone());
    resolved.write_resolved()?;
    s.data.save(&data_path)?;
    let mut c = Container::new();
    c.push(Tensor::matrix("dec.W", s.planted.w.view()));
    c.push(Tensor::matrix("codes", s.codes.view()));
    c.save(&planted_path)?;
    Ok((data_path, planted_path))
}

/// Planted dictionary written by [`cmd_synth`].
pub fn load_planted(path: &Path) -> Result<Decoder<f32>> {
    let c = Container::load(path)?;
    Ok(Decoder::Linear(sparsedict::models::LinearDecoder {
        w: c.require("dec.W")?.to_matrix()?,
    }))
}
