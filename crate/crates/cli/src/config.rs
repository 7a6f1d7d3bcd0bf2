//! Run configuration: `key = value` lines, `#` comments, later keys win.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sparsedict::training::TrainConfig;
use sparsedict::{Error, Result};

use crate::presets;

/// File name of the resolved configuration written next to every run's outputs.
pub const RESOLVED_CONFIG: &str = "run.cfg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// standardized MNIST from the IDX files in `mnist_dir`
    Mnist,
    /// LCN patches cut from the images under `patches_dir`
    Patches,
    /// dataset containers given by `train_file`, `val_file`, `test_file`
    Files,
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataSource::Mnist => "mnist",
            DataSource::Patches => "patches",
            DataSource::Files => "files",
        })
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DataSource::Mnist),
            "patches" => Ok(DataSource::Patches),
            "files" => Ok(DataSource::Files),
            _ => Err(Error::Config(format!("unknown dataset {s:?} (expected mnist, patches or files)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dataset: DataSource,
    pub mnist_dir: PathBuf,
    pub patches_dir: PathBuf,
    pub patch_size: usize,
    pub patch_train: usize,
    pub patch_val: usize,
    pub patch_test: usize,
    pub train_file: Option<PathBuf>,
    pub val_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    /// fraction of `train_file` held out for validation when no `val_file` is given
    pub val_fraction: f64,
    /// use only the first this many training samples (0 = all)
    pub train_subset: usize,
    pub out_dir: PathBuf,
    /// worker threads (0 = one per core)
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            dataset: DataSource::Mnist,
            mnist_dir: PathBuf::from("data/mnist"),
            patches_dir: PathBuf::from("data/patches"),
            patch_size: 28,
            patch_train: 200_000,
            patch_val: 20_000,
            patch_test: 20_000,
            train_file: None,
            val_file: None,
            test_file: None,
            val_fraction: 0.1,
            train_subset: 0,
            out_dir: PathBuf::from("runs/default"),
            threads: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key} (expected true or false)"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Set one key. `preset` replaces every training field at once.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "preset" {
            return presets::apply(value, self).ok_or_else(|| Error::Config(format!("unknown preset {value:?}")));
        }
        let t = &mut self.train;
        let inf = &mut t.inference;
        match key {
            "variant" => t.variant = value.parse()?,
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lambda" => inf.lambda = parse(key, value)?,
            "beta" => inf.beta = parse(key, value)?,
            "threshold" => inf.threshold = parse(key, value)?,
            "gamma" => inf.gamma = parse(key, value)?,
            "eta_z" => inf.eta = parse(key, value)?,
            "max_iters" => inf.max_iters = parse(key, value)?,
            "tol" => inf.tol = parse(key, value)?,
            "nonneg" => inf.nonneg = parse_bool(key, value)?,
            "step_rule" => inf.step_rule = value.parse()?,
            "energy_scale" => inf.scale = value.parse()?,
            "lr_dec" => t.lr_dec = parse(key, value)?,
            "lr_enc" => t.lr_enc = parse(key, value)?,
            "wd_b_dec" => t.wd_b_dec = parse(key, value)?,
            "wd_b_enc" => t.wd_b_enc = parse(key, value)?,
            "adam_beta1" => t.adam_beta1 = parse(key, value)?,
            "adam_beta2" => t.adam_beta2 = parse(key, value)?,
            "adam_eps" => t.adam_eps = parse(key, value)?,
            "lista_iters" => t.lista_iters = parse(key, value)?,
            "latent_dim" => t.latent_dim = parse(key, value)?,
            "hidden_dim" => t.hidden_dim = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "lr_dec_anneal" => {
                let n: usize = parse(key, value)?;
                t.lr_dec_anneal = (n > 0).then_some(n);
            }
            "psnr_peak" => {
                t.psnr_peak = if value == "auto" { None } else { Some(parse(key, value)?) };
            }
            "dataset" => self.dataset = value.parse()?,
            "mnist_dir" => self.mnist_dir = PathBuf::from(value),
            "patches_dir" => self.patches_dir = PathBuf::from(value),
            "patch_size" => self.patch_size = parse(key, value)?,
            "patch_train" => self.patch_train = parse(key, value)?,
            "patch_val" => self.patch_val = parse(key, value)?,
            "patch_test" => self.patch_test = parse(key, value)?,
            "train_file" => self.train_file = opt_path(value),
            "val_file" => self.val_file = opt_path(value),
            "test_file" => self.test_file = opt_path(value),
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "train_subset" => self.train_subset = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "threads" => self.threads = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines. A `preset` line is applied before the
    /// other keys wherever it appears, so explicit keys always override it.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`, got {raw:?}", no + 1)))?;
            pairs.push((no + 1, k.trim().to_string(), v.trim().to_string()));
        }
        pairs.sort_by_key(|(_, k, _)| k != "preset");
        for (no, k, v) in pairs {
            self.set(&k, &v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{origin}:{no}: {msg}")),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Every key with its value; parsing this text reproduces `self`.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let inf = &t.inference;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("variant", t.variant.to_string());
        kv("epochs", t.epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("lambda", inf.lambda.to_string());
        kv("beta", inf.beta.to_string());
        kv("threshold", inf.threshold.to_string());
        kv("gamma", inf.gamma.to_string());
        kv("eta_z", inf.eta.to_string());
        kv("max_iters", inf.max_iters.to_string());
        kv("tol", inf.tol.to_string());
        kv("nonneg", inf.nonneg.to_string());
        kv("step_rule", inf.step_rule.to_string());
        kv("energy_scale", inf.scale.to_string());
        kv("lr_dec", t.lr_dec.to_string());
        kv("lr_enc", t.lr_enc.to_string());
        kv("wd_b_dec", t.wd_b_dec.to_string());
        kv("wd_b_enc", t.wd_b_enc.to_string());
        kv("adam_beta1", t.adam_beta1.to_string());
        kv("adam_beta2", t.adam_beta2.to_string());
        kv("adam_eps", t.adam_eps.to_string());
        kv("lista_iters", t.lista_iters.to_string());
        kv("latent_dim", t.latent_dim.to_string());
        kv("hidden_dim", t.hidden_dim.to_string());
        kv("seed", t.seed.to_string());
        kv("lr_dec_anneal", t.lr_dec_anneal.unwrap_or(0).to_string());
        kv("psnr_peak", t.psnr_peak.map_or("auto".to_string(), |p| p.to_string()));
        kv("dataset", self.dataset.to_string());
        kv("mnist_dir", self.mnist_dir.display().to_string());
        kv("patches_dir", self.patches_dir.display().to_string());
        kv("patch_size", self.patch_size.to_string());
        kv("patch_train", self.patch_train.to_string());
        kv("patch_val", self.patch_val.to_string());
        kv("patch_test", self.patch_test.to_string());
        kv("train_file", show_path(&self.train_file));
        kv("val_file", show_path(&self.val_file));
        kv("test_file", show_path(&self.test_file));
        kv("val_fraction", self.val_fraction.to_string());
        kv("train_subset", self.train_subset.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("threads", self.threads.to_string());
        s
    }

    /// Write the resolved configuration into the output directory.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::Io {
            path: self.out_dir.clone(),
            source: e,
        })?;
        let path = self.out_dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }
}
