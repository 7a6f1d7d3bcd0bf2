//! Datasets and preprocessing: MNIST IDX files, grayscale image patches with
//! local contrast normalization, Gaussian corruption and planted sparse data.
//!
//! Samples are stored one per column of a `d x N` matrix.

mod idx;
mod image;
mod lcn;
mod patches;
mod synth;

use std::path::Path;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

pub use idx::{load_idx, read_idx, write_idx, IdxArray, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use image::{read_image, read_pgm, read_png, write_pgm, write_png};
pub use lcn::{gaussian_kernel, lcn, lcn_subtractive, LcnConfig};
pub use patches::{build_patch_datasets, extract_patches, list_images, PatchPipelineConfig, PatchSplits};
pub use synth::{synth_sparse, Synthetic};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real, SeededRng};
use crate::spck::{Container, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `d x N`
    pub samples: Matrix<f32>,
    pub labels: Option<Vec<u8>>,
    pub source: String,
    /// Global statistics the samples were standardized with; `(0, 1)` for raw data.
    pub mean: f64,
    pub std: f64,
    /// PSNR peak recorded for this data family (dynamic range of the
    /// standardized training split).
    pub peak: Option<f64>,
}

impl Dataset {
    pub fn new(samples: Matrix<f32>, labels: Option<Vec<u8>>, source: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != samples.ncols() {
                return Err(Error::Data(format!(
                    "{} labels for {} samples",
                    l.len(),
                    samples.ncols()
                )));
            }
        }
        Ok(Self {
            samples,
            labels,
            source: source.into(),
            mean: 0.0,
            std: 1.0,
            peak: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    /// Columns `idx` as a new dataset carrying the same metadata.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            samples: self.samples.select(Axis(1), idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            source: self.source.clone(),
            mean: self.mean,
            std: self.std,
            peak: self.peak,
        }
    }

    /// First `n` samples (all if fewer).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Map samples back to the raw value range.
    pub fn to_raw(&self) -> Matrix<f32> {
        Standardizer {
            mean: self.mean,
            std: self.std,
        }
        .invert(&self.samples)
    }

    /// Dynamic range `max - min` of the samples.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push(Tensor::matrix("samples", self.samples.view()));
        if let Some(labels) = &self.labels {
            let l: ndarray::Array1<f32> = labels.iter().map(|&v| v as f32).collect();
            c.push(Tensor::vector("labels", &l));
        }
        c.push(Tensor::scalar("mean", self.mean as f32));
        c.push(Tensor::scalar("std", self.std as f32));
        if let Some(p) = self.peak {
            c.push(Tensor::scalar("peak", p as f32));
        }
        c
    }

    pub fn from_container(c: &Container, source: &str) -> Result<Self> {
        let samples = c.require("samples")?.to_matrix::<f32>()?;
        let labels = match c.get("labels") {
            Some(t) => Some(
                t.to_vector::<f32>()?
                    .iter()
                    .map(|&v| {
                        if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                            Ok(v as u8)
                        } else {
                            Err(Error::Data(format!("invalid label value {v}")))
                        }
                    })
                    .collect::<Result<Vec<u8>>>()?,
            ),
            None => None,
        };
        let mut ds = Dataset::new(samples, labels, source)?;
        ds.mean = c.require("mean")?.to_scalar()? as f64;
        ds.std = c.require("std")?.to_scalar()? as f64;
        ds.peak = c.get("peak").map(|t| t.to_scalar()).transpose()?.map(|p| p as f64);
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?, &path.display().to_string())
    }
}

/// Global mean/std standardization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// Statistics over every entry of `raw`.
    pub fn fit(raw: &Matrix<f32>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = raw.len() as f64;
        let mean = raw.iter().fold(0.0, |a, &v| a + v as f64) / n;
        let ss = raw.iter().fold(0.0, |a, &v| {
            let d = v as f64 - mean;
            a + d * d
        });
        let std = (ss / n).sqrt();
        if std.is_nan() || std <= 0.0 {
            return Err(Error::Data("cannot standardize: global standard deviation is 0".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, raw: &Matrix<f32>) -> Matrix<f32> {
        raw.mapv(|v| ((v as f64 - self.mean) / self.std) as f32)
    }

    pub fn invert(&self, x: &Matrix<f32>) -> Matrix<f32> {
        x.mapv(|v| (v as f64 * self.std + self.mean) as f32)
    }

    pub fn apply_dataset(&self, raw: &Dataset) -> Dataset {
        Dataset {
            samples: self.apply(&raw.samples),
            labels: raw.labels.clone(),
            source: raw.source.clone(),
            mean: self.mean,
            std: self.std,
            peak: raw.peak,
        }
    }
}

/// Standardize `raw` with its own global statistics and record its dynamic
/// range as the PSNR peak.
pub fn standardize(raw: &Dataset) -> Result<Dataset> {
    let s = Standardizer::fit(&raw.samples)?;
    let mut out = s.apply_dataset(raw);
    out.peak = Some(out.range());
    Ok(out)
}

/// MNIST split into train / validation (from the official training file) and
/// test (the official t10k file), all standardized with training statistics.
#[derive(Debug, Clone)]
pub struct MnistSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub const MNIST_VAL_SIZE: usize = 5000;

/// Load the four standard IDX files from `dir`. The 60000 training images are
/// split 55000/5000 with a permutation drawn from the `split` sub-stream of
/// `seed`.
pub fn load_mnist(dir: &Path, seed: u64) -> Result<MnistSplits> {
    let file = |names: &[&str]| -> Result<std::path::PathBuf> {
        names
            .iter()
            .map(|n| dir.join(n))
            .find(|p| p.exists())
            .ok_or_else(|| Error::Data(format!("missing MNIST file {} in {}", names[0], dir.display())))
    };
    let train_raw = load_idx(
        &file(&["train-images-idx3-ubyte", "train-images.idx3-ubyte"])?,
        Some(&file(&["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"])?),
    )?;
    let test_raw = load_idx(
        &file(&["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"])?,
        Some(&file(&["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"])?),
    )?;
    split_and_standardize(&train_raw, &test_raw, MNIST_VAL_SIZE, seed)
}

/// Seeded train/validation split of `train_raw`, then standardization of all
/// three parts with statistics of the training portion.
pub fn split_and_standardize(train_raw: &Dataset, test_raw: &Dataset, n_val: usize, seed: u64) -> Result<MnistSplits> {
    if n_val >= train_raw.len() {
        return Err(Error::Data(format!(
            "validation size {n_val} leaves no training samples out of {}",
            train_raw.len()
        )));
    }
    let mut idx: Vec<usize> = (0..train_raw.len()).collect();
    idx.shuffle(&mut SeededRng::substream(seed, "split"));
    let (val_idx, train_idx) = idx.split_at(n_val);
    let train_part = train_raw.subset(train_idx);
    let s = Standardizer::fit(&train_part.samples)?;
    let mut train = s.apply_dataset(&train_part);
    let peak = train.range();
    train.peak = Some(peak);
    let mut val = s.apply_dataset(&train_raw.subset(val_idx));
    let mut test = s.apply_dataset(test_raw);
    val.peak = Some(peak);
    test.peak = Some(peak);
    Ok(MnistSplits { train, val, test })
}

/// `y + eps`, `eps ~ N(0, sigma^2)` i.i.d.
pub fn add_gaussian_noise<T: Real>(batch: &Matrix<T>, sigma: f64, rng: &mut SeededRng) -> Matrix<T> {
    if sigma == 0.0 {
        return batch.clone();
    }
    batch.mapv(|v| {
        let e: f64 = StandardNormal.sample(rng);
        T::from_f64(v.as_f64() + sigma * e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{mean_var, randn};
    use ndarray::array;

    #[test]
    fn constant_dataset_cannot_be_standardized() {
        let ds = Dataset::new(Matrix::from_elem((4, 3), 7.0), None, "c").unwrap();
        assert!(standardize(&ds).is_err());
    }

    #[test]
    fn standardized_moments_and_inverse() {
        let mut rng = SeededRng::new(3);
        let raw: Matrix<f32> = randn(&mut rng, 50, 200, 40.0, 12.0);
        let ds = standardize(&Dataset::new(raw.clone(), None, "r").unwrap()).unwrap();
        let (m, v) = mean_var(&ds.samples);
        assert!(m.abs() < 1e-5, "{m}");
        // population std is 1; sample (n - 1) std differs by far less than 1e-4 here
        assert!((v.sqrt() - 1.0).abs() < 1e-4, "{}", v.sqrt());

        let held: Matrix<f32> = randn(&mut rng, 50, 10, 0.4, 0.12);
        let s = Standardizer { mean: 0.4, std: 0.12 };
        let back = s.invert(&s.apply(&held));
        for (a, b) in back.iter().zip(held.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let y = array![[1.0f32, 2.0], [3.0, 4.0]];
        assert_eq!(add_gaussian_noise(&y, 0.0, &mut SeededRng::new(1)), y);
    }

    #[test]
    fn noise_has_requested_std() {
        let y = Matrix::<f32>::zeros((1000, 1000));
        let noisy = add_gaussian_noise(&y, 0.7, &mut SeededRng::new(5));
        let (_, v) = mean_var(&noisy);
        let sd = v.sqrt();
        assert!((0.995 * 0.7..=1.005 * 0.7).contains(&sd), "{sd}");
    }

    #[test]
    fn cache_roundtrip() {
        let mut ds = Dataset::new(array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]], Some(vec![0, 9, 3]), "x").unwrap();
        ds.mean = 0.5;
        ds.std = 2.0;
        ds.peak = Some(3.5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.spck");
        ds.save(&p).unwrap();
        let back = Dataset::load(&p).unwrap();
        assert_eq!(back.samples, ds.samples);
        assert_eq!(back.labels, ds.labels);
        assert_eq!((back.mean, back.std, back.peak), (0.5, 2.0, Some(3.5)));
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let raw = Dataset::new(
            Matrix::from_shape_fn((3, 20), |(r, c)| (r * 20 + c) as f32),
            Some((0..20).map(|i| (i % 10) as u8).collect()),
            "t",
        )
        .unwrap();
        let a = split_and_standardize(&raw, &raw.head(4), 5, 1).unwrap();
        let b = split_and_standardize(&raw, &raw.head(4), 5, 1).unwrap();
        assert_eq!(a.train.samples, b.train.samples);
        assert_eq!(a.train.len(), 15);
        assert_eq!(a.val.len(), 5);
        let mut firsts: Vec<f32> = a.train.to_raw().row(0).iter().chain(a.val.to_raw().row(0).iter()).copied().collect();
        firsts.sort_by(f32::total_cmp);
        firsts.iter_mut().for_each(|v| *v = v.round());
        assert_eq!(firsts, (0..20).map(|v| v as f32).collect::<Vec<_>>());
        assert_eq!(a.test.peak, a.train.peak);
    }
}
