//! Random square patches from a directory of grayscale images.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::image::read_image;
use super::lcn::{lcn, LcnConfig};
use super::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPipelineConfig {
    pub patch_size: usize,
    pub lcn: LcnConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// fractions of the source images reserved for the validation and test pools
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for PatchPipelineConfig {
    fn default() -> Self {
        Self {
            patch_size: 28,
            lcn: LcnConfig::default(),
            n_train: 200_000,
            n_val: 10_000,
            n_test: 10_000,
            val_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PatchSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// source images skipped for being smaller than a patch
    pub skipped: usize,
    /// source image paths of each pool
    pub pools: [Vec<PathBuf>; 3],
}

/// `n` patches with uniformly random source image and top-left corner.
/// Images smaller than the patch are skipped; the second value counts them.
pub fn extract_patches(
    images: &[Array2<f32>],
    n: usize,
    patch: usize,
    rng: &mut SeededRng,
) -> Result<(Matrix<f32>, usize)> {
    let usable: Vec<&Array2<f32>> = images
        .iter()
        .filter(|im| im.nrows() >= patch && im.ncols() >= patch)
        .collect();
    let skipped = images.len() - usable.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} images smaller than {patch}x{patch}");
    }
    if n > 0 && usable.is_empty() {
        return Err(Error::Data(format!("no source image is at least {patch}x{patch}")));
    }
    let mut out = Matrix::zeros((patch * patch, n));
    for k in 0..n {
        let im = usable[rng.random_range(0..usable.len())];
        let r = rng.random_range(0..=im.nrows() - patch);
        let c = rng.random_range(0..=im.ncols() - patch);
        let view = im.slice(s![r..r + patch, c..c + patch]);
        out.column_mut(k).iter_mut().zip(view.iter()).for_each(|(o, &v)| *o = v);
    }
    Ok((out, skipped))
}

/// Image files (`.pgm`, `.png`) under `dir`, recursively, in sorted order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if matches!(
                path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("pgm" | "png")
            ) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Split the images under `dir` into disjoint train/val/test pools, apply
/// local contrast normalization to each image, cut random patches and
/// standardize all three sets with the training patches' statistics.
pub fn build_patch_datasets(dir: &Path, cfg: &PatchPipelineConfig) -> Result<PatchSplits> {
    let mut files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no .pgm or .png images under {}", dir.display())));
    }
    let mut rng = SeededRng::substream(cfg.seed, "patches");
    files.shuffle(&mut rng);
    let n = files.len();
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).max(usize::from(cfg.n_val > 0));
    let n_test = ((n as f64 * cfg.test_fraction).round() as usize).max(usize::from(cfg.n_test > 0));
    if n_val + n_test >= n {
        return Err(Error::Data(format!(
            "{n} images are too few for disjoint train/val/test pools"
        )));
    }
    let test_pool = files.split_off(n - n_test);
    let val_pool = files.split_off(n - n_test - n_val);
    let train_pool = files;

    let mut skipped = 0;
    let mut sets = Vec::with_capacity(3);
    for (pool, count) in [(&train_pool, cfg.n_train), (&val_pool, cfg.n_val), (&test_pool, cfg.n_test)] {
        let (m, s) = pool_patches(pool, count, cfg, &mut rng)?;
        skipped += s;
        sets.push(m);
    }
    let source = dir.display().to_string();
    let std = Standardizer::fit(&sets[0])?;
    let mut out = sets
        .into_iter()
        .map(|m| std.apply_dataset(&Dataset::new(m, None, source.clone()).expect("no labels")));
    let mut train = out.next().expect("train");
    let peak = train.range();
    train.peak = Some(peak);
    let mut val = out.next().expect("val");
    let mut test = out.next().expect("test");
    val.peak = Some(peak);
    test.peak = Some(peak);
    Ok(PatchSplits {
        train,
        val,
        test,
        skipped,
        pools: [train_pool, val_pool, test_pool],
    })
}

/// Patches from one pool. Image sizes are read first so that draws only
/// land on usable images; each image is then decoded and normalized once.
fn pool_patches(
    pool: &[PathBuf],
    n: usize,
    cfg: &PatchPipelineConfig,
    rng: &mut SeededRng,
) -> Result<(Matrix<f32>, usize)> {
    let p = cfg.patch_size;
    let min_side = p.max(cfg.lcn.size);
    let mut usable = Vec::new();
    for (i, path) in pool.iter().enumerate() {
        let (h, w) = read_image(path)?.dim();
        if h >= min_side && w >= min_side {
            usable.push((i, h, w));
        }
    }
    let skipped = pool.len() - usable.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} images smaller than {min_side}x{min_side}");
    }
    if n > 0 && usable.is_empty() {
        return Err(Error::Data(format!("no source image is at least {min_side}x{min_side}")));
    }
    // (usable index, row, col) per patch
    let draws: Vec<(usize, usize, usize)> = (0..n)
        .map(|_| {
            let u = rng.random_range(0..usable.len());
            let (_, h, w) = usable[u];
            (u, rng.random_range(0..=h - p), rng.random_range(0..=w - p))
        })
        .collect();
    let mut owners = vec![Vec::new(); usable.len()];
    for (k, &(u, _, _)) in draws.iter().enumerate() {
        owners[u].push(k);
    }
    // images are independent; results are written back in draw order
    let cut: Vec<Vec<(usize, Vec<f32>)>> = usable
        .par_iter()
        .zip(owners.par_iter())
        .filter(|(_, mine)| !mine.is_empty())
        .map(|(&(i, _, _), mine)| -> Result<Vec<(usize, Vec<f32>)>> {
            let img = read_image(&pool[i])?.mapv(|v| v as f64);
            let norm = lcn(&img, &cfg.lcn)?;
            Ok(mine
                .iter()
                .map(|&k| {
                    let (_, r, c) = draws[k];
                    (k, norm.slice(s![r..r + p, c..c + p]).iter().map(|&v| v as f32).collect())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Matrix::zeros((p * p, n));
    for (k, col) in cut.into_iter().flatten() {
        out.column_mut(k).iter_mut().zip(col).for_each(|(o, v)| *o = v);
    }
    Ok((out, skipped))
}
