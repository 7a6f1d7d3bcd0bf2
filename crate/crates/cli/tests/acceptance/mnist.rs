//! Scaled-down MNIST runs with the shipped presets.

use std::path::PathBuf;

use sparsedict::data::{load_mnist, MnistSplits};
use sparsedict::eval::{auto_peak, denoise_eval, mean, probe, probe_linear_on_raw, DenoiseRecord, ProbeConfig};
use sparsedict::models::Autoencoder;
use sparsedict::numerics::SeededRng;
use sparsedict::training::train;
use sparsedict_cli::config::RunConfig;
use sparsedict_cli::presets;

use crate::{Context, Verdict};

const TRAIN_SAMPLES: usize = 10_000;
const EPOCHS: usize = 20;
const PROBE_SEEDS: u64 = 5;
/// (preset, variant label, lambda)
const RUNS: [(&str, &str, f64); 4] = [
    ("mnist_sdl_lambda1e-3", "SDL", 1e-3),
    ("mnist_sdl_lambda5e-3", "SDL", 5e-3),
    ("mnist_vdl_lambda5e-3", "VDL", 5e-3),
    ("mnist_vdl_lambda2e-2", "VDL", 2e-2),
];

pub struct Trained {
    pub label: &'static str,
    pub lambda: f64,
    pub model: Autoencoder<f32>,
    /// clean and sigma = 1 evaluation on the test set
    pub eval: DenoiseRecord,
}

pub struct Models {
    pub splits: MnistSplits,
    pub runs: Vec<Trained>,
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn train_all() -> Result<Models, String> {
    let dir = mnist_dir();
    let splits = load_mnist(&dir, 0).map_err(|e| format!("MNIST unavailable at {}: {e}", dir.display()))?;
    let subset = splits.train.head(TRAIN_SAMPLES);
    let peak = auto_peak(&splits.train);
    let mut runs = Vec::new();
    for (preset, label, lambda) in RUNS {
        let mut cfg = RunConfig::default();
        presets::apply(preset, &mut cfg).ok_or_else(|| format!("missing preset {preset}"))?;
        cfg.train.epochs = EPOCHS;
        let out = train(&subset, &splits.val, &cfg.train, None).map_err(|e| format!("{preset}: {e}"))?;
        let eval = denoise_eval(&out.best, &splits.test, 1.0, peak, &mut SeededRng::substream(0, "noise"))
            .map_err(|e| e.to_string())?;
        runs.push(Trained {
            label,
            lambda,
            model: out.best,
            eval,
        });
    }
    Ok(Models { splits, runs })
}

fn models(ctx: &mut Context) -> Result<&Models, String> {
    ctx.mnist.get_or_insert_with(train_all).as_ref().map_err(Clone::clone)
}

pub fn c5(ctx: &mut Context) -> Verdict {
    let m = match models(ctx) {
        Ok(m) => m,
        Err(e) => return Verdict::new(false, e),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for pair in m.runs.chunks(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        let trend = hi.eval.sparsity_clean > lo.eval.sparsity_clean && hi.eval.psnr_clean_recon < lo.eval.psnr_clean_recon;
        pass &= trend;
        for r in pair {
            parts.push(format!(
                "{} lambda={}: {:.1}% / {:.2} dB",
                r.label, r.lambda, r.eval.sparsity_clean, r.eval.psnr_clean_recon
            ));
        }
    }
    let sdl = m.runs[1].eval.sparsity_clean;
    let vdl = m.runs[3].eval.sparsity_clean;
    pass &= (75.0..=95.0).contains(&sdl) && (80.0..=97.0).contains(&vdl);
    Verdict::new(pass, parts.join(", "))
}

pub fn c6(ctx: &mut Context) -> Verdict {
    let m = match models(ctx) {
        Ok(m) => m,
        Err(e) => return Verdict::new(false, e),
    };
    let e = &m.runs[1].eval;
    let calibrated = (e.psnr_noisy_input - 10.2).abs() <= 0.4;
    let gap = e.psnr_noisy_recon - e.psnr_noisy_input;
    Verdict::new(
        calibrated && gap >= 3.0,
        format!(
            "PSNR(y_sigma) {:.2} dB, SDL lambda=0.005 PSNR(denoised) {:.2} dB, gap {gap:.2} dB",
            e.psnr_noisy_input, e.psnr_noisy_recon
        ),
    )
}

pub fn c7(ctx: &mut Context) -> Verdict {
    let m = match models(ctx) {
        Ok(m) => m,
        Err(e) => return Verdict::new(false, e),
    };
    let s = &m.splits;
    let cfg = |seed| ProbeConfig {
        samples_per_class: 10,
        seed,
        ..Default::default()
    };
    let raw: Vec<f64> = (0..PROBE_SEEDS)
        .map(|k| probe_linear_on_raw(&s.train, Some(&s.val), &s.test, &cfg(k)).expect("probe").top1)
        .collect();
    let raw = mean(&raw);
    // (label, lambda, mean validation top-1, mean test top-1)
    let scored: Vec<(&str, f64, f64, f64)> = m
        .runs
        .iter()
        .map(|r| {
            let res: Vec<_> = (0..PROBE_SEEDS)
                .map(|k| probe(&r.model.encoder, &s.train, Some(&s.val), &s.test, &cfg(k)).expect("probe"))
                .collect();
            let val: Vec<f64> = res.iter().map(|p| p.val_top1.expect("validation subset")).collect();
            let test: Vec<f64> = res.iter().map(|p| p.top1).collect();
            (r.label, r.lambda, mean(&val), mean(&test))
        })
        .collect();
    let mut pass = true;
    let mut parts = vec![format!("linear on raw {:.1}%", 100.0 * raw)];
    for label in ["SDL", "VDL"] {
        let best = scored
            .iter()
            .filter(|r| r.0 == label)
            .max_by(|a, b| a.2.total_cmp(&b.2))
            .expect("runs of each variant");
        pass &= best.3 - raw >= 0.02;
        let all: Vec<String> = scored
            .iter()
            .filter(|r| r.0 == label)
            .map(|r| format!("lambda={} val {:.1}% test {:.1}%", r.1, 100.0 * r.2, 100.0 * r.3))
            .collect();
        parts.push(format!(
            "{label} selected lambda={} {:+.1} pts ({})",
            best.1,
            100.0 * (best.3 - raw),
            all.join("; ")
        ));
    }
    Verdict::new(pass, format!("mean top-1 over {PROBE_SEEDS} seeds: {}", parts.join(", ")))
}
