//! Planted-dictionary runs: collapse ablation, atom recovery, determinism.

use std::path::Path;

use sparsedict::data::{synth_sparse, Synthetic};
use sparsedict::eval::{atoms, match_atoms};
use sparsedict::inference::{EnergyScale, InferenceConfig, StepRule};
use sparsedict::numerics::SeededRng;
use sparsedict::training::{train, TrainConfig, TrainOutcome, Variant, METRICS_FILE};

use crate::{Context, Verdict};

const SEED: u64 = 0;
const VAL: usize = 500;

fn planted(seed: u64) -> Synthetic {
    synth_sparse(20, 30, 3, 5000, 0.01, &mut SeededRng::substream(seed, "synth"))
}

fn run(data: &Synthetic, cfg: &TrainConfig, out: Option<&Path>) -> TrainOutcome {
    train(&data.data, &data.data.head(VAL), cfg, out).expect("training")
}

/// Unconstrained linear decoder, ten epochs; `beta` switches the variance
/// hinge on or off.
fn collapse_config(beta: f64) -> TrainConfig {
    TrainConfig {
        variant: Variant::Vdl,
        epochs: 10,
        batch_size: 5,
        inference: InferenceConfig {
            lambda: 0.3,
            beta,
            threshold: 0.5,
            step_rule: StepRule::Lipschitz,
            ..Default::default()
        },
        lr_dec: 0.03,
        lr_enc: 1e-3,
        latent_dim: 30,
        seed: SEED,
        ..Default::default()
    }
}

pub fn c3(_: &mut Context) -> Verdict {
    let data = planted(SEED);
    let free = run(&data, &collapse_config(0.0), None).report;
    let held = run(&data, &collapse_config(10.0), None).report;
    let ratio = |r: &sparsedict::training::TrainReport| r.records[9].median_l1 / r.records[0].median_l1;
    let (free_ratio, held_ratio) = (ratio(&free), ratio(&held));
    let growth = free.records[9].mean_atom_norm / free.initial_atom_norm;
    let frac = held.records[9].frac_components_above_half_t;
    Verdict::new(
        free_ratio < 0.2 && growth > 2.0 && frac >= 0.9 && held_ratio > 0.5,
        format!(
            "beta=0: median l1 at epoch 10 is {:.1}% of epoch 1, atom norm x{growth:.1}; beta=10: {:.0}% of components with std >= T/2, median l1 {:.1}% of epoch 1",
            100.0 * free_ratio,
            100.0 * frac,
            100.0 * held_ratio
        ),
    )
}

fn recovery_config(variant: Variant, seed: u64) -> TrainConfig {
    TrainConfig {
        variant,
        epochs: 50,
        batch_size: 25,
        inference: InferenceConfig {
            lambda: 0.1,
            beta: if variant == Variant::Vdl { 10.0 } else { 0.0 },
            threshold: 0.5,
            gamma: 1.0,
            eta: 0.5,
            step_rule: StepRule::Constant,
            scale: EnergyScale::Mean,
            ..Default::default()
        },
        lr_dec: 0.005,
        lr_enc: 0.003,
        latent_dim: 30,
        seed,
        ..Default::default()
    }
}

/// VDL run with its metrics file; returns the recovered fraction too.
fn vdl_run(seed: u64) -> (f64, Vec<u8>) {
    let data = planted(seed);
    let dir = tempfile::tempdir().expect("tempdir");
    let out = run(&data, &recovery_config(Variant::Vdl, seed), Some(dir.path()));
    let m = match_atoms(&atoms(&out.last.decoder), &data.planted.w).expect("match");
    (m.fraction, std::fs::read(dir.path().join(METRICS_FILE)).expect("metrics"))
}

pub struct RecoveryRuns {
    pub vdl_metrics: Vec<u8>,
}

pub fn c4(ctx: &mut Context) -> Verdict {
    let data = planted(SEED);
    let sdl = run(&data, &recovery_config(Variant::Sdl, SEED), None);
    let sdl_frac = match_atoms(&atoms(&sdl.last.decoder), &data.planted.w).expect("match").fraction;
    let (vdl_frac, vdl_metrics) = vdl_run(SEED);
    ctx.synthetic = Some(RecoveryRuns { vdl_metrics });
    Verdict::new(
        sdl_frac >= 0.8 && vdl_frac >= 0.8,
        format!(
            "recovered at |cos| >= 0.9: SDL {:.1}%, VDL {:.1}%",
            100.0 * sdl_frac,
            100.0 * vdl_frac
        ),
    )
}

pub fn c8(ctx: &mut Context) -> Verdict {
    let first = match ctx.synthetic.take() {
        Some(r) => r.vdl_metrics,
        None => vdl_run(SEED).1,
    };
    let again = vdl_run(SEED).1;
    let other = vdl_run(SEED + 1).1;
    let same = first == again;
    let differs = first != other;
    Verdict::new(
        same && differs,
        format!(
            "same seed: metrics CSV {}; seed {}: metrics CSV {}",
            if same { "bit-identical" } else { "differs" },
            SEED + 1,
            if differs { "differs" } else { "identical" }
        ),
    )
}
