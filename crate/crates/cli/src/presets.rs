//! Shipped hyperparameter presets, one per published training configuration.

use sparsedict::inference::{EnergyScale, StepRule};
use sparsedict::training::Variant;

use crate::config::{DataSource, RunConfig};

#[derive(Debug, Clone, Copy)]
struct Row {
    dataset: &'static str,
    variant: Variant,
    epochs: usize,
    lambda: &'static str,
    gamma: f64,
    beta: f64,
    threshold: Option<f64>,
    lr_dec: f64,
    lr_enc: f64,
    wd_b_dec: Option<f64>,
    wd_b_enc: f64,
    eta_z: f64,
    anneal: bool,
}

const fn row(
    dataset: &'static str,
    variant: Variant,
    epochs: usize,
    lambda: &'static str,
    gamma: f64,
    beta: f64,
    threshold: Option<f64>,
    lr: (f64, f64),
    wd: (Option<f64>, f64),
    eta_z: f64,
) -> Row {
    Row {
        dataset,
        variant,
        epochs,
        lambda,
        gamma,
        beta,
        threshold,
        lr_dec: lr.0,
        lr_enc: lr.1,
        wd_b_dec: wd.0,
        wd_b_enc: wd.1,
        eta_z,
        anneal: false,
    }
}

const fn annealed(mut r: Row) -> Row {
    r.anneal = true;
    r
}

use Variant::{Sdl, SdlNl, Vdl, VdlNl};

const M: &str = "mnist";
const I: &str = "imagenet";

#[rustfmt::skip]
const ROWS: &[Row] = &[
    row(M, Sdl, 200, "0", 1.0, 0.0, None, (1e-3, 3e-4), (None, 0.0), 1.0),
    row(M, Sdl, 200, "1e-4", 1.0, 0.0, None, (1e-3, 3e-4), (None, 0.0), 1.0),
    row(M, Sdl, 200, "5e-4", 1.0, 0.0, None, (1e-3, 3e-4), (None, 0.0), 1.0),
    row(M, Sdl, 200, "1e-3", 1.0, 0.0, None, (1e-3, 3e-4), (None, 0.0), 1.0),
    row(M, Sdl, 200, "3e-3", 1.0, 0.0, None, (1e-3, 3e-4), (None, 0.0), 1.0),
    row(M, Sdl, 200, "5e-3", 1.0, 0.0, None, (1e-3, 3e-4), (None, 0.0), 1.0),
    row(M, Vdl, 200, "0", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 0.0), 0.5),
    row(M, Vdl, 200, "1e-3", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 0.0), 0.5),
    row(M, Vdl, 200, "3e-3", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 0.0), 0.5),
    row(M, Vdl, 200, "5e-3", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 0.0), 0.5),
    row(M, Vdl, 200, "1e-2", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 0.0), 0.5),
    row(M, Vdl, 200, "2e-2", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 0.0), 0.5),
    row(M, SdlNl, 200, "0", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-3), 0.0), 1.0),
    row(M, SdlNl, 200, "1e-3", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-3), 0.0), 1.0),
    row(M, SdlNl, 200, "3e-3", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-3), 0.0), 1.0),
    row(M, SdlNl, 200, "5e-3", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-3), 0.0), 1.0),
    row(M, SdlNl, 200, "1e-2", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-3), 0.0), 1.0),
    row(M, SdlNl, 200, "2e-2", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-3), 0.0), 1.0),
    row(M, VdlNl, 200, "0", 100.0, 10.0, Some(0.5), (3e-4, 1e-4), (Some(1e-3), 0.0), 0.5),
    row(M, VdlNl, 200, "1e-3", 100.0, 10.0, Some(0.5), (3e-4, 1e-4), (Some(1e-3), 0.0), 0.5),
    row(M, VdlNl, 200, "3e-3", 100.0, 10.0, Some(0.5), (3e-4, 1e-4), (Some(1e-3), 0.0), 0.5),
    row(M, VdlNl, 200, "5e-3", 100.0, 10.0, Some(0.5), (3e-4, 1e-4), (Some(1e-3), 0.0), 0.5),
    row(M, VdlNl, 200, "1e-2", 100.0, 10.0, Some(0.5), (3e-4, 1e-4), (Some(1e-3), 0.0), 0.5),
    row(M, VdlNl, 200, "2e-2", 100.0, 10.0, Some(0.5), (3e-4, 1e-4), (Some(1e-3), 0.0), 0.5),
    row(I, Sdl, 100, "0", 1.0, 0.0, None, (1e-3, 1e-4), (None, 1e-2), 0.5),
    row(I, Sdl, 100, "5e-4", 1.0, 0.0, None, (1e-3, 1e-4), (None, 1e-2), 0.5),
    row(I, Sdl, 100, "1e-3", 1.0, 0.0, None, (1e-3, 1e-4), (None, 1e-2), 0.5),
    row(I, Sdl, 100, "2e-3", 1.0, 0.0, None, (1e-3, 1e-4), (None, 1e-2), 0.5),
    row(I, Sdl, 100, "3e-3", 1.0, 0.0, None, (1e-3, 1e-4), (None, 1e-2), 0.5),
    row(I, Sdl, 100, "5e-3", 1.0, 0.0, None, (1e-3, 1e-4), (None, 1e-2), 0.5),
    row(I, Vdl, 100, "0", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 1e-2), 0.5),
    row(I, Vdl, 100, "1e-3", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 1e-2), 0.5),
    row(I, Vdl, 100, "3e-3", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 1e-2), 0.5),
    row(I, Vdl, 100, "5e-3", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 1e-2), 0.5),
    row(I, Vdl, 100, "1e-2", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 1e-2), 0.5),
    row(I, Vdl, 100, "1.5e-2", 5.0, 10.0, Some(0.5), (3e-4, 1e-4), (None, 1e-2), 0.5),
    row(I, SdlNl, 100, "0", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-2), 1e-2), 0.5),
    row(I, SdlNl, 100, "1e-3", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-2), 1e-2), 0.5),
    row(I, SdlNl, 100, "3e-3", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-2), 1e-2), 0.5),
    row(I, SdlNl, 100, "5e-3", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-2), 1e-2), 0.5),
    row(I, SdlNl, 100, "8e-3", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-2), 1e-2), 0.5),
    row(I, SdlNl, 100, "1e-2", 1.0, 0.0, None, (1e-3, 1e-4), (Some(1e-2), 1e-2), 0.5),
    annealed(row(I, VdlNl, 100, "0", 20.0, 10.0, Some(0.5), (5e-5, 1e-4), (Some(1e-1), 1e-2), 0.5)),
    annealed(row(I, VdlNl, 100, "1e-3", 20.0, 10.0, Some(0.5), (5e-5, 1e-4), (Some(1e-1), 1e-2), 0.5)),
    annealed(row(I, VdlNl, 100, "2e-3", 20.0, 10.0, Some(0.5), (5e-5, 1e-4), (Some(1e-1), 1e-2), 0.5)),
    annealed(row(I, VdlNl, 100, "3e-3", 20.0, 10.0, Some(0.5), (5e-5, 1e-4), (Some(1e-1), 1e-2), 0.5)),
    annealed(row(I, VdlNl, 100, "5e-3", 20.0, 10.0, Some(0.5), (5e-5, 1e-4), (Some(1e-1), 1e-2), 0.5)),
    annealed(row(I, VdlNl, 100, "1e-2", 40.0, 10.0, Some(0.5), (5e-5, 1e-4), (Some(1e-1), 1e-2), 0.5)),
    annealed(row(I, VdlNl, 100, "2e-2", 40.0, 10.0, Some(0.5), (5e-5, 1e-4), (Some(1e-1), 1e-2), 0.5)),
];

/// Halving period of the annealed decoder learning rate, in epochs.
const ANNEAL_EPOCHS: usize = 30;

fn name(r: &Row) -> String {
    format!("{}_{}_lambda{}", r.dataset, r.variant.name().replace('-', "_"), r.lambda)
}

/// All preset names, in table order.
pub fn names() -> Vec<String> {
    ROWS.iter().map(name).collect()
}

/// Overwrite the training fields of `cfg` with the named preset. Data paths,
/// seed and output directory are left alone.
pub fn apply(preset: &str, cfg: &mut RunConfig) -> Option<()> {
    let r = ROWS.iter().find(|r| name(r) == preset)?;
    let t = &mut cfg.train;
    t.variant = r.variant;
    t.epochs = r.epochs;
    t.batch_size = 250;
    t.lista_iters = 3;
    t.latent_dim = if r.dataset == M { 128 } else { 256 };
    t.lr_dec = r.lr_dec;
    t.lr_enc = r.lr_enc;
    t.wd_b_dec = r.wd_b_dec.unwrap_or(0.0);
    t.wd_b_enc = r.wd_b_enc;
    t.lr_dec_anneal = r.anneal.then_some(ANNEAL_EPOCHS);
    let inf = &mut t.inference;
    inf.lambda = r.lambda.parse().expect("preset lambda");
    inf.gamma = r.gamma;
    inf.beta = r.beta;
    inf.threshold = r.threshold.unwrap_or(0.5);
    inf.eta = r.eta_z;
    inf.max_iters = 200;
    inf.tol = 1e-3;
    inf.nonneg = true;
    inf.step_rule = StepRule::Constant;
    inf.scale = EnergyScale::Mean;
    cfg.dataset = if r.dataset == M { DataSource::Mnist } else { DataSource::Patches };
    Some(())
}
