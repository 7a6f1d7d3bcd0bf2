use sparsedict::data::{synth_sparse, Dataset};
use sparsedict::inference::{InferenceConfig, StepRule};
use sparsedict::models::Decoder;
use sparsedict::numerics::{column_norms, SeededRng};
use sparsedict::training::{train, TrainConfig, Variant, LAST_CHECKPOINT, METRICS_FILE};

fn data(seed: u64) -> Dataset {
    synth_sparse(10, 12, 2, 200, 0.01, &mut SeededRng::substream(seed, "synth")).data
}

fn cfg(variant: Variant, epochs: usize) -> TrainConfig {
    TrainConfig {
        variant,
        epochs,
        batch_size: 20,
        inference: InferenceConfig {
            lambda: 0.05,
            beta: if variant.projects() { 0.0 } else { 1.0 },
            threshold: 0.5,
            step_rule: StepRule::Lipschitz,
            ..Default::default()
        },
        lr_dec: 0.01,
        lr_enc: 0.003,
        latent_dim: 12,
        hidden_dim: 16,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn same_seed_reproduces_report_and_artifacts() {
    let (tr, va) = (data(1), data(2));
    let c = cfg(Variant::Vdl, 3);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = train(&tr, &va, &c, Some(da.path())).unwrap();
    let b = train(&tr, &va, &c, Some(db.path())).unwrap();
    assert_eq!(a.report.records, b.report.records);
    for f in [METRICS_FILE, LAST_CHECKPOINT] {
        assert_eq!(std::fs::read(da.path().join(f)).unwrap(), std::fs::read(db.path().join(f)).unwrap());
    }
    let other = train(&tr, &va, &TrainConfig { seed: 12, ..c }, None).unwrap();
    assert_ne!(other.report.records, a.report.records);
}

#[test]
fn sdl_columns_are_unit_norm_after_every_epoch() {
    let (tr, va) = (data(3), data(4));
    for variant in [Variant::Sdl, Variant::SdlNl] {
        for epochs in 1..=3 {
            let out = train(&tr, &va, &cfg(variant, epochs), None).unwrap();
            let norms: Vec<f64> = match &out.last.decoder {
                Decoder::Linear(l) => column_norms(&l.w),
                Decoder::Mlp(m) => column_norms(&m.w1).into_iter().chain(column_norms(&m.w2)).collect(),
            };
            assert!(norms.iter().all(|n| (n - 1.0).abs() <= 1e-6), "{variant:?} epoch {epochs}: {norms:?}");
        }
    }
}
