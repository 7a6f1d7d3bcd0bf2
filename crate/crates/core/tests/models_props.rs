use proptest::prelude::*;
use sparsedict::models::{Decoder, ListaEncoder};
use sparsedict::numerics::{randn, Matrix, SeededRng};
use sparsedict::training::{train, TrainConfig, Variant};
use sparsedict::data::Dataset;

fn rng(seed: u64) -> SeededRng {
    SeededRng::new(seed)
}

proptest! {
    #[test]
    fn encoder_output_is_nonnegative(seed in 0u64..1000, d in 1usize..9, l in 1usize..9, n in 1usize..7, iters in 0usize..4) {
        let mut r = rng(seed);
        let enc = ListaEncoder::<f64>::random(d, l, iters, &mut r);
        let y = randn::<f64>(&mut r, d, n, 0.0, 3.0);
        prop_assert!(enc.encode(&y).unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn column_projection_is_idempotent(seed in 0u64..1000, d in 1usize..9, m in 1usize..9, l in 1usize..9) {
        let mut r = rng(seed);
        for mut dec in [Decoder::<f64>::linear_random(d, l, &mut r), Decoder::<f64>::mlp_random(d, m, l, &mut r)] {
            dec.project_columns_unit_norm(&mut r);
            let once = dec.clone();
            dec.project_columns_unit_norm(&mut r);
            let a: Vec<f64> = once.clone().params_mut().into_iter().flat_map(|(_, p)| p.to_vec()).collect();
            let b: Vec<f64> = dec.params_mut().into_iter().flat_map(|(_, p)| p.to_vec()).collect();
            prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-7));
        }
    }

    #[test]
    fn linear_decode_is_positively_homogeneous(seed in 0u64..1000, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let dec = Decoder::<f64>::linear_random(6, 5, &mut r);
        let z = randn::<f64>(&mut r, 5, 4, 0.0, 1.0);
        let scaled = dec.decode(&(&z * c)).unwrap();
        let expect = dec.decode(&z).unwrap() * c;
        for (a, b) in scaled.iter().zip(expect.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn mlp_gradients_keep_row_major_layout() {
    let mut r = rng(3);
    let dec = Decoder::<f32>::mlp_random(5, 7, 4, &mut r);
    let z: Matrix<f32> = randn(&mut r, 4, 3, 0.0, 1.0);
    let y: Matrix<f32> = randn(&mut r, 5, 3, 0.0, 1.0);
    let g = dec.grad_params(&z, &y).unwrap();
    let sizes: Vec<usize> = g.named().iter().map(|(_, s)| s.len()).collect();
    assert_eq!(sizes, vec![28, 7, 35]);
}

#[test]
fn nonlinear_variants_train() {
    let mut r = rng(5);
    let data = Dataset::new(randn(&mut r, 9, 40, 0.0, 1.0), None, "noise").unwrap();
    for (variant, beta) in [(Variant::SdlNl, 0.0), (Variant::VdlNl, 1.0)] {
        let mut cfg = TrainConfig {
            variant,
            epochs: 2,
            batch_size: 10,
            latent_dim: 4,
            hidden_dim: 6,
            ..Default::default()
        };
        cfg.inference.beta = beta;
        cfg.inference.lambda = 0.05;
        cfg.inference.step_rule = sparsedict::inference::StepRule::Lipschitz;
        let out = train(&data, &data.head(10), &cfg, None).unwrap();
        assert_eq!(out.report.records.len(), 2);
        assert!(out.last.all_finite());
    }
}
