//! FISTA against a coordinate-descent Lasso solver, and ISTA descent.

use rand::Rng;
use sparsedict::inference::{infer_with_target, InferenceConfig, Method, StepRule};
use sparsedict::models::{Decoder, LinearDecoder};
use sparsedict::numerics::{randn, Matrix, SeededRng};

use crate::{Context, Verdict};

const INSTANCES: usize = 100;
const ISTA_STEPS: usize = 60;

/// Cyclic coordinate descent on `sum_t 1/2 ||y_t - W z_t||^2 + lambda ||z_t||_1`,
/// run to machine precision; returns the optimal energy.
pub fn lasso_cd(w: &Matrix<f64>, y: &Matrix<f64>, lambda: f64) -> f64 {
    let (d, l) = w.dim();
    let mut total = 0.0;
    for col in y.columns() {
        let mut z = vec![0.0; l];
        let mut r: Vec<f64> = col.to_vec();
        for _ in 0..100_000 {
            let mut delta: f64 = 0.0;
            for j in 0..l {
                let a = w.column(j);
                let nrm: f64 = a.iter().map(|v| v * v).sum();
                if nrm == 0.0 {
                    continue;
                }
                let rho = (0..d).map(|i| a[i] * r[i]).sum::<f64>() + nrm * z[j];
                let new = rho.signum() * (rho.abs() - lambda).max(0.0) / nrm;
                for i in 0..d {
                    r[i] -= a[i] * (new - z[j]);
                }
                delta = delta.max((new - z[j]).abs());
                z[j] = new;
            }
            if delta < 1e-15 {
                break;
            }
        }
        total += 0.5 * r.iter().map(|v| v * v).sum::<f64>() + lambda * z.iter().map(|v| v.abs()).sum::<f64>();
    }
    total
}

pub fn c2(_: &mut Context) -> Verdict {
    let mut rng = SeededRng::substream(2, "lasso");
    let mut worst_gap: f64 = 0.0;
    let mut worst_rise: f64 = 0.0;
    for _ in 0..INSTANCES {
        let (d, l, n) = (rng.random_range(1..=6), rng.random_range(1..=5), rng.random_range(1..=3));
        let lambda = rng.random_range(0.01..=1.0);
        let w = randn(&mut rng, d, l, 0.0, 1.0);
        let y = randn(&mut rng, d, n, 0.0, 1.0);
        let dec = Decoder::Linear(LinearDecoder { w: w.clone() });
        let cfg = InferenceConfig {
            lambda,
            eta: 1.0,
            step_rule: StepRule::Lipschitz,
            nonneg: false,
            tol: 0.0,
            max_iters: 20_000,
            ..Default::default()
        };
        let fista = infer_with_target(Method::Fista, &y, &dec, None, &cfg, None).unwrap();
        worst_gap = worst_gap.max((fista.final_energy - lasso_cd(&w, &y, lambda)).abs());

        // iterate k of a run is the final iterate of a run capped at k
        let mut prev = f64::INFINITY;
        for k in 1..=ISTA_STEPS {
            let c = InferenceConfig { max_iters: k, ..cfg.clone() };
            let e = infer_with_target(Method::Ista, &y, &dec, None, &c, None).unwrap().final_energy;
            worst_rise = worst_rise.max(e - prev);
            prev = e;
        }
    }
    Verdict::new(
        worst_gap <= 1e-6 && worst_rise <= 1e-12,
        format!(
            "max |E_fista - E_oracle| {worst_gap:.1e} over {INSTANCES} instances, largest ISTA energy increase {worst_rise:.1e}"
        ),
    )
}
