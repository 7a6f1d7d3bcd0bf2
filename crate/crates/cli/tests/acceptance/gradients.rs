//! Analytic gradients against central finite differences in 64-bit floats.

use ndarray::Array1;
use rand::Rng;
use sparsedict::inference::{variance_penalty, variance_penalty_grad};
use sparsedict::models::{Decoder, ListaEncoder};
use sparsedict::numerics::{randn, row_mean_var, Matrix, SeededRng};

use crate::{Context, Verdict};

const INSTANCES: usize = 50;
const TOL: f64 = 1e-6;
const H: f64 = 1e-6;
/// pre-activations and standard deviations must stay this far from a kink
const KINK: f64 = 1e-3;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` over every entry of `x`.
fn numeric(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + H;
            let up = f(&p);
            p[i] = x[i] - H;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn flat(m: &Matrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

fn from_flat(shape: (usize, usize), v: &[f64]) -> Matrix<f64> {
    Matrix::from_shape_vec(shape, v.to_vec()).expect("shape")
}

fn sq(m: &Matrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

fn near_kink(pre: &Matrix<f64>) -> bool {
    pre.iter().any(|v| v.abs() < KINK)
}

fn mlp_pre(dec: &Decoder<f64>, z: &Matrix<f64>) -> Option<Matrix<f64>> {
    match dec {
        Decoder::Mlp(m) => {
            let mut pre = m.w1.dot(z);
            for mut col in pre.columns_mut() {
                col += &m.b1;
            }
            Some(pre)
        }
        Decoder::Linear(_) => None,
    }
}

/// Worst relative error over the reconstruction gradients (codes and
/// parameters) of one decoder, or `None` when the instance sits near a kink.
fn decoder_case(dec: &Decoder<f64>, z: &Matrix<f64>, y: &Matrix<f64>) -> Option<f64> {
    if mlp_pre(dec, z).is_some_and(|p| near_kink(&p)) {
        return None;
    }
    let n = z.ncols() as f64;
    let half_sse = |zz: &Matrix<f64>| 0.5 * sq(&(dec.decode(zz).unwrap() - y));
    let gz = dec.grad_z(z, y).unwrap();
    let nz = numeric(&flat(z), |v| half_sse(&from_flat(z.dim(), v)));
    let mut worst = rel_err(&flat(&gz), &nz);

    let grads = dec.grad_params(z, y).unwrap();
    let analytic: Vec<Vec<f64>> = grads.named().iter().map(|(_, g)| g.to_vec()).collect();
    let mut probe = dec.clone();
    let n_params = analytic.len();
    for p in 0..n_params {
        let x: Vec<f64> = probe.params_mut()[p].1.to_vec();
        let num = numeric(&x, |v| {
            let mut d = dec.clone();
            d.params_mut()[p].1.copy_from_slice(v);
            sq(&(d.decode(z).unwrap() - y)) / n
        });
        worst = worst.max(rel_err(&analytic[p], &num));
    }
    Some(worst)
}

/// Pre-activations of every encoder step.
fn encoder_pres(enc: &ListaEncoder<f64>, y: &Matrix<f64>) -> Vec<Matrix<f64>> {
    let mut u = enc.u.dot(y);
    for mut col in u.columns_mut() {
        col += &enc.b;
    }
    let mut pres = vec![u.clone()];
    let mut z = u.mapv(|v| v.max(0.0));
    for _ in 0..enc.iters {
        let pre = enc.s.dot(&z) + &u;
        z = pre.mapv(|v| v.max(0.0));
        pres.push(pre);
    }
    pres
}

fn encoder_case(enc: &ListaEncoder<f64>, y: &Matrix<f64>, target: &Matrix<f64>) -> Option<f64> {
    if encoder_pres(enc, y).iter().any(near_kink) {
        return None;
    }
    let n = y.ncols() as f64;
    let grads = enc.grad_params(y, target).unwrap();
    let analytic: Vec<Vec<f64>> = grads.named().iter().map(|(_, g)| g.to_vec()).collect();
    let mut worst: f64 = 0.0;
    let mut probe = enc.clone();
    for p in 0..analytic.len() {
        let x: Vec<f64> = probe.params_mut()[p].1.to_vec();
        let num = numeric(&x, |v| {
            let mut e = enc.clone();
            e.params_mut()[p].1.copy_from_slice(v);
            sq(&(e.encode(y).unwrap() - target)) / n
        });
        worst = worst.max(rel_err(&analytic[p], &num));
    }
    Some(worst)
}

fn variance_case(z: &Matrix<f64>, beta: f64, t: f64) -> Option<f64> {
    let (_, vars) = row_mean_var(z);
    if vars.iter().any(|v| v.sqrt() < KINK || (v.sqrt() - t).abs() < KINK) {
        return None;
    }
    let g = variance_penalty_grad(z, beta, t).unwrap();
    let num = numeric(&flat(z), |v| variance_penalty(&from_flat(z.dim(), v), beta, t).unwrap());
    Some(rel_err(&flat(&g), &num))
}

/// Draw until `case` accepts an instance (i.e. it is away from kinks).
fn accepted(rng: &mut SeededRng, mut case: impl FnMut(&mut SeededRng) -> Option<f64>) -> f64 {
    loop {
        if let Some(e) = case(rng) {
            return e;
        }
    }
}

pub fn c1(_: &mut Context) -> Verdict {
    let mut rng = SeededRng::substream(1, "gradients");
    let (mut lin, mut mlp, mut var, mut enc): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..INSTANCES {
        lin = lin.max(accepted(&mut rng, |r| {
            let (d, l, n) = (r.random_range(1..=8), r.random_range(1..=8), r.random_range(1..=6));
            let dec = Decoder::linear_random(d, l, r);
            decoder_case(&dec, &randn(r, l, n, 0.0, 1.0), &randn(r, d, n, 0.0, 1.0))
        }));
        mlp = mlp.max(accepted(&mut rng, |r| {
            let (d, m, l, n) = (
                r.random_range(1..=8),
                r.random_range(1..=8),
                r.random_range(1..=8),
                r.random_range(1..=6),
            );
            let mut dec = Decoder::mlp_random(d, m, l, r);
            if let Decoder::Mlp(mm) = &mut dec {
                mm.b1 = Array1::from_iter((0..m).map(|_| r.random_range(-0.5..0.5)));
            }
            decoder_case(&dec, &randn(r, l, n, 0.0, 1.0), &randn(r, d, n, 0.0, 1.0))
        }));
        var = var.max(accepted(&mut rng, |r| {
            let (l, n) = (r.random_range(1..=8), r.random_range(2..=6));
            let scale = r.random_range(0.1..1.0);
            variance_case(&randn(r, l, n, 0.0, scale), r.random_range(0.1..10.0), r.random_range(0.2..1.0))
        }));
        enc = enc.max(accepted(&mut rng, |r| {
            let (d, l, n, iters) = (
                r.random_range(1..=8),
                r.random_range(1..=8),
                r.random_range(1..=6),
                r.random_range(0..=3),
            );
            let mut e = ListaEncoder::random(d, l, iters, r);
            e.b = Array1::from_iter((0..l).map(|_| r.random_range(-0.5..0.5)));
            encoder_case(&e, &randn(r, d, n, 0.0, 1.0), &randn(r, l, n, 0.0, 1.0))
        }));
    }
    let worst = lin.max(mlp).max(var).max(enc);
    Verdict::new(
        worst <= TOL,
        format!(
            "max rel err linear {lin:.1e} mlp {mlp:.1e} variance {var:.1e} encoder {enc:.1e} over {INSTANCES} instances each (tol {TOL:.0e})"
        ),
    )
}
