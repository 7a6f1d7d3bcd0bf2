//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance -- C3 C4` runs a subset. MNIST is
//! read from `$MNIST_DIR`, else `<workspace>/data/mnist`. Failed criteria
//! are reported but only fail the process when `ACCEPTANCE_STRICT` is set.

mod gradients;
mod lasso;
mod mnist;
mod synthetic;

use std::process::ExitCode;
use std::time::Instant;

/// Outcome of one criterion: a verdict and the measured values behind it.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// State shared between criteria, so later ones reuse earlier training runs.
#[derive(Default)]
pub struct Context {
    pub mnist: Option<Result<mnist::Models, String>>,
    pub synthetic: Option<synthetic::RecoveryRuns>,
}

type Check = fn(&mut Context) -> Verdict;

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks: [(&str, &str, Check); 8] = [
        ("C1", "gradient correctness", gradients::c1),
        ("C2", "lasso oracle equivalence", lasso::c2),
        ("C3", "collapse ablation", synthetic::c3),
        ("C4", "dictionary recovery", synthetic::c4),
        ("C5", "MNIST sparsity/PSNR trend", mnist::c5),
        ("C6", "PSNR calibration and denoising", mnist::c6),
        ("C7", "linear probe", mnist::c7),
        ("C8", "determinism", synthetic::c8),
    ];
    let mut ctx = Context::default();
    let mut failed = 0;
    for (id, name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| f.eq_ignore_ascii_case(id)) {
            continue;
        }
        let start = Instant::now();
        let v = check(&mut ctx);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{id} {status} {name}: {} ({:.1}s)", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
    }
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
