//! Shared helpers for the integration suites: desk-scale parameter
//! samplers, a complete-positivity audit, and reporting.

use pmme_lab::model::{KernelSpec, ModelParams};
use pmme_lab::qstate::BlochVector;
use pmme_lab::solver::{choi_check, Propagator};
use rand::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Delta,
    Exp,
    Rational2,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Delta, KernelKind::Exp, KernelKind::Rational2];

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Delta => "delta",
            KernelKind::Exp => "exp",
            KernelKind::Rational2 => "rational2",
        }
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Desk-scale random parameters: rates comparable to device magnitudes.
pub fn sample_theta(kind: KernelKind, rng: &mut impl Rng) -> ModelParams {
    let omega_z = rng.gen_range(-1.5..1.5);
    let gamma_z = log_uniform(rng, 1e-3, 0.05);
    let gs = log_uniform(rng, 5e-3, 0.05);
    let gr = rng.gen_range(0.05..0.6);
    let kernel = match kind {
        KernelKind::Delta => KernelSpec::Delta,
        KernelKind::Exp => KernelSpec::Exp {
            b0: log_uniform(rng, 0.02, 0.5),
        },
        KernelKind::Rational2 => {
            let b1 = log_uniform(rng, 0.05, 0.8);
            KernelSpec::Rational2 {
                a0: log_uniform(rng, 1e-3, 0.3),
                b0: log_uniform(rng, 1e-3, 0.1),
                b1,
            }
        }
    };
    ModelParams::new(
        omega_z,
        gamma_z,
        gs * gr / (1.0 + gr),
        gs / (1.0 + gr),
        kernel,
    )
    .expect("sampled parameters are feasible")
}

/// Audit over a dense grid on [0, horizon]: true when the map stays
/// completely positive at every checked time.
pub fn is_cp_valid(theta: &ModelParams, horizon: f64) -> bool {
    let prop = match Propagator::build(theta) {
        Ok(p) => p,
        Err(_) => return false,
    };
    let n = 1000;
    (0..=n).all(|i| {
        let t = horizon * i as f64 / n as f64;
        choi_check(&prop, theta, t).cp_ok
    })
}

/// Rejection sampler for parameters whose map passes the CP audit.
pub fn cp_valid_theta(kind: KernelKind, rng: &mut impl Rng) -> ModelParams {
    for _ in 0..1000 {
        let theta = sample_theta(kind, rng);
        if is_cp_valid(&theta, 100.0) {
            return theta;
        }
    }
    panic!("no CP-valid parameters found in 1000 draws");
}

pub fn random_pure(rng: &mut impl Rng) -> BlochVector {
    loop {
        let g: [f64; 3] = [
            rng.sample(rand_distr::StandardNormal),
            rng.sample(rand_distr::StandardNormal),
            rng.sample(rand_distr::StandardNormal),
        ];
        let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if n > 1e-6 {
            return BlochVector::new(g[0] / n, g[1] / n, g[2] / n);
        }
    }
}

/// One pass/fail line per acceptance criterion.
pub fn report(criterion: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}
