//! Brute-force time-domain integration of the memory-kernel master
//! equation, used as an independent cross-check of the analytic propagator.
//!
//! The state is coordinatized as mu = (1, vx, vy, vz); the equation reads
//!
//! ```text
//! d mu / dt = l0 mu(t) + l1 * integral_0^t k(t') exp(l t') mu(t - t') dt'
//! ```
//!
//! with l = l0 + l1. The local term is stepped with classical RK4 while the
//! memory convolution is evaluated by the trapezoidal rule on the step grid,
//! with an Euler predictor supplying the boundary value; the composite
//! scheme converges at O(h^2), dominated by the trapezoid.

use crate::model::{
    generator_matrix_l0, generator_matrix_l1, lindblad_generator_matrix, KernelSpec, ModelParams,
};
use crate::qstate::{bloch_to_density_unchecked, BlochVector, DensityMatrix};
use crate::{Error, Result};

/// Largest admissible step of the uniform integration grid, us.
pub const MAX_STEP: f64 = 0.01;

type M4 = [f64; 16];
type V4 = [f64; 4];

fn flat(m: [[f64; 4]; 4]) -> M4 {
    let mut out = [0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            out[4 * i + j] = m[i][j];
        }
    }
    out
}

fn matvec(m: &M4, v: &V4) -> V4 {
    [
        m[0] * v[0] + m[1] * v[1] + m[2] * v[2] + m[3] * v[3],
        m[4] * v[0] + m[5] * v[1] + m[6] * v[2] + m[7] * v[3],
        m[8] * v[0] + m[9] * v[1] + m[10] * v[2] + m[11] * v[3],
        m[12] * v[0] + m[13] * v[1] + m[14] * v[2] + m[15] * v[3],
    ]
}

fn matmul(a: &M4, b: &M4) -> M4 {
    let mut out = [0.0; 16];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[4 * i + k];
            for j in 0..4 {
                out[4 * i + j] += aik * b[4 * k + j];
            }
        }
    }
    out
}

fn axpy(y: &mut V4, a: f64, x: &V4) {
    for i in 0..4 {
        y[i] += a * x[i];
    }
}

/// Matrix exponential by scaling and squaring with a truncated series.
pub(crate) fn expm4(m: &M4) -> M4 {
    let norm: f64 = (0..4)
        .map(|i| (0..4).map(|j| m[4 * i + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings as i32);
    let a: M4 = std::array::from_fn(|k| m[k] * scale);

    let mut result = [0.0; 16];
    for i in 0..4 {
        result[4 * i + i] = 1.0;
    }
    let mut term = result;
    for k in 1..=16 {
        term = matmul(&term, &a);
        for x in term.iter_mut() {
            *x /= k as f64;
        }
        for (r, t) in result.iter_mut().zip(term.iter()) {
            *r += t;
        }
        if term.iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

fn validate_grid(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Validation(
            "integration grid needs at least two points".into(),
        ));
    }
    if times[0].abs() > 1e-12 {
        return Err(Error::Validation(
            "integration grid must start at t = 0".into(),
        ));
    }
    let h = times[1] - times[0];
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::Validation(
            "integration grid must be increasing".into(),
        ));
    }
    if h > MAX_STEP + 1e-12 {
        return Err(Error::Validation(format!(
            "integration step {h} exceeds the maximum {MAX_STEP}"
        )));
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1e-9) {
            return Err(Error::Validation(format!(
                "non-uniform grid at index {i}: step {} vs {h}",
                w[1] - w[0]
            )));
        }
    }
    Ok(h)
}

/// Integrates the master equation on a uniform grid starting at t = 0 and
/// returns the state at every grid point.
pub fn reference_integrate(
    theta: &ModelParams,
    rho0: &DensityMatrix,
    times: &[f64],
) -> Result<Vec<DensityMatrix>> {
    theta.validate()?;
    let h = validate_grid(times)?;
    let v0 = rho0.to_bloch();
    let mu0: V4 = [1.0, v0.vx, v0.vy, v0.vz];
    let steps = times.len() - 1;

    let mus = match theta.kernel {
        KernelSpec::Delta => {
            // The impulse kernel collapses the memory term to l1 mu(t).
            let l = flat(lindblad_generator_matrix(theta));
            let mut mus = Vec::with_capacity(steps + 1);
            mus.push(mu0);
            let mut mu = mu0;
            for _ in 0..steps {
                mu = rk4_step(&l, &mu, h);
                mus.push(mu);
            }
            mus
        }
        _ => integrate_memory(theta, mu0, h, steps),
    };

    Ok(mus
        .into_iter()
        .map(|mu| bloch_to_density_unchecked(&BlochVector::new(mu[1], mu[2], mu[3])))
        .collect())
}

fn rk4_step(l: &M4, mu: &V4, h: f64) -> V4 {
    let k1 = matvec(l, mu);
    let mut tmp = *mu;
    axpy(&mut tmp, 0.5 * h, &k1);
    let k2 = matvec(l, &tmp);
    tmp = *mu;
    axpy(&mut tmp, 0.5 * h, &k2);
    let k3 = matvec(l, &tmp);
    tmp = *mu;
    axpy(&mut tmp, h, &k3);
    let k4 = matvec(l, &tmp);
    let mut out = *mu;
    axpy(&mut out, h / 6.0, &k1);
    axpy(&mut out, h / 3.0, &k2);
    axpy(&mut out, h / 3.0, &k3);
    axpy(&mut out, h / 6.0, &k4);
    out
}

fn integrate_memory(theta: &ModelParams, mu0: V4, h: f64, steps: usize) -> Vec<V4> {
    let l0 = flat(generator_matrix_l0(theta));
    let l1 = flat(generator_matrix_l1(theta));
    let l = flat(lindblad_generator_matrix(theta));

    // The dephasing part l1 acts on the transverse components only, so of
    // the memory vector only rows 1 and 2 ever enter the derivative. The
    // convolution weights are the corresponding 2x2 block of
    // k(t_j) exp(l t_j), with exp(l t_j) accumulated stepwise.
    let eh = expm4(&std::array::from_fn(|k| l[k] * h));
    let mut ga = Vec::with_capacity(steps + 1);
    let mut gb = Vec::with_capacity(steps + 1);
    let mut gc = Vec::with_capacity(steps + 1);
    let mut gd = Vec::with_capacity(steps + 1);
    let mut ej: M4 = [0.0; 16];
    for i in 0..4 {
        ej[4 * i + i] = 1.0;
    }
    for j in 0..=steps {
        let kj = theta
            .kernel
            .time_value(j as f64 * h)
            .expect("memory integration requires a time-domain kernel");
        ga.push(kj * ej[5]);
        gb.push(kj * ej[6]);
        gc.push(kj * ej[9]);
        gd.push(kj * ej[10]);
        ej = matmul(&eh, &ej);
    }

    let mut mus: Vec<V4> = Vec::with_capacity(steps + 1);
    mus.push(mu0);
    let mut mu1h = Vec::with_capacity(steps + 1);
    let mut mu2h = Vec::with_capacity(steps + 1);
    mu1h.push(mu0[1]);
    mu2h.push(mu0[2]);

    // m_cur holds the quadrature value of the transverse convolution at the
    // current node, built from final state values; m_prev trails one node.
    let mut m_cur = [0.0f64; 2];
    let mut m_prev = [0.0f64; 2];
    for n in 0..steps {
        let mu_n = mus[n];
        let k1 = rhs(&l0, &l1, &mu_n, &m_cur);
        // Euler predictor supplies the t_{n+1} boundary of the trapezoid.
        let mut mu_star = mu_n;
        axpy(&mut mu_star, h, &k1);

        // Interior nodes j = 1..n pair G_j with mu_{n+1-j}.
        let mut c1 = 0.0f64;
        let mut c2 = 0.0f64;
        for (((&a, &b), (&c, &d)), (&m1, &m2)) in ga[1..=n]
            .iter()
            .zip(gb[1..=n].iter())
            .zip(gc[1..=n].iter().zip(gd[1..=n].iter()))
            .zip(mu1h[1..=n].iter().rev().zip(mu2h[1..=n].iter().rev()))
        {
            c1 += a * m1 + b * m2;
            c2 += c * m1 + d * m2;
        }
        let f0 = [
            ga[0] * mu_star[1] + gb[0] * mu_star[2],
            gc[0] * mu_star[1] + gd[0] * mu_star[2],
        ];
        let fend = [
            ga[n + 1] * mu0[1] + gb[n + 1] * mu0[2],
            gc[n + 1] * mu0[1] + gd[n + 1] * mu0[2],
        ];
        c1 += 0.5 * (f0[0] + fend[0]);
        c2 += 0.5 * (f0[1] + fend[1]);
        let mut m_next = [h * c1, h * c2];
        if n >= 1 {
            // Gregory end correction lifts the trapezoid sum to third
            // order: -(h/12) (f_{n+1} - f_n - f_1 + f_0) per boundary.
            let f1 = [
                ga[1] * mu_n[1] + gb[1] * mu_n[2],
                gc[1] * mu_n[1] + gd[1] * mu_n[2],
            ];
            let fn_ = [
                ga[n] * mu1h[1] + gb[n] * mu2h[1],
                gc[n] * mu1h[1] + gd[n] * mu2h[1],
            ];
            for k in 0..2 {
                m_next[k] -= h / 12.0 * (fend[k] - fn_[k] - f1[k] + f0[k]);
            }
        }

        // Quadratic interpolation of the memory term at the half step.
        let m_mid = if n >= 1 {
            [
                (3.0 * m_next[0] + 6.0 * m_cur[0] - m_prev[0]) / 8.0,
                (3.0 * m_next[1] + 6.0 * m_cur[1] - m_prev[1]) / 8.0,
            ]
        } else {
            [0.5 * (m_cur[0] + m_next[0]), 0.5 * (m_cur[1] + m_next[1])]
        };
        let mut tmp = mu_n;
        axpy(&mut tmp, 0.5 * h, &k1);
        let k2 = rhs(&l0, &l1, &tmp, &m_mid);
        tmp = mu_n;
        axpy(&mut tmp, 0.5 * h, &k2);
        let k3 = rhs(&l0, &l1, &tmp, &m_mid);
        tmp = mu_n;
        axpy(&mut tmp, h, &k3);
        let k4 = rhs(&l0, &l1, &tmp, &m_next);

        let mut mu_next = mu_n;
        axpy(&mut mu_next, h / 6.0, &k1);
        axpy(&mut mu_next, h / 3.0, &k2);
        axpy(&mut mu_next, h / 3.0, &k3);
        axpy(&mut mu_next, h / 6.0, &k4);

        // Replace the predictor boundary contribution with the corrected
        // one (the node carries weight h/2 - h/12 after the correction).
        let d1 = mu_next[1] - mu_star[1];
        let d2 = mu_next[2] - mu_star[2];
        let w0 = if n >= 1 { 0.5 * h - h / 12.0 } else { 0.5 * h };
        m_next[0] += w0 * (ga[0] * d1 + gb[0] * d2);
        m_next[1] += w0 * (gc[0] * d1 + gd[0] * d2);

        m_prev = m_cur;
        m_cur = m_next;
        mu1h.push(mu_next[1]);
        mu2h.push(mu_next[2]);
        mus.push(mu_next);
    }
    mus
}

/// Full right-hand side with the memory term already reduced to its
/// transverse components.
fn rhs(l0: &M4, l1: &M4, mu: &V4, mem: &[f64; 2]) -> V4 {
    let a = matvec(l0, mu);
    [a[0], a[1] + l1[5] * mem[0], a[2] + l1[10] * mem[1], a[3]]
}
