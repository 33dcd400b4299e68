//! Analytic propagation of the master-equation hierarchy.
//!
//! In the damping basis the evolution factorizes into four scalar factors
//! xi_i(t) obtained by inverting
//!
//! ```text
//! xi~_i(s) = 1 / (s - lambda_i^0 - lambda_i^1 k~(s - lambda_i))
//! ```
//!
//! For the rational kernel family the inversion is exact: writing
//! W = s - lambda_2, the i = 2 factor is Q(W) / [(W - 2 gamma_z) Q(W) +
//! 2 gamma_z P(W)] with k~ = P/Q, a rational function whose denominator has
//! real coefficients in W of degree one (Delta), two (Exp) or three
//! (Rational2). Poles are found in closed form and residues assembled into
//! [`PoleTerm`] sums; xi_1 = 1 and xi_4 = exp(-Gamma_s t) regardless of the
//! kernel because the dephasing eigenvalue vanishes on those sectors.

mod oracle;
mod poly;

pub use oracle::reference_integrate;
pub use poly::{PoleTerm, MERGE_TOL};

use crate::model::{damping_basis, KernelSpec, ModelParams};
use crate::qstate::{bloch_to_density_unchecked, BlochVector, DensityMatrix};
use crate::{Complex64, Error, Result};

/// Queries beyond this time are clamped; every decaying exponential has
/// underflowed to zero long before.
pub const TIME_CAP: f64 = 1e6;

/// Margin tolerance on Choi eigenvalues for the complete-positivity verdict.
pub const CP_EIG_TOL: f64 = 1e-10;

/// The four scalar evolution factors in pole–residue form.
#[derive(Debug, Clone)]
pub struct Propagator {
    xi: [Vec<PoleTerm>; 4],
    gamma_ratio: f64,
    stationary_vz: f64,
}

impl Propagator {
    /// Builds the factors for the given parameters.
    pub fn build(theta: &ModelParams) -> Result<Self> {
        theta.validate()?;
        let basis = damping_basis(theta);
        let lambda2 = basis.lambda[1];
        let gz = theta.gamma_z;
        let gs = theta.gamma_sum();

        let xi2 = match theta.kernel {
            KernelSpec::Delta => {
                vec![PoleTerm {
                    pole: lambda2,
                    residue: Complex64::new(1.0, 0.0),
                    multiplicity: 1,
                }]
            }
            KernelSpec::Exp { b0 } => {
                // Denominator in W: (W - 2 gz)(W + b0) + 2 gz.
                let d0 = 2.0 * gz * (1.0 - b0);
                let d1 = b0 - 2.0 * gz;
                if !(d0.is_finite() && d1.is_finite()) {
                    return Err(Error::Numerical("non-finite quadratic coefficients".into()));
                }
                let roots = poly::quadratic_roots(d0, d1);
                let numer = [b0, 1.0];
                shift_terms(poly::partial_fractions(&numer, &roots)?, lambda2)
            }
            KernelSpec::Rational2 { a0, b0, b1 } => {
                // Denominator in W: (W - 2 gz)(W^2 + b1 W + b0) + 2 gz (W + a0).
                let d0 = 2.0 * gz * (a0 - b0);
                let d1 = b0 - 2.0 * gz * (b1 - 1.0);
                let d2 = b1 - 2.0 * gz;
                if !(d0.is_finite() && d1.is_finite() && d2.is_finite()) {
                    return Err(Error::Numerical("non-finite cubic coefficients".into()));
                }
                let roots = poly::cubic_roots(d0, d1, d2);
                let numer = [b0, b1, 1.0];
                shift_terms(poly::partial_fractions(&numer, &roots)?, lambda2)
            }
        };

        let xi3 = xi2
            .iter()
            .map(|t| PoleTerm {
                pole: t.pole.conj(),
                residue: t.residue.conj(),
                multiplicity: t.multiplicity,
            })
            .collect();
        let xi1 = vec![PoleTerm {
            pole: Complex64::new(0.0, 0.0),
            residue: Complex64::new(1.0, 0.0),
            multiplicity: 1,
        }];
        let xi4 = vec![PoleTerm {
            pole: Complex64::new(-gs, 0.0),
            residue: Complex64::new(1.0, 0.0),
            multiplicity: 1,
        }];

        let prop = Self {
            xi: [xi1, xi2, xi3, xi4],
            gamma_ratio: theta.gamma_ratio(),
            stationary_vz: theta.stationary_vz(),
        };
        // The normalization xi_i(0) = 1 is structural; a failure here means
        // the root finder lost the poles.
        for i in 0..4 {
            let at0 = prop.xi(i, 0.0);
            if (at0 - Complex64::new(1.0, 0.0)).norm() > 1e-8 {
                return Err(Error::Numerical(format!(
                    "xi_{}(0) = {at0} deviates from 1; pole expansion failed",
                    i + 1
                )));
            }
        }
        Ok(prop)
    }

    /// Evaluates xi_{i+1}(t) for i in 0..4.
    pub fn xi(&self, i: usize, t: f64) -> Complex64 {
        eval_terms(&self.xi[i], t)
    }

    /// Pole–residue terms of xi_{i+1}.
    pub fn terms(&self, i: usize) -> &[PoleTerm] {
        &self.xi[i]
    }

    /// Evolves a Bloch vector: the coherence rotates and decays through
    /// xi_2, the population relaxes through xi_4 toward the Gibbs point.
    pub fn propagate_bloch(&self, v0: &BlochVector, t: f64) -> BlochVector {
        let xi2 = self.xi(1, t);
        let xi4 = self.xi(3, t).re;
        let w = xi2 * Complex64::new(v0.vx, -v0.vy);
        BlochVector {
            vx: w.re,
            vy: -w.im,
            vz: self.stationary_vz + xi4 * (v0.vz - self.stationary_vz),
        }
    }

    /// Evolves a density matrix. The result has exactly unit trace; it is
    /// positive semidefinite whenever the map is completely positive at t.
    pub fn propagate(&self, rho0: &DensityMatrix, t: f64) -> DensityMatrix {
        let v = self.propagate_bloch(&rho0.to_bloch(), t);
        bloch_to_density_unchecked(&v)
    }

    pub fn gamma_ratio(&self) -> f64 {
        self.gamma_ratio
    }
}

fn shift_terms(terms: Vec<PoleTerm>, shift: Complex64) -> Vec<PoleTerm> {
    terms
        .into_iter()
        .map(|mut t| {
            t.pole += shift;
            t
        })
        .collect()
}

fn eval_terms(terms: &[PoleTerm], t: f64) -> Complex64 {
    const FACT: [f64; 3] = [1.0, 1.0, 2.0];
    let t = t.min(TIME_CAP);
    let mut acc = Complex64::new(0.0, 0.0);
    for term in terms {
        let decay = term.pole.re * t;
        if decay < -745.0 {
            continue;
        }
        // Clamping the growth keeps unphysical parameter points finite.
        let ex = Complex64::new(decay.min(700.0), term.pole.im * t).exp();
        acc += term.residue * t.powi(term.multiplicity as i32 - 1) * ex
            / FACT[term.multiplicity as usize - 1];
    }
    acc
}

/// Complete-positivity report at one time.
#[derive(Debug, Clone, Copy)]
pub struct ChoiReport {
    /// Evaluation time, us.
    pub time: f64,
    /// Choi eigenvalues; the matrix is Hermitian so imaginary parts vanish.
    pub eigenvalues: [Complex64; 4],
    pub cp_ok: bool,
    /// Smallest eigenvalue real part.
    pub margin: f64,
}

/// Closed-form Choi eigenvalues of the map at time t.
///
/// With r = Gamma_r and the factors xi_2, xi_4, the eigenvalues are
/// (1 - xi4)/(1 + r), r (1 - xi4)/(1 + r) and the pair
/// (1 + xi4)/2 +- sqrt(((1 + xi4)/2)^2 - det) with
/// det = (1 + r xi4)(r + xi4)/(1 + r)^2 - |xi2|^2.
pub fn choi_check(prop: &Propagator, theta: &ModelParams, t: f64) -> ChoiReport {
    let r = theta.gamma_ratio();
    let xi2 = prop.xi(1, t);
    let xi4 = prop.xi(3, t).re;
    let l1 = (1.0 - xi4) / (1.0 + r);
    let l2 = r * l1;
    let mean = 0.5 * (1.0 + xi4);
    let det = (1.0 + r * xi4) * (r + xi4) / (1.0 + r).powi(2) - xi2.norm_sqr();
    let disc = (mean * mean - det).max(0.0).sqrt();
    let eig = [l1, l2, mean + disc, mean - disc];
    let margin = eig.iter().copied().fold(f64::INFINITY, f64::min);
    ChoiReport {
        time: t,
        eigenvalues: eig.map(|e| Complex64::new(e, 0.0)),
        cp_ok: margin >= -CP_EIG_TOL,
        margin,
    }
}

/// CSV trajectory export: t, vx, vy, vz, purity with 12 significant digits.
pub fn trajectory_csv(points: &[(f64, BlochVector)]) -> String {
    let mut out = String::from("t,vx,vy,vz,purity\n");
    for (t, v) in points {
        let p = 0.5 * (1.0 + v.vx * v.vx + v.vy * v.vy + v.vz * v.vz);
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            t, v.vx, v.vy, v.vz, p
        ));
    }
    out
}
