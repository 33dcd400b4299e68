//! Root finding and partial-fraction expansion for the low-degree rational
//! functions produced by the kernel family.
//!
//! The denominators are monic with real coefficients and degree at most
//! three; numerators are monic of one degree less. Near-coincident roots are
//! merged into higher-multiplicity poles before residues are computed, since
//! simple-pole residues lose all precision as roots coalesce.

use crate::{Complex64, Error, Result};

/// Relative threshold below which two roots are treated as one pole.
pub const MERGE_TOL: f64 = 1e-9;

/// One term of a pole–residue expansion:
/// residue * t^(m-1) * exp(pole * t) / (m-1)!.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleTerm {
    pub pole: Complex64,
    pub residue: Complex64,
    pub multiplicity: u8,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Roots of x^2 + c1 x + c0 with real coefficients.
pub fn quadratic_roots(c0: f64, c1: f64) -> [Complex64; 2] {
    let disc = c1 * c1 - 4.0 * c0;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // Computing the larger-magnitude root first avoids cancellation.
        let r = if c1 >= 0.0 {
            -0.5 * (c1 + sq)
        } else {
            -0.5 * (c1 - sq)
        };
        if r == 0.0 {
            [c(0.0), c(-c1)]
        } else {
            [c(r), c(c0 / r)]
        }
    } else {
        let im = 0.5 * (-disc).sqrt();
        [
            Complex64::new(-0.5 * c1, im),
            Complex64::new(-0.5 * c1, -im),
        ]
    }
}

/// Roots of x^3 + c2 x^2 + c1 x + c0 with real coefficients, via the
/// depressed cubic. The sign of the discriminant selects between the
/// one-real-root Cardano branch and the trigonometric three-real branch.
pub fn cubic_roots(c0: f64, c1: f64, c2: f64) -> [Complex64; 3] {
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2.powi(3) / 27.0 - c2 * c1 / 3.0 + c0;
    // Depressed cubic y^3 + p y + q = 0, x = y - shift.
    let scale = c0
        .abs()
        .cbrt()
        .max(c1.abs().sqrt())
        .max(c2.abs())
        .max(1e-150);
    let disc = (0.5 * q).powi(2) + (p / 3.0).powi(3);

    let mut roots = if p.abs() <= 1e-13 * scale * scale && q.abs() <= 1e-13 * scale.powi(3) {
        [c(0.0); 3]
    } else if disc > 0.0 {
        let sq = disc.sqrt();
        let s = cbrt_signed(-0.5 * q + sq);
        let t = cbrt_signed(-0.5 * q - sq);
        let y1 = s + t;
        let re = -0.5 * y1;
        let im = 0.5 * 3f64.sqrt() * (s - t);
        [c(y1), Complex64::new(re, im), Complex64::new(re, -im)]
    } else {
        // Three real roots.
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let mut ys = [0.0f64; 3];
        for (k, y) in ys.iter_mut().enumerate() {
            *y = m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
        }
        [c(ys[0]), c(ys[1]), c(ys[2])]
    };

    for r in roots.iter_mut() {
        *r -= shift;
    }
    // A couple of Newton steps against the original cubic clean up the
    // closed-form rounding; skipped where the derivative nearly vanishes.
    for r in roots.iter_mut() {
        for _ in 0..2 {
            let f = ((*r + c2) * *r + c1) * *r + c0;
            let df = (3.0 * *r + 2.0 * c2) * *r + c1;
            if df.norm() > 1e-8 {
                let step = f / df;
                if step.norm() < 0.5 * r.norm().max(1.0) {
                    *r -= step;
                }
            }
        }
    }
    roots
}

fn cbrt_signed(x: f64) -> f64 {
    x.cbrt()
}

/// Evaluates a polynomial with real coefficients (ascending order) at z.
fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    let mut acc = c(0.0);
    for &co in coeffs.iter().rev() {
        acc = acc * z + co;
    }
    acc
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &co)| k as f64 * co)
        .collect()
}

/// Partial-fraction expansion of numer(s) / denom(s) where denom is monic
/// with the given roots and numer is monic of degree roots.len() - 1.
/// Near-coincident roots are merged into a single pole of higher
/// multiplicity and expanded with the Taylor-coefficient formulas.
pub fn partial_fractions(numer: &[f64], roots: &[Complex64]) -> Result<Vec<PoleTerm>> {
    if numer.iter().any(|x| !x.is_finite()) || roots.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical(
            "non-finite polynomial data in pole expansion".into(),
        ));
    }
    let n = roots.len();
    debug_assert_eq!(numer.len(), n, "numerator must be monic of degree n-1");

    // Cluster roots within the merge tolerance.
    let mut used = vec![false; n];
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for i in 0..n {
        if used[i] {
            continue;
        }
        let mut members = vec![roots[i]];
        used[i] = true;
        for j in (i + 1)..n {
            if !used[j] {
                let tol = MERGE_TOL * roots[i].norm().max(1.0);
                if (roots[i] - roots[j]).norm() < tol {
                    members.push(roots[j]);
                    used[j] = true;
                }
            }
        }
        let center = members.iter().sum::<Complex64>() / members.len() as f64;
        clusters.push((center, members.len()));
    }

    let dn = poly_derivative(numer);
    let ddn = poly_derivative(&dn);
    let mut terms = Vec::new();
    for (idx, &(z0, mult)) in clusters.iter().enumerate() {
        let others: Vec<Complex64> = clusters
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != idx)
            .flat_map(|(_, &(z, m))| std::iter::repeat_n(z, m))
            .collect();
        let prod: Complex64 = others.iter().map(|&w| z0 - w).product();
        let nz = poly_eval(numer, z0);
        match mult {
            1 => {
                terms.push(PoleTerm {
                    pole: z0,
                    residue: nz / prod,
                    multiplicity: 1,
                });
            }
            2 => {
                // Laurent coefficients of N(s) / ((s-z0)^2 prod(s-w)).
                let sum_inv: Complex64 = others.iter().map(|&w| (z0 - w).inv()).sum();
                let c2 = nz / prod;
                let c1 = (poly_eval(&dn, z0) - nz * sum_inv) / prod;
                terms.push(PoleTerm {
                    pole: z0,
                    residue: c1,
                    multiplicity: 1,
                });
                terms.push(PoleTerm {
                    pole: z0,
                    residue: c2,
                    multiplicity: 2,
                });
            }
            3 => {
                terms.push(PoleTerm {
                    pole: z0,
                    residue: poly_eval(&ddn, z0) / 2.0,
                    multiplicity: 1,
                });
                terms.push(PoleTerm {
                    pole: z0,
                    residue: poly_eval(&dn, z0),
                    multiplicity: 2,
                });
                terms.push(PoleTerm {
                    pole: z0,
                    residue: nz,
                    multiplicity: 3,
                });
            }
            _ => unreachable!("degree is at most three"),
        }
    }
    if terms
        .iter()
        .any(|t| !t.residue.is_finite() || !t.pole.is_finite())
    {
        return Err(Error::Numerical(
            "pole expansion produced non-finite residues".into(),
        ));
    }
    Ok(terms)
}
