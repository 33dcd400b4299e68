//! Single-qubit state representations and the metrics built on them.
//!
//! Convention: measurement outcome 1 corresponds to the projector |1><1| in
//! the measured basis, so the ground state |0> sits at Bloch vector
//! (0, 0, +1) and v_k = 1 - 2 * P(outcome 1 in basis k).

use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Tolerance on the closed-ball constraint |v| <= 1.
pub const BALL_TOL: f64 = 1e-9;
/// Tolerance on algebraic identities (Hermiticity, trace, eigenvalue floor).
pub const ALGEBRA_TOL: f64 = 1e-12;

/// Dimensionless Bloch vector of a single-qubit state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl BlochVector {
    pub fn new(vx: f64, vy: f64, vz: f64) -> Self {
        Self { vx, vy, vz }
    }

    pub fn norm(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + self.vz * self.vz).sqrt()
    }

    /// Checks the closed-ball constraint.
    pub fn validate(&self) -> Result<()> {
        if !(self.vx.is_finite() && self.vy.is_finite() && self.vz.is_finite()) {
            return Err(Error::Validation("Bloch components must be finite".into()));
        }
        if self.norm() > 1.0 + BALL_TOL {
            return Err(Error::Validation(format!(
                "Bloch vector norm {} exceeds the unit ball",
                self.norm()
            )));
        }
        Ok(())
    }

    pub fn distance(&self, other: &BlochVector) -> f64 {
        let dx = self.vx - other.vx;
        let dy = self.vy - other.vy;
        let dz = self.vz - other.vz;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// 2x2 density matrix, stored entrywise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    m: [[Complex64; 2]; 2],
}

impl DensityMatrix {
    /// Builds from explicit entries, enforcing Hermiticity, unit trace and
    /// positive semidefiniteness.
    pub fn from_entries(m: [[Complex64; 2]; 2]) -> Result<Self> {
        let herm = (m[0][0].im).abs().max((m[1][1].im).abs());
        let off = (m[0][1] - m[1][0].conj()).norm();
        if herm > ALGEBRA_TOL || off > ALGEBRA_TOL {
            return Err(Error::Validation(
                "density matrix is not Hermitian within tolerance".into(),
            ));
        }
        let tr = m[0][0].re + m[1][1].re;
        if (tr - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::Validation(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        let d = Self { m };
        let (lo, _) = d.eigenvalues();
        if lo < -ALGEBRA_TOL {
            return Err(Error::Validation(format!(
                "density matrix has negative eigenvalue {lo}"
            )));
        }
        Ok(d)
    }

    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.m[i][j]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    /// Eigenvalues (ascending) of the Hermitian part.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = 0.5 * (self.m[0][1] + self.m[1][0].conj());
        let mean = 0.5 * (a + d);
        let disc = (0.5 * (a - d)).powi(2) + b.norm_sqr();
        let r = disc.max(0.0).sqrt();
        (mean - r, mean + r)
    }

    pub fn to_bloch(&self) -> BlochVector {
        BlochVector {
            vx: (self.m[0][1] + self.m[1][0]).re,
            vy: (self.m[1][0] - self.m[0][1]).im,
            vz: (self.m[0][0] - self.m[1][1]).re,
        }
    }
}

/// rho = (I + v . sigma) / 2. Rejects vectors outside the closed unit ball.
pub fn bloch_to_density(v: &BlochVector) -> Result<DensityMatrix> {
    v.validate()?;
    Ok(bloch_to_density_unchecked(v))
}

pub(crate) fn bloch_to_density_unchecked(v: &BlochVector) -> DensityMatrix {
    // The complement form keeps the floating-point trace exactly one.
    let p = 0.5 * (1.0 + v.vz);
    DensityMatrix {
        m: [
            [
                Complex64::new(p, 0.0),
                Complex64::new(0.5 * v.vx, -0.5 * v.vy),
            ],
            [
                Complex64::new(0.5 * v.vx, 0.5 * v.vy),
                Complex64::new(1.0 - p, 0.0),
            ],
        ],
    }
}

/// Trace distance D = ||a - b||_1 / 2, via the eigenvalues of the
/// (traceless Hermitian) difference. For a single qubit this equals half
/// the Euclidean distance between the Bloch vectors.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let d00 = a.m[0][0] - b.m[0][0];
    let d11 = a.m[1][1] - b.m[1][1];
    let d01 = a.m[0][1] - b.m[0][1];
    let d10 = a.m[1][0] - b.m[1][0];
    let mean = 0.5 * (d00.re + d11.re);
    let b01 = 0.5 * (d01 + d10.conj());
    let disc = (0.5 * (d00.re - d11.re)).powi(2) + b01.norm_sqr();
    let r = disc.max(0.0).sqrt();
    0.5 * ((mean - r).abs() + (mean + r).abs())
}

/// Purity Tr[rho^2] = (1 + |v|^2) / 2.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = &rho.m;
    m[0][0].norm_sqr() + m[1][1].norm_sqr() + 2.0 * m[0][1].norm_sqr()
}
