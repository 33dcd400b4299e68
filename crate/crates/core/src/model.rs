//! Model parameter vector, memory-kernel family, and the generator's
//! matrix representation and damping basis in the Pauli basis.
//!
//! The generator splits as L = L0 + L1 where L0 carries the Hamiltonian
//! H = -omega_z sigma_z / 2 together with generalized amplitude damping
//! (excitation rate gamma_plus, relaxation rate gamma_minus), and L1 is the
//! pure-dephasing channel with rate gamma_z. The two parts commute, so they
//! share one damping basis.

use crate::{Complex64, Error, Result};
use serde::{Deserialize, Serialize};

/// Memory-kernel specification. All kernels are normalized to k(0) = 1:
/// Delta is the unit-integral impulse, Exp has fixed unit amplitude, and
/// Rational2 has a fixed unit leading numerator coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// k(t) = delta(t); Laplace transform 1. The memoryless case.
    Delta,
    /// k(t) = exp(-b0 t); Laplace transform 1 / (s + b0).
    Exp { b0: f64 },
    /// Laplace transform (s + a0) / (s^2 + b1 s + b0). Overdamped or
    /// underdamped in time depending on the sign of B = b1^2 - 4 b0.
    Rational2 { a0: f64, b0: f64, b1: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Delta => Ok(()),
            KernelSpec::Exp { b0 } => {
                if !b0.is_finite() || b0 < 0.0 {
                    Err(Error::Validation(format!(
                        "Exp kernel requires b0 >= 0, got {b0}"
                    )))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Rational2 { a0, b0, b1 } => {
                if !(a0.is_finite() && b0.is_finite() && b1.is_finite()) {
                    return Err(Error::Validation(
                        "Rational2 kernel parameters must be finite".into(),
                    ));
                }
                if b0 <= 0.0 || b1 <= 0.0 {
                    return Err(Error::Validation(format!(
                        "Rational2 kernel requires b0 > 0 and b1 > 0, got b0={b0}, b1={b1}"
                    )));
                }
                if a0 < 0.0 {
                    return Err(Error::Validation(format!(
                        "Rational2 kernel requires a0 >= 0, got {a0}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Laplace transform evaluated at s. Evaluation at a pole of the
    /// rational function is a domain error.
    pub fn laplace(&self, s: Complex64) -> Result<Complex64> {
        match *self {
            KernelSpec::Delta => Ok(Complex64::new(1.0, 0.0)),
            KernelSpec::Exp { b0 } => {
                let den = s + b0;
                if den.norm() == 0.0 {
                    return Err(Error::Domain(format!("kernel transform pole at s = {s}")));
                }
                Ok(den.inv())
            }
            KernelSpec::Rational2 { a0, b0, b1 } => {
                let den = s * s + b1 * s + b0;
                if den.norm() == 0.0 {
                    return Err(Error::Domain(format!("kernel transform pole at s = {s}")));
                }
                Ok((s + a0) / den)
            }
        }
    }

    /// Time-domain kernel value; `None` for the Delta kernel, whose weight
    /// is concentrated at t = 0.
    pub fn time_value(&self, t: f64) -> Option<f64> {
        match *self {
            KernelSpec::Delta => None,
            KernelSpec::Exp { b0 } => Some((-b0 * t).exp()),
            KernelSpec::Rational2 { a0, b0, b1 } => {
                // Inverse transform of (s + a0) / (s^2 + b1 s + b0) with
                // m = sqrt(B) taken complex so one expression covers the
                // overdamped and underdamped branches:
                //   k(t) = e^{-b1 t/2} [ (2 a0 - b1) (t/2) sinhc(m t/2) + cosh(m t/2) ].
                let b = b1 * b1 - 4.0 * b0;
                let m = Complex64::new(b, 0.0).sqrt();
                let half = 0.5 * m * t;
                let val = (2.0 * a0 - b1) * 0.5 * t * sinhc(half) + half.cosh();
                Some((-0.5 * b1 * t).exp() * val.re)
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            KernelSpec::Delta => "delta",
            KernelSpec::Exp { .. } => "exp",
            KernelSpec::Rational2 { .. } => "rational2",
        }
    }
}

/// sinh(z)/z, series-expanded near zero so coalescing kernel roots stay smooth.
pub(crate) fn sinhc(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        Complex64::new(1.0, 0.0) + z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sinh() / z
    }
}

/// Full parameter vector theta of the dynamical model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Detuning of the qubit from the drive, rad/us.
    pub omega_z: f64,
    /// Pure-dephasing rate, 1/us.
    pub gamma_z: f64,
    /// Excitation rate, 1/us.
    pub gamma_plus: f64,
    /// Relaxation rate, 1/us.
    pub gamma_minus: f64,
    pub kernel: KernelSpec,
}

impl ModelParams {
    pub fn new(
        omega_z: f64,
        gamma_z: f64,
        gamma_plus: f64,
        gamma_minus: f64,
        kernel: KernelSpec,
    ) -> Result<Self> {
        let p = Self {
            omega_z,
            gamma_z,
            gamma_plus,
            gamma_minus,
            kernel,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega_z.is_finite() {
            return Err(Error::Validation("omega_z must be finite".into()));
        }
        for (name, v) in [
            ("gamma_z", self.gamma_z),
            ("gamma_plus", self.gamma_plus),
            ("gamma_minus", self.gamma_minus),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.gamma_ratio() >= 1.0 {
            return Err(Error::Validation(format!(
                "detailed balance requires gamma_plus/gamma_minus < 1, got {}",
                self.gamma_ratio()
            )));
        }
        self.kernel.validate()
    }

    /// Gamma_s = gamma_plus + gamma_minus.
    pub fn gamma_sum(&self) -> f64 {
        self.gamma_plus + self.gamma_minus
    }

    /// Gamma_r = gamma_plus / gamma_minus, < 1 by detailed balance.
    pub fn gamma_ratio(&self) -> f64 {
        self.gamma_plus / self.gamma_minus
    }

    /// Stationary z component (gamma_minus - gamma_plus) / Gamma_s.
    pub fn stationary_vz(&self) -> f64 {
        (self.gamma_minus - self.gamma_plus) / self.gamma_sum()
    }
}

/// Flat serialization mirror with unit-bearing key names.
#[derive(Serialize, Deserialize)]
struct FlatParams {
    omega_z_rad_per_us: f64,
    gamma_z_per_us: f64,
    gamma_plus_per_us: f64,
    gamma_minus_per_us: f64,
    kernel: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_a0_per_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_b0_per_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_b0_per_us2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_b1_per_us: Option<f64>,
}

impl Serialize for ModelParams {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut flat = FlatParams {
            omega_z_rad_per_us: self.omega_z,
            gamma_z_per_us: self.gamma_z,
            gamma_plus_per_us: self.gamma_plus,
            gamma_minus_per_us: self.gamma_minus,
            kernel: self.kernel.tag().to_string(),
            kernel_a0_per_us: None,
            kernel_b0_per_us: None,
            kernel_b0_per_us2: None,
            kernel_b1_per_us: None,
        };
        match self.kernel {
            KernelSpec::Delta => {}
            KernelSpec::Exp { b0 } => flat.kernel_b0_per_us = Some(b0),
            KernelSpec::Rational2 { a0, b0, b1 } => {
                flat.kernel_a0_per_us = Some(a0);
                flat.kernel_b0_per_us2 = Some(b0);
                flat.kernel_b1_per_us = Some(b1);
            }
        }
        flat.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let flat = FlatParams::deserialize(de)?;
        let kernel = match flat.kernel.as_str() {
            "delta" => KernelSpec::Delta,
            "exp" => KernelSpec::Exp {
                b0: flat
                    .kernel_b0_per_us
                    .ok_or_else(|| D::Error::custom("exp kernel requires kernel_b0_per_us"))?,
            },
            "rational2" => KernelSpec::Rational2 {
                a0: flat.kernel_a0_per_us.ok_or_else(|| {
                    D::Error::custom("rational2 kernel requires kernel_a0_per_us")
                })?,
                b0: flat.kernel_b0_per_us2.ok_or_else(|| {
                    D::Error::custom("rational2 kernel requires kernel_b0_per_us2")
                })?,
                b1: flat.kernel_b1_per_us.ok_or_else(|| {
                    D::Error::custom("rational2 kernel requires kernel_b1_per_us")
                })?,
            },
            other => return Err(D::Error::custom(format!("unknown kernel tag {other:?}"))),
        };
        let p = ModelParams {
            omega_z: flat.omega_z_rad_per_us,
            gamma_z: flat.gamma_z_per_us,
            gamma_plus: flat.gamma_plus_per_us,
            gamma_minus: flat.gamma_minus_per_us,
            kernel,
        };
        p.validate().map_err(D::Error::custom)?;
        Ok(p)
    }
}

/// Matrix representation of the full generator in the orthonormal Pauli
/// basis F = {I, sx, sy, sz} / sqrt(2): ell_ij = Tr[F_i L(F_j)].
///
/// Row/column order (I, x, y, z). The xy block couples through omega_z,
/// the z sector relaxes to (gamma_minus - gamma_plus)/Gamma_s.
pub fn lindblad_generator_matrix(theta: &ModelParams) -> [[f64; 4]; 4] {
    let a = 0.5 * theta.gamma_sum() + 2.0 * theta.gamma_z;
    let w = theta.omega_z;
    [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, -a, w, 0.0],
        [0.0, -w, -a, 0.0],
        [
            theta.gamma_minus - theta.gamma_plus,
            0.0,
            0.0,
            -theta.gamma_sum(),
        ],
    ]
}

/// Same split as the generator: L0 part (Hamiltonian + amplitude damping).
pub fn generator_matrix_l0(theta: &ModelParams) -> [[f64; 4]; 4] {
    let a = 0.5 * theta.gamma_sum();
    let w = theta.omega_z;
    [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, -a, w, 0.0],
        [0.0, -w, -a, 0.0],
        [
            theta.gamma_minus - theta.gamma_plus,
            0.0,
            0.0,
            -theta.gamma_sum(),
        ],
    ]
}

/// L1 part (pure dephasing).
pub fn generator_matrix_l1(theta: &ModelParams) -> [[f64; 4]; 4] {
    let g = -2.0 * theta.gamma_z;
    [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, g, 0.0, 0.0],
        [0.0, 0.0, g, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]
}

pub type Mat2 = [[Complex64; 2]; 2];

/// Damping basis of the generator: eigenvalues of L, L0, L1 plus the
/// mutually orthonormal right and left eigenoperator pairs.
#[derive(Debug, Clone)]
pub struct DampingBasis {
    /// Eigenvalues of L, ordered {0, -Gs/2 - 2gz + i w, conj, -Gs}.
    pub lambda: [Complex64; 4],
    /// Eigenvalues of L0 in the same order.
    pub lambda0: [Complex64; 4],
    /// Eigenvalues of L1 in the same order.
    pub lambda1: [Complex64; 4],
    /// Right eigenoperators R_i.
    pub right: [Mat2; 4],
    /// Left eigenoperators L_i with Tr(L_i R_j) = delta_ij.
    pub left: [Mat2; 4],
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Closed-form damping basis. The index pairing fixes R_2 = |0><1| with
/// eigenvalue -Gs/2 - 2 gamma_z + i omega_z.
pub fn damping_basis(theta: &ModelParams) -> DampingBasis {
    let gs = theta.gamma_sum();
    let gr = theta.gamma_ratio();
    let gz = theta.gamma_z;
    let w = theta.omega_z;
    let zero = c(0.0);
    let one = c(1.0);

    let lambda0 = [
        zero,
        Complex64::new(-0.5 * gs, w),
        Complex64::new(-0.5 * gs, -w),
        c(-gs),
    ];
    let lambda1 = [zero, c(-2.0 * gz), c(-2.0 * gz), zero];
    let lambda = [
        lambda0[0] + lambda1[0],
        lambda0[1] + lambda1[1],
        lambda0[2] + lambda1[2],
        lambda0[3] + lambda1[3],
    ];

    let q = 1.0 / (1.0 + gr);
    let right = [
        [[c(q), zero], [zero, c(gr * q)]],
        [[zero, one], [zero, zero]],
        [[zero, zero], [one, zero]],
        [[c(-q), zero], [zero, c(q)]],
    ];
    let left = [
        [[one, zero], [zero, one]],
        [[zero, zero], [one, zero]],
        [[zero, one], [zero, zero]],
        [[c(-gr), zero], [zero, one]],
    ];

    DampingBasis {
        lambda,
        lambda0,
        lambda1,
        right,
        left,
    }
}
