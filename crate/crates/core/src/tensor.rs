//! Symmetric 2×2 tensors in plane strain.
//!
//! Deviator and trace are intrinsic 2-D operations. Fourth-order operators
//! act on the orthonormal Mandel coordinates `(a₁₁, a₂₂, √2·a₁₂)`, so that
//! `A:B` is the Euclidean product of the coordinate vectors.

use nalgebra::{Matrix2, Matrix3, Vector3};

pub type Sym2 = Matrix2<f64>;
pub type Mandel = Vector3<f64>;
pub type Mandel4 = Matrix3<f64>;

pub fn sym(a11: f64, a22: f64, a12: f64) -> Sym2 {
    Matrix2::new(a11, a12, a12, a22)
}

pub fn dev(a: &Sym2) -> Sym2 {
    a - Sym2::identity() * (0.5 * a.trace())
}

pub fn frobenius(a: &Sym2) -> f64 {
    a.norm()
}

pub fn ddot(a: &Sym2, b: &Sym2) -> f64 {
    a.component_mul(b).sum()
}

pub fn to_mandel(a: &Sym2) -> Mandel {
    Vector3::new(a[(0, 0)], a[(1, 1)], std::f64::consts::SQRT_2 * a[(0, 1)])
}

pub fn from_mandel(v: &Mandel) -> Sym2 {
    sym(v[0], v[1], v[2] * std::f64::consts::FRAC_1_SQRT_2)
}

/// Frobenius norm of the deviatoric part (the von Mises measure used throughout).
pub fn von_mises(sigma: &Sym2) -> f64 {
    frobenius(&dev(sigma))
}

/// Trace-free plastic strain stored by its two independent components.
///
/// `π₂₂ = −π₁₁` holds by construction, so the trace vanishes exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlasticStrain {
    pub xx: f64,
    pub xy: f64,
}

impl PlasticStrain {
    pub const ZERO: PlasticStrain = PlasticStrain { xx: 0.0, xy: 0.0 };

    pub fn new(xx: f64, xy: f64) -> Self {
        PlasticStrain { xx, xy }
    }

    /// Projects onto trace-free tensors; only the deviator of `a` survives.
    pub fn from_deviator(a: &Sym2) -> Self {
        PlasticStrain {
            xx: 0.5 * (a[(0, 0)] - a[(1, 1)]),
            xy: a[(0, 1)],
        }
    }

    pub fn to_matrix(self) -> Sym2 {
        sym(self.xx, -self.xx, self.xy)
    }

    pub fn norm(self) -> f64 {
        (2.0 * (self.xx * self.xx + self.xy * self.xy)).sqrt()
    }
}

impl std::ops::Add for PlasticStrain {
    type Output = PlasticStrain;
    fn add(self, o: PlasticStrain) -> PlasticStrain {
        PlasticStrain::new(self.xx + o.xx, self.xy + o.xy)
    }
}

impl std::ops::Sub for PlasticStrain {
    type Output = PlasticStrain;
    fn sub(self, o: PlasticStrain) -> PlasticStrain {
        PlasticStrain::new(self.xx - o.xx, self.xy - o.xy)
    }
}

impl std::ops::Mul<f64> for PlasticStrain {
    type Output = PlasticStrain;
    fn mul(self, s: f64) -> PlasticStrain {
        PlasticStrain::new(self.xx * s, self.xy * s)
    }
}

/// Mandel form of `A ↦ tr(A)·I`.
pub fn volumetric_projector() -> Mandel4 {
    Matrix3::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
}

/// Mandel form of `A ↦ dev A`.
pub fn deviatoric_projector() -> Mandel4 {
    Matrix3::identity() - volumetric_projector() * 0.5
}
