//! Damage-dependent isotropic material laws.
//!
//! Lamé parameters and the yield stress interpolate linearly between the fully
//! damaged (`ζ = 0`) and intact (`ζ = 1`) values. The damage dissipation
//! potential is piecewise quadratic with a rate-independent activation term
//! on the damaging branch.

use crate::error::{Error, Result};
use crate::tensor::{ddot, Sym2};

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialModel {
    /// Intact Lamé parameters (Pa).
    pub lambda1: f64,
    pub mu1: f64,
    /// Fully damaged Lamé parameters (Pa).
    pub lambda0: f64,
    pub mu0: f64,
    /// Yield stress at ζ = 1 and ζ = 0 (Pa).
    pub yield1: f64,
    pub yield0: f64,
    /// Healing viscosity (Pa·s).
    pub a1: f64,
    /// Damage viscosity (Pa·s).
    pub a2: f64,
    /// Rate-independent damage activation (Pa).
    pub a3: f64,
    /// Energy stored in microcracks (J/m³).
    pub b1: f64,
    /// Damage gradient coefficient (J/m).
    pub kappa: f64,
}

impl Default for MaterialModel {
    /// The crustal benchmark values: E = 27 GPa, ν = 0.2 intact, ten times
    /// softer when fully damaged, with the moderately viscous damage.
    fn default() -> Self {
        MaterialModel {
            lambda1: 7.5e9,
            mu1: 11.25e9,
            lambda0: 0.75e9,
            mu0: 1.125e9,
            yield1: 2e6,
            yield0: 2e6 * 1e-12,
            a1: 100e9,
            a2: 10e6,
            a3: 10.0,
            b1: 0.001,
            kappa: 0.001,
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lambda1_Pa", self.lambda1),
            ("mu1_Pa", self.mu1),
            ("lambda0_Pa", self.lambda0),
            ("mu0_Pa", self.mu0),
            ("yield1_Pa", self.yield1),
            ("yield0_Pa", self.yield0),
            ("a1_Pa_s", self.a1),
            ("a2_Pa_s", self.a2),
            ("a3_Pa", self.a3),
            ("b1_J_m3", self.b1),
            ("kappa_J_m", self.kappa),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(key, "must be finite"));
            }
        }
        if !(self.lambda0 >= 0.0) {
            return Err(Error::invalid("lambda0_Pa", "must be nonnegative"));
        }
        if self.lambda1 < self.lambda0 {
            return Err(Error::invalid("lambda1_Pa", "must be at least lambda0_Pa"));
        }
        if !(self.mu0 > 0.0) {
            return Err(Error::invalid("mu0_Pa", "must be positive"));
        }
        if self.mu1 < self.mu0 {
            return Err(Error::invalid("mu1_Pa", "must be at least mu0_Pa"));
        }
        if !(self.yield0 > 0.0) {
            return Err(Error::invalid("yield0_Pa", "must be positive"));
        }
        if self.yield1 < self.yield0 {
            return Err(Error::invalid("yield1_Pa", "must be at least yield0_Pa"));
        }
        for (key, v) in [("a1_Pa_s", self.a1), ("a2_Pa_s", self.a2), ("a3_Pa", self.a3), ("b1_J_m3", self.b1)] {
            if v < 0.0 {
                return Err(Error::invalid(key, "must be nonnegative"));
            }
        }
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa_J_m", "must be positive"));
        }
        Ok(())
    }

    /// `(λ(ζ), μ(ζ))`.
    pub fn lame(&self, zeta: f64) -> (f64, f64) {
        debug_assert!((0.0..=1.0).contains(&zeta), "damage {zeta} outside [0,1]");
        (
            (self.lambda1 - self.lambda0) * zeta + self.lambda0,
            (self.mu1 - self.mu0) * zeta + self.mu0,
        )
    }

    /// `½ℂ(ζ)e:e = ½λ(tr e)² + μ|e|²`.
    pub fn elastic_energy_density(&self, e: &Sym2, zeta: f64) -> f64 {
        let (lambda, mu) = self.lame(zeta);
        let tr = e.trace();
        0.5 * lambda * tr * tr + mu * ddot(e, e)
    }

    /// `σ = ℂ(ζ)e`.
    pub fn stress(&self, e: &Sym2, zeta: f64) -> Sym2 {
        let (lambda, mu) = self.lame(zeta);
        Sym2::identity() * (lambda * e.trace()) + e * (2.0 * mu)
    }

    /// Derivative of the elastic energy density with respect to damage.
    ///
    /// Constant in ζ because ℂ is affine.
    pub fn damage_driving_density(&self, e: &Sym2) -> f64 {
        let tr = e.trace();
        0.5 * (self.lambda1 - self.lambda0) * tr * tr + (self.mu1 - self.mu0) * ddot(e, e)
    }

    pub fn yield_stress(&self, zeta: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&zeta), "damage {zeta} outside [0,1]");
        (self.yield1 - self.yield0) * zeta + self.yield0
    }

    /// Dissipation potential `a(ζ̇)`.
    pub fn damage_dissipation(&self, rate: f64) -> f64 {
        let heal = rate.max(0.0);
        let damage = (-rate).max(0.0);
        0.5 * self.a1 * heal * heal + 0.5 * self.a2 * damage * damage + self.a3 * damage
    }

    /// Dissipation rate `â(ζ̇) = ζ̇·∂a(ζ̇)`, single-valued.
    pub fn dissipation_rate_hat(&self, rate: f64) -> f64 {
        let heal = rate.max(0.0);
        let damage = (-rate).max(0.0);
        self.a1 * heal * heal + self.a2 * damage * damage + self.a3 * damage
    }

    /// Stored damage energy density `b(ζ) = b₁ζ`.
    pub fn stored_damage_energy(&self, zeta: f64) -> f64 {
        self.b1 * zeta
    }
}
