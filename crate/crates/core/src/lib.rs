//! Quasistatic Prandtl–Reuss perfect plasticity coupled with gradient damage
//! and healing on a 2-D fault domain.
//!
//! Each time step is split: an elastoplastic minimization at frozen damage
//! (return mapping condensed into a Newton solve for the displacement),
//! followed by a damage minimization at frozen displacement and plastic strain
//! (a bound-constrained QP). An energy ledger tracks the discrete energy
//! (im)balance of the scheme.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod damage;
pub mod error;
pub mod fem;
pub mod io;
pub mod material;
pub mod mesh;
pub mod plasticity;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use fem::{LoadProgram, State};
pub use material::MaterialModel;
pub use mesh::{generate_mesh, initial_damage, Geometry, Mesh};
