//! P1/P0 finite-element kernels.
//!
//! Displacement and damage are continuous piecewise linear, plastic strain is
//! elementwise constant. Dirichlet data are imposed as nodal values; the
//! Dirichlet extension is the P1 function carrying those values and vanishing
//! at all other nodes.

use rayon::prelude::*;
use sprs::{CsMat, TriMat};

use crate::material::MaterialModel;
use crate::mesh::{Mesh, Point};
use crate::tensor::{PlasticStrain, Sym2};

/// Nodal displacement (with Dirichlet values written in), elementwise plastic
/// strain, nodal damage.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: Vec<Point>,
    pub plastic: Vec<PlasticStrain>,
    pub zeta: Vec<f64>,
}

impl State {
    pub fn new(mesh: &Mesh, zeta: Vec<f64>) -> Self {
        assert_eq!(zeta.len(), mesh.n_nodes());
        State {
            u: vec![Point::zeros(); mesh.n_nodes()],
            plastic: vec![PlasticStrain::ZERO; mesh.n_elements()],
            zeta,
        }
    }
}

/// Plate motion plus body force and Neumann traction, each affine in time.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadProgram {
    /// Horizontal plate speed (m/s): `+v` on top, `−v` on the bottom.
    pub plate_velocity: f64,
    /// N/m³ and N/(m³·s).
    pub body_force: Point,
    pub body_force_rate: Point,
    /// N/m² and N/(m²·s), applied on every traction edge.
    pub traction: Point,
    pub traction_rate: Point,
}

impl Default for LoadProgram {
    fn default() -> Self {
        LoadProgram {
            plate_velocity: 1e-8,
            body_force: Point::zeros(),
            body_force_rate: Point::zeros(),
            traction: Point::zeros(),
            traction_rate: Point::zeros(),
        }
    }
}

impl LoadProgram {
    pub fn at_rest() -> Self {
        LoadProgram {
            plate_velocity: 0.0,
            ..LoadProgram::default()
        }
    }

    pub fn body_force_at(&self, t: f64) -> Point {
        self.body_force + self.body_force_rate * t
    }

    pub fn traction_at(&self, t: f64) -> Point {
        self.traction + self.traction_rate * t
    }

    pub fn plate_displacement(&self, sign: f64, t: f64) -> Point {
        Point::new(sign * self.plate_velocity * t, 0.0)
    }

    pub fn plate_velocity(&self, sign: f64) -> Point {
        Point::new(sign * self.plate_velocity, 0.0)
    }

    pub fn is_time_independent(&self) -> bool {
        self.plate_velocity == 0.0
            && self.body_force_rate == Point::zeros()
            && self.traction_rate == Point::zeros()
    }
}

/// Write the plate displacements at time `t` into the nodal field.
pub fn apply_dirichlet(mesh: &Mesh, loads: &LoadProgram, t: f64, u: &mut [Point]) {
    for &(n, plate) in &mesh.dirichlet_nodes {
        u[n] = loads.plate_displacement(plate.sign(), t);
    }
}

/// Displacement with the Dirichlet nodal values removed.
pub fn shifted_displacement(mesh: &Mesh, u: &[Point]) -> Vec<Point> {
    let mut v = u.to_vec();
    for &(n, _) in &mesh.dirichlet_nodes {
        v[n] = Point::zeros();
    }
    v
}

/// `e(u) = ½(∇u + ∇uᵀ)` on one element.
pub fn element_strain(mesh: &Mesh, element: usize, u: &[Point]) -> Sym2 {
    let g = mesh.element_geometry(element);
    let tri = mesh.triangles[element];
    let mut grad = Sym2::zeros();
    for (a, &n) in tri.iter().enumerate() {
        // grad[(i, j)] = ∂u_i/∂x_j
        grad += u[n] * g.gradients[a].transpose();
    }
    (grad + grad.transpose()) * 0.5
}

pub fn total_strain(mesh: &Mesh, u: &[Point]) -> Vec<Sym2> {
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| element_strain(mesh, k, u))
        .collect()
}

/// Element averages of a nodal field.
pub fn element_average(mesh: &Mesh, nodal: &[f64]) -> Vec<f64> {
    mesh.triangles
        .iter()
        .map(|t| (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / 3.0)
        .collect()
}

/// Elastic strain `e(u) − π` per element.
pub fn elastic_strain(mesh: &Mesh, u: &[Point], plastic: &[PlasticStrain]) -> Vec<Sym2> {
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| element_strain(mesh, k, u) - plastic[k].to_matrix())
        .collect()
}

/// Stress `ℂ(ζ̄)(e(u) − π)` per element, with the element-average damage.
pub fn element_stresses(mesh: &Mesh, material: &MaterialModel, state: &State) -> Vec<Sym2> {
    let zbar = element_average(mesh, &state.zeta);
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| {
            let e = element_strain(mesh, k, &state.u) - state.plastic[k].to_matrix();
            material.stress(&e, zbar[k])
        })
        .collect()
}

/// Nodal internal forces `Σ_T |T| σ_T ∇φ_a`.
pub fn internal_forces(mesh: &Mesh, stresses: &[Sym2]) -> Vec<Point> {
    let mut f = vec![Point::zeros(); mesh.n_nodes()];
    for (k, tri) in mesh.triangles.iter().enumerate() {
        let g = mesh.element_geometry(k);
        for (a, &n) in tri.iter().enumerate() {
            f[n] += stresses[k] * g.gradients[a] * g.area;
        }
    }
    f
}

/// `K` with `ζᵀKζ = ∫ κ|∇ζ|²` for P1 fields.
pub fn damage_stiffness(mesh: &Mesh, kappa: f64) -> CsMat<f64> {
    let n = mesh.n_nodes();
    let mut tri = TriMat::with_capacity((n, n), 9 * mesh.n_elements());
    for (k, t) in mesh.triangles.iter().enumerate() {
        let g = mesh.element_geometry(k);
        for a in 0..3 {
            for b in 0..3 {
                tri.add_triplet(t[a], t[b], kappa * g.area * g.gradients[a].dot(&g.gradients[b]));
            }
        }
    }
    tri.to_csr()
}

/// `y = A x` for a CSR matrix.
pub fn spmv(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert!(a.is_csr());
    a.outer_iterator()
        .map(|row| row.iter().map(|(j, v)| v * x[j]).sum())
        .collect()
}

/// Row-lumped P1 mass: each node receives a third of every adjacent area.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.n_nodes()];
    for (k, t) in mesh.triangles.iter().enumerate() {
        let third = mesh.element_geometry(k).area / 3.0;
        for &n in t {
            m[n] += third;
        }
    }
    m
}

/// Nodal work-conjugate of a uniform body force and a uniform edge traction.
pub fn load_vector(mesh: &Mesh, mass: &[f64], body: Point, traction: Point) -> Vec<Point> {
    let mut f: Vec<Point> = mass.iter().map(|&m| body * m).collect();
    for e in &mesh.neumann_edges {
        let len = (mesh.nodes[e.nodes[1]] - mesh.nodes[e.nodes[0]]).norm();
        for &n in &e.nodes {
            f[n] += traction * (0.5 * len);
        }
    }
    f
}

/// `∂_t E` on the current state: the power of the plate reactions on the
/// plate velocities, minus the rates of the body force and traction against
/// the (shifted) displacement.
pub fn external_work_rate(
    mesh: &Mesh,
    material: &MaterialModel,
    state: &State,
    loads: &LoadProgram,
    mass: &[f64],
) -> f64 {
    let stresses = element_stresses(mesh, material, state);
    let reactions = internal_forces(mesh, &stresses);
    let boundary: f64 = mesh
        .dirichlet_nodes
        .iter()
        .map(|&(n, plate)| reactions[n].dot(&loads.plate_velocity(plate.sign())))
        .sum();
    let rates = load_vector(mesh, mass, loads.body_force_rate, loads.traction_rate);
    let shifted = shifted_displacement(mesh, &state.u);
    let load: f64 = rates.iter().zip(&shifted).map(|(f, u)| f.dot(u)).sum();
    boundary - load
}
