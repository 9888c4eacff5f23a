//! Elastoplastic step at frozen damage.
//!
//! The incremental functional is minimized jointly in `(u, π)`. For fixed
//! `u` the minimization over the elementwise plastic strain decouples and has
//! a closed-form solution (a shrinkage of the trial deviatoric strain onto
//! the yield ball). Substituting it back leaves a convex, C¹ functional of
//! `u` alone, which is minimized by a damped Newton method with the
//! algorithmic tangent of the shrinkage.

use log::{debug, trace};
use nalgebra::SMatrix;
use rayon::prelude::*;
use sprs::{CsMat, FillInReduction, SymmetryCheck};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::error::{Error, Result};
use crate::fem::{element_average, element_strain, internal_forces, load_vector, LoadProgram};
use crate::material::MaterialModel;
use crate::mesh::{Mesh, Point};
use crate::tensor::{
    deviatoric_projector, dev, frobenius, to_mandel, volumetric_projector, Mandel4, PlasticStrain, Sym2,
};

/// Outcome of the elementwise plastic minimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalUpdate {
    pub plastic: PlasticStrain,
    pub stress: Sym2,
    /// `dev σ`, formed directly rather than from `stress`, so it keeps full
    /// relative accuracy when the pressure dominates a tiny yield stress.
    pub deviator: Sym2,
    /// Minimized local functional `½ℂ(e−π):(e−π) + σ_Y|π−π_prev|` (J/m³).
    pub energy: f64,
    /// `σ_Y|π − π_prev|` (J/m³).
    pub dissipation: f64,
    /// Derivative of the stress with respect to the total strain (Mandel form).
    pub tangent: Mandel4,
    pub yielding: bool,
}

/// Minimize `½ℂ(ζ)(e−π):(e−π) + σ_Y(ζ)|π−π_prev|` over trace-free `π`.
pub fn local_plastic_update(
    material: &MaterialModel,
    e_total: &Sym2,
    plastic_prev: PlasticStrain,
    zeta: f64,
) -> LocalUpdate {
    let (lambda, mu) = material.lame(zeta);
    let sigma_y = material.yield_stress(zeta);
    let w = dev(e_total) - plastic_prev.to_matrix();
    let w_norm = frobenius(&w);

    if 2.0 * mu * w_norm <= sigma_y {
        let e_el = e_total - plastic_prev.to_matrix();
        return LocalUpdate {
            plastic: plastic_prev,
            stress: material.stress(&e_el, zeta),
            deviator: w * (2.0 * mu),
            energy: material.elastic_energy_density(&e_el, zeta),
            dissipation: 0.0,
            tangent: volumetric_projector() * (lambda + mu) + deviatoric_projector() * (2.0 * mu),
            yielding: false,
        };
    }

    let shrink = 1.0 - sigma_y / (2.0 * mu * w_norm);
    let increment = w * shrink;
    let plastic = plastic_prev + PlasticStrain::from_deviator(&increment);
    let e_el = e_total - plastic.to_matrix();
    let dissipation = sigma_y * frobenius(&increment);
    let n = to_mandel(&w) / w_norm;
    let tangent = volumetric_projector() * (lambda + mu)
        + (deviatoric_projector() - n * n.transpose()) * (sigma_y / w_norm);
    LocalUpdate {
        plastic,
        stress: material.stress(&e_el, zeta),
        deviator: w * (sigma_y / w_norm),
        energy: material.elastic_energy_density(&e_el, zeta) + dissipation,
        dissipation,
        tangent,
        yielding: true,
    }
}

/// Numbering of the displacement components not fixed by Dirichlet data.
#[derive(Clone, Debug)]
pub struct DofMap {
    /// Indexed by `2·node + component`.
    pub free: Vec<Option<usize>>,
    pub n_free: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mask = mesh.dirichlet_mask();
        let mut free = Vec::with_capacity(2 * mesh.n_nodes());
        let mut n_free = 0;
        for &fixed in &mask {
            for _ in 0..2 {
                if fixed {
                    free.push(None);
                } else {
                    free.push(Some(n_free));
                    n_free += 1;
                }
            }
        }
        DofMap { free, n_free }
    }

    pub fn gather(&self, nodal: &[Point]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_free];
        for (d, slot) in self.free.iter().enumerate() {
            if let Some(i) = slot {
                x[*i] = nodal[d / 2][d % 2];
            }
        }
        x
    }

    pub fn scatter(&self, x: &[f64], nodal: &mut [Point]) {
        for (d, slot) in self.free.iter().enumerate() {
            if let Some(i) = slot {
                nodal[d / 2][d % 2] = x[*i];
            }
        }
    }
}

/// The condensed incremental problem of one time step.
pub struct ReducedProblem<'a> {
    pub mesh: &'a Mesh,
    pub material: &'a MaterialModel,
    pub plastic_prev: &'a [PlasticStrain],
    /// Element-average damage of the previous step.
    pub zeta_elem: Vec<f64>,
    /// Nodal external loads at the current time.
    pub external: Vec<Point>,
    /// Treat the plastic strain as frozen (linear elasticity).
    pub elastic_only: bool,
}

pub struct Evaluation {
    pub value: f64,
    /// Internal minus external nodal forces; Dirichlet entries hold the reactions.
    pub forces: Vec<Point>,
    pub updates: Vec<LocalUpdate>,
}

impl<'a> ReducedProblem<'a> {
    pub fn new(
        mesh: &'a Mesh,
        material: &'a MaterialModel,
        plastic_prev: &'a [PlasticStrain],
        zeta_prev: &[f64],
        loads: &LoadProgram,
        mass: &[f64],
        t: f64,
    ) -> Self {
        ReducedProblem {
            mesh,
            material,
            plastic_prev,
            zeta_elem: element_average(mesh, zeta_prev),
            external: load_vector(mesh, mass, loads.body_force_at(t), loads.traction_at(t)),
            elastic_only: false,
        }
    }

    fn local(&self, k: usize, u: &[Point]) -> LocalUpdate {
        let e = element_strain(self.mesh, k, u);
        if self.elastic_only {
            let zeta = self.zeta_elem[k];
            let (lambda, mu) = self.material.lame(zeta);
            let e_el = e - self.plastic_prev[k].to_matrix();
            LocalUpdate {
                plastic: self.plastic_prev[k],
                stress: self.material.stress(&e_el, zeta),
                deviator: dev(&e_el) * (2.0 * mu),
                energy: self.material.elastic_energy_density(&e_el, zeta),
                dissipation: 0.0,
                tangent: volumetric_projector() * (lambda + mu) + deviatoric_projector() * (2.0 * mu),
                yielding: false,
            }
        } else {
            local_plastic_update(self.material, &e, self.plastic_prev[k], self.zeta_elem[k])
        }
    }

    fn load_potential(&self, u: &[Point]) -> f64 {
        let mask = self.mesh.dirichlet_mask();
        self.external
            .iter()
            .zip(u)
            .zip(mask)
            .filter(|(_, fixed)| !fixed)
            .map(|((f, u), _)| f.dot(u))
            .sum()
    }

    pub fn updates(&self, u: &[Point]) -> Vec<LocalUpdate> {
        (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|k| self.local(k, u))
            .collect()
    }

    pub fn value(&self, u: &[Point]) -> f64 {
        let energies: Vec<f64> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|k| self.mesh.element_geometry(k).area * self.local(k, u).energy)
            .collect();
        energies.iter().sum::<f64>() - self.load_potential(u)
    }

    pub fn evaluate(&self, u: &[Point]) -> Evaluation {
        let updates = self.updates(u);
        let value = updates
            .iter()
            .zip(self.mesh.element_geometries())
            .map(|(l, g)| g.area * l.energy)
            .sum::<f64>()
            - self.load_potential(u);
        let stresses: Vec<Sym2> = updates.iter().map(|l| l.stress).collect();
        let mut forces = internal_forces(self.mesh, &stresses);
        let mask = self.mesh.dirichlet_mask();
        for ((f, ext), fixed) in forces.iter_mut().zip(&self.external).zip(mask) {
            if !fixed {
                *f -= ext;
            }
        }
        Evaluation { value, forces, updates }
    }
}

/// Value and gradient of the condensed energy at `u` (Dirichlet values at `t`
/// already written in). The gradient is zero on Dirichlet components.
#[allow(clippy::too_many_arguments)]
pub fn reduced_energy(
    mesh: &Mesh,
    material: &MaterialModel,
    u: &[Point],
    plastic_prev: &[PlasticStrain],
    zeta_prev: &[f64],
    loads: &LoadProgram,
    mass: &[f64],
    t: f64,
) -> (f64, Vec<Point>) {
    let problem = ReducedProblem::new(mesh, material, plastic_prev, zeta_prev, loads, mass, t);
    let eval = problem.evaluate(u);
    let mut gradient = eval.forces;
    for &(n, _) in &mesh.dirichlet_nodes {
        gradient[n] = Point::zeros();
    }
    (eval.value, gradient)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonSettings {
    /// Stop when the free residual falls below this fraction of the force scale.
    pub tol_rel: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol_rel: 1e-9,
            max_iterations: 100,
            armijo: 1e-4,
            max_halvings: 60,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlasticStepResult {
    pub u: Vec<Point>,
    pub plastic: Vec<PlasticStrain>,
    pub stress: Vec<Sym2>,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Reduced energy at the solution (J).
    pub energy: f64,
    /// Reduced energy of every accepted iterate, starting point first.
    pub energy_trace: Vec<f64>,
    /// `Σ |T| σ_Y(ζ̄)|π − π_prev|` (J).
    pub dissipation: f64,
}

type ElementMatrix = SMatrix<f64, 6, 6>;

/// Newton solver for the condensed displacement problem.
///
/// Holds the sparsity pattern of the free-free stiffness block and the
/// symbolic factorization, both reused across iterations and time steps.
pub struct ElastoplasticSolver {
    pub dofs: DofMap,
    pub settings: NewtonSettings,
    matrix: CsMat<f64>,
    /// Per element, the CSR data slot of each local (row, col) pair, if free.
    scatter: Vec<[Option<usize>; 36]>,
    factor: Option<LdlNumeric<f64, usize>>,
}

impl ElastoplasticSolver {
    pub fn new(mesh: &Mesh, settings: NewtonSettings) -> Self {
        let dofs = DofMap::new(mesh);
        let n = dofs.n_free;
        let local_dofs = |tri: &[usize; 3]| -> [Option<usize>; 6] {
            let mut l = [None; 6];
            for a in 0..3 {
                for c in 0..2 {
                    l[2 * a + c] = dofs.free[2 * tri[a] + c];
                }
            }
            l
        };

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in &mesh.triangles {
            let l = local_dofs(tri);
            for p in l.iter().flatten() {
                for q in l.iter().flatten() {
                    rows[*p].push(*q);
                }
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        let data = vec![0.0; indices.len()];

        let scatter = mesh
            .triangles
            .iter()
            .map(|tri| {
                let l = local_dofs(tri);
                let mut slots = [None; 36];
                for p in 0..6 {
                    for q in 0..6 {
                        if let (Some(i), Some(j)) = (l[p], l[q]) {
                            let row = &indices[indptr[i]..indptr[i + 1]];
                            let pos = row.binary_search(&j).expect("pattern covers element");
                            slots[6 * p + q] = Some(indptr[i] + pos);
                        }
                    }
                }
                slots
            })
            .collect();

        ElastoplasticSolver {
            dofs,
            settings,
            matrix: CsMat::new((n, n), indptr, indices, data),
            scatter,
            factor: None,
        }
    }

    fn assemble_tangent(&mut self, mesh: &Mesh, updates: &[LocalUpdate]) {
        let element_matrices: Vec<ElementMatrix> = (0..mesh.n_elements())
            .into_par_iter()
            .map(|k| {
                let g = mesh.element_geometry(k);
                let b = strain_displacement(&g.gradients);
                let ke = b.transpose() * updates[k].tangent * b * g.area;
                (ke + ke.transpose()) * 0.5
            })
            .collect();
        let data = self.matrix.data_mut();
        data.iter_mut().for_each(|v| *v = 0.0);
        for (ke, slots) in element_matrices.iter().zip(&self.scatter) {
            for (s, slot) in slots.iter().enumerate() {
                if let Some(pos) = slot {
                    data[*pos] += ke[(s / 6, s % 6)];
                }
            }
        }
    }

    fn factorize(&mut self) -> Result<()> {
        let view = self.matrix.view();
        match &mut self.factor {
            Some(f) => f.update(view).map_err(|e| Error::LinearSolve(format!("{e:?}")))?,
            None => {
                let f = Ldl::new()
                    .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
                    .check_symmetry(SymmetryCheck::DontCheckSymmetry)
                    .numeric(view)
                    .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
                self.factor = Some(f);
            }
        }
        Ok(())
    }

    /// Minimize the condensed energy starting from `u0` (Dirichlet values
    /// already set). Each accepted iterate does not increase the energy.
    pub fn solve(&mut self, problem: &ReducedProblem<'_>, u0: &[Point]) -> Result<PlasticStepResult> {
        let mesh = problem.mesh;
        let mut u = u0.to_vec();
        let mut eval = problem.evaluate(&u);
        let mut residual = self.dofs.gather(&eval.forces);
        let mut res_norm = norm(&residual);
        let force_scale = res_norm.max(norm_points(&eval.forces));
        let target = self.settings.tol_rel * force_scale;
        let mut trace = vec![res_norm];
        let mut energy_trace = vec![eval.value];
        let mut iterations = 0;

        while res_norm > target {
            if iterations == self.settings.max_iterations {
                return Err(Error::NewtonDiverged {
                    iterations,
                    residual: res_norm,
                    target,
                    trace,
                });
            }
            iterations += 1;
            self.assemble_tangent(mesh, &eval.updates);
            self.factorize()?;
            let mut step: Vec<f64> = self.factor.as_ref().expect("factorized").solve(&residual);
            step.iter_mut().for_each(|v| *v = -*v);
            let mut slope = dot(&residual, &step);
            if !(slope < 0.0) {
                // Tangent direction lost descent to roundoff; use the gradient.
                step = residual.iter().map(|r| -r).collect();
                slope = -res_norm * res_norm;
            }

            let x0 = self.dofs.gather(&u);
            let roundoff = 64.0 * f64::EPSILON * (eval.value.abs() + force_scale * norm(&x0));
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=self.settings.max_halvings {
                let x: Vec<f64> = x0.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
                let mut trial = u.clone();
                self.dofs.scatter(&x, &mut trial);
                let value = problem.value(&trial);
                let decrease_ok = value <= eval.value + self.settings.armijo * alpha * slope;
                // Below roundoff the energy cannot discriminate; require a
                // smaller residual instead.
                let roundoff_ok = (alpha * slope).abs() <= roundoff && value <= eval.value + roundoff;
                if decrease_ok || roundoff_ok {
                    let trial_eval = problem.evaluate(&trial);
                    let trial_res = self.dofs.gather(&trial_eval.forces);
                    if decrease_ok || norm(&trial_res) < res_norm {
                        accepted = Some((trial, trial_eval, trial_res));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((trial, trial_eval, trial_res)) = accepted else {
                return Err(Error::NewtonDiverged {
                    iterations,
                    residual: res_norm,
                    target,
                    trace,
                });
            };
            trace!("newton {iterations}: alpha {alpha:e}, residual {:e}", norm(&trial_res));
            u = trial;
            eval = trial_eval;
            residual = trial_res;
            res_norm = norm(&residual);
            trace.push(res_norm);
            energy_trace.push(eval.value);
        }
        debug!("newton converged in {iterations} iterations, residual {res_norm:e}");

        let dissipation = eval
            .updates
            .iter()
            .zip(mesh.element_geometries())
            .map(|(l, g)| g.area * l.dissipation)
            .sum();
        Ok(PlasticStepResult {
            plastic: eval.updates.iter().map(|l| l.plastic).collect(),
            stress: eval.updates.iter().map(|l| l.stress).collect(),
            u,
            iterations,
            residual_norm: res_norm,
            energy: eval.value,
            energy_trace,
            dissipation,
        })
    }
}

/// Mandel strain-displacement matrix of a P1 triangle, local dofs ordered
/// `(u₀ₓ, u₀ᵧ, u₁ₓ, …)`.
fn strain_displacement(gradients: &[Point; 3]) -> SMatrix<f64, 3, 6> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut b = SMatrix::<f64, 3, 6>::zeros();
    for (a, g) in gradients.iter().enumerate() {
        b[(0, 2 * a)] = g.x;
        b[(2, 2 * a)] = r * g.y;
        b[(1, 2 * a + 1)] = g.y;
        b[(2, 2 * a + 1)] = r * g.x;
    }
    b
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_points(a: &[Point]) -> f64 {
    a.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt()
}

/// Solve one elastoplastic step: warm start from `u_prev` with the Dirichlet
/// data of time `t`, minimize, and recover the plastic strain elementwise.
#[allow(clippy::too_many_arguments)]
pub fn solve_elastoplastic_step(
    solver: &mut ElastoplasticSolver,
    mesh: &Mesh,
    material: &MaterialModel,
    u_prev: &[Point],
    plastic_prev: &[PlasticStrain],
    zeta_prev: &[f64],
    loads: &LoadProgram,
    mass: &[f64],
    t: f64,
) -> Result<PlasticStepResult> {
    let problem = ReducedProblem::new(mesh, material, plastic_prev, zeta_prev, loads, mass, t);
    let mut u0 = u_prev.to_vec();
    crate::fem::apply_dirichlet(mesh, loads, t, &mut u0);
    solver.solve(&problem, &u0)
}

/// Linear-elastic equilibrium with the plastic strain held fixed.
#[allow(clippy::too_many_arguments)]
pub fn solve_elastic(
    solver: &mut ElastoplasticSolver,
    mesh: &Mesh,
    material: &MaterialModel,
    u_guess: &[Point],
    plastic: &[PlasticStrain],
    zeta: &[f64],
    loads: &LoadProgram,
    mass: &[f64],
    t: f64,
) -> Result<PlasticStepResult> {
    let mut problem = ReducedProblem::new(mesh, material, plastic, zeta, loads, mass, t);
    problem.elastic_only = true;
    let mut u0 = u_guess.to_vec();
    crate::fem::apply_dirichlet(mesh, loads, t, &mut u0);
    solver.solve(&problem, &u0)
}

/// Largest `|dev σ| − σ_Y(ζ̄)` over elements.
pub fn max_yield_excess(material: &MaterialModel, stress: &[Sym2], zeta_elem: &[f64]) -> f64 {
    stress
        .iter()
        .zip(zeta_elem)
        .map(|(s, &z)| frobenius(&dev(s)) - material.yield_stress(z))
        .fold(f64::NEG_INFINITY, f64::max)
}
