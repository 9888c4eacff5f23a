//! Damage step at frozen displacement and plastic strain.
//!
//! The damage increment is split as `ζ = ζ_prev + z⁺ − z⁻` with healing
//! `z⁺ ≥ 0` and damaging `z⁻ ≥ 0`, which turns the nonsmooth incremental
//! problem into a bound-constrained convex QP in `z = (z⁺, z⁻)`:
//!
//! ```text
//! minimize   ½ zᵀ H z + cᵀ z
//! subject to 0 ≤ z⁺ ≤ 1 − ζ_prev,   0 ≤ z⁻ ≤ ζ_prev
//! H = [ K + M a₁/τ      −K      ]
//!     [    −K       K + M a₂/τ  ]
//! ```
//!
//! It is solved by gradient projection alternating with preconditioned
//! conjugate gradients on the free variables.

use log::debug;
use rayon::prelude::*;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::fem::spmv;
use crate::material::MaterialModel;
use crate::mesh::Mesh;
use crate::tensor::Sym2;

/// Bound-constrained QP over the stacked nodal vector `(z⁺, z⁻)`.
#[derive(Clone, Debug)]
pub struct DamageQP {
    /// Damage gradient stiffness `K` (nodal, symmetric PSD).
    pub stiffness: CsMat<f64>,
    /// Diagonals added to the healing and damaging blocks.
    pub diag_plus: Vec<f64>,
    pub diag_minus: Vec<f64>,
    /// Linear term, healing block then damaging block.
    pub linear_term: Vec<f64>,
    /// Upper bounds, healing block then damaging block; lower bounds are 0.
    pub upper: Vec<f64>,
    /// Lumped nodal masses, used to report the bound multipliers per unit area.
    pub mass: Vec<f64>,
}

impl DamageQP {
    pub fn n_nodes(&self) -> usize {
        self.diag_plus.len()
    }

    /// `H z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        let (zp, zm) = z.split_at(n);
        let delta: Vec<f64> = zp.iter().zip(zm).map(|(p, m)| p - m).collect();
        let kd = spmv(&self.stiffness, &delta);
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            out[i] = kd[i] + self.diag_plus[i] * zp[i];
            out[n + i] = -kd[i] + self.diag_minus[i] * zm[i];
        }
        out
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = self.apply(z);
        g.iter_mut().zip(&self.linear_term).for_each(|(g, c)| *g += c);
        g
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let hz = self.apply(z);
        z.iter()
            .zip(&hz)
            .zip(&self.linear_term)
            .map(|((z, h), c)| z * (0.5 * h + c))
            .sum()
    }

    /// The Hessian as an explicit sparse matrix.
    pub fn hessian(&self) -> CsMat<f64> {
        let n = self.n_nodes();
        let mut tri = TriMat::with_capacity((2 * n, 2 * n), 4 * self.stiffness.nnz() + 2 * n);
        for (i, row) in self.stiffness.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                tri.add_triplet(i, j, v);
                tri.add_triplet(i, n + j, -v);
                tri.add_triplet(n + i, j, -v);
                tri.add_triplet(n + i, n + j, v);
            }
        }
        for i in 0..n {
            tri.add_triplet(i, i, self.diag_plus[i]);
            tri.add_triplet(n + i, n + i, self.diag_minus[i]);
        }
        tri.to_csr()
    }

    fn hessian_diagonal(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let mut d = vec![0.0; 2 * n];
        for (i, row) in self.stiffness.outer_iterator().enumerate() {
            let kii = row.get(i).copied().unwrap_or(0.0);
            d[i] = kii + self.diag_plus[i];
            d[n + i] = kii + self.diag_minus[i];
        }
        d
    }

    pub fn project(&self, z: &mut [f64]) {
        for (v, &u) in z.iter_mut().zip(&self.upper) {
            *v = v.clamp(0.0, u);
        }
    }

    /// Gradient components that can still decrease the objective inside the box.
    pub fn projected_gradient(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(g)
            .zip(&self.upper)
            .map(|((&z, &g), &u)| {
                if z <= 0.0 && z >= u {
                    0.0
                } else if z <= 0.0 {
                    g.min(0.0)
                } else if z >= u {
                    g.max(0.0)
                } else {
                    g
                }
            })
            .collect()
    }

    /// Tolerance on the projected-gradient norm for a relative tolerance `tol_kkt`.
    pub fn kkt_target(&self, tol_kkt: f64) -> f64 {
        tol_kkt * (1.0 + norm(&self.linear_term))
    }
}

/// Nodal operators of the damage problem that depend only on the mesh.
#[derive(Clone, Debug)]
pub struct DamageOperators {
    pub stiffness: CsMat<f64>,
    pub mass: Vec<f64>,
}

impl DamageOperators {
    pub fn new(mesh: &Mesh, material: &MaterialModel) -> Self {
        DamageOperators {
            stiffness: crate::fem::damage_stiffness(mesh, material.kappa),
            mass: crate::fem::lumped_mass(mesh),
        }
    }
}

/// Build the damage QP for the elastic strains `e_el` of the completed plastic step.
pub fn assemble_damage_qp(
    mesh: &Mesh,
    operators: &DamageOperators,
    e_el: &[Sym2],
    zeta_prev: &[f64],
    tau: f64,
    material: &MaterialModel,
) -> DamageQP {
    let n = mesh.n_nodes();
    let densities: Vec<f64> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| mesh.element_geometry(k).area / 3.0 * material.damage_driving_density(&e_el[k]))
        .collect();
    let mut driving = vec![0.0; n];
    for (tri, d) in mesh.triangles.iter().zip(&densities) {
        for &i in tri {
            driving[i] += d;
        }
    }
    let k_zeta = spmv(&operators.stiffness, zeta_prev);
    let m = &operators.mass;

    let mut linear_term = vec![0.0; 2 * n];
    for i in 0..n {
        let g0 = driving[i] - material.b1 * m[i] + k_zeta[i];
        linear_term[i] = g0;
        linear_term[n + i] = -g0 + material.a3 * m[i];
    }
    let mut upper = Vec::with_capacity(2 * n);
    upper.extend(zeta_prev.iter().map(|z| 1.0 - z));
    upper.extend_from_slice(zeta_prev);

    DamageQP {
        stiffness: operators.stiffness.clone(),
        diag_plus: m.iter().map(|m| m * material.a1 / tau).collect(),
        diag_minus: m.iter().map(|m| m * material.a2 / tau).collect(),
        linear_term,
        upper,
        mass: m.clone(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSettings {
    /// Relative tolerance on the projected-gradient norm.
    pub tol_kkt: f64,
    /// Complementarity tolerance checked after the reduction.
    pub tol_comp: f64,
    /// Outer iteration cap per node.
    pub iterations_per_node: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol_kkt: 1e-10,
            tol_comp: 1e-12,
            iterations_per_node: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

const ARMIJO: f64 = 1e-4;

/// Change of the objective along a step `s` from a point with gradient `g`.
fn model_change(qp: &DamageQP, g: &[f64], s: &[f64]) -> f64 {
    let hs = qp.apply(s);
    dot(g, s) + 0.5 * dot(s, &hs)
}

/// Projected backtracking search along `d` from `z`.
fn projected_search(qp: &DamageQP, z: &[f64], g: &[f64], d: &[f64], alpha0: f64) -> Option<(Vec<f64>, f64)> {
    let mut alpha = alpha0;
    for _ in 0..60 {
        let mut trial: Vec<f64> = z.iter().zip(d).map(|(z, d)| z + alpha * d).collect();
        qp.project(&mut trial);
        let s: Vec<f64> = trial.iter().zip(z).map(|(a, b)| a - b).collect();
        let gs = dot(g, &s);
        if gs < 0.0 {
            let change = model_change(qp, g, &s);
            if change <= ARMIJO * gs {
                return Some((trial, change));
            }
        }
        alpha *= 0.5;
    }
    None
}

fn free_set(qp: &DamageQP, z: &[f64]) -> Vec<bool> {
    z.iter().zip(&qp.upper).map(|(&z, &u)| z > 0.0 && z < u).collect()
}

/// Minimize the QP, starting from the projection of `start`.
pub fn solve_qp_from(qp: &DamageQP, settings: &QpSettings, start: &[f64]) -> Result<QpSolution> {
    let n = 2 * qp.n_nodes();
    let mut z = start.to_vec();
    qp.project(&mut z);
    if qp.objective(&z) > 0.0 {
        z = vec![0.0; n];
    }
    let target = qp.kkt_target(settings.tol_kkt);
    let cap = settings.iterations_per_node * qp.n_nodes().max(1);
    let diag = qp.hessian_diagonal();
    let mut iterations = 0;

    loop {
        let g = qp.gradient(&z);
        let pg = qp.projected_gradient(&z, &g);
        let kkt = norm(&pg);
        if kkt <= target {
            debug!("damage QP converged in {iterations} iterations, KKT {kkt:e}");
            return Ok(QpSolution { z, iterations, kkt_residual: kkt });
        }
        if iterations >= cap {
            return Err(Error::QpDiverged { iterations, kkt });
        }
        iterations += 1;

        // Gradient projection: identify the active face.
        let mut g = g;
        let mut best_decrease = 0.0f64;
        for _ in 0..n.max(1) {
            let pg = qp.projected_gradient(&z, &g);
            let hpg = qp.apply(&pg);
            let curvature = dot(&pg, &hpg);
            let alpha0 = if curvature > 0.0 { dot(&pg, &pg) / curvature } else { 1.0 };
            let d: Vec<f64> = g.iter().map(|g| -g).collect();
            let before = free_set(qp, &z);
            let Some((trial, change)) = projected_search(qp, &z, &g, &d, alpha0) else {
                break;
            };
            z = trial;
            g = qp.gradient(&z);
            let decrease = -change;
            let same_face = free_set(qp, &z) == before;
            if same_face || decrease <= 0.25 * best_decrease {
                break;
            }
            best_decrease = best_decrease.max(decrease);
        }

        // Conjugate gradients on the free variables.
        let free = free_set(qp, &z);
        if !free.iter().any(|&f| f) {
            continue;
        }
        let mask = |v: &mut Vec<f64>| {
            for (v, &f) in v.iter_mut().zip(&free) {
                if !f {
                    *v = 0.0;
                }
            }
        };
        let mut r: Vec<f64> = g.iter().map(|g| -g).collect();
        mask(&mut r);
        let r0 = norm(&r);
        if r0 == 0.0 {
            continue;
        }
        let mut x = vec![0.0; n];
        let mut y: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = y.clone();
        let mut ry = dot(&r, &y);
        for _ in 0..n {
            let mut hp = qp.apply(&p);
            mask(&mut hp);
            let php = dot(&p, &hp);
            if php <= 0.0 {
                break;
            }
            let a = ry / php;
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += a * p);
            r.iter_mut().zip(&hp).for_each(|(r, h)| *r -= a * h);
            if norm(&r) <= (1e-3 * r0).max(0.1 * target) {
                break;
            }
            y = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
            let ry_new = dot(&r, &y);
            let beta = ry_new / ry;
            ry = ry_new;
            p.iter_mut().zip(&y).for_each(|(p, y)| *p = y + beta * *p);
        }
        if let Some((trial, _)) = projected_search(qp, &z, &g, &x, 1.0) {
            z = trial;
        }
    }
}

pub fn solve_qp(qp: &DamageQP, settings: &QpSettings) -> Result<QpSolution> {
    solve_qp_from(qp, settings, &vec![0.0; 2 * qp.n_nodes()])
}

#[derive(Clone, Debug)]
pub struct DamageStepResult {
    pub zeta: Vec<f64>,
    pub z_plus: Vec<f64>,
    pub z_minus: Vec<f64>,
    /// Nodal multipliers of the constraint `ζ ∈ [0,1]`, per unit area:
    /// nonnegative where ζ = 1 binds, nonpositive where ζ = 0 binds.
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl DamageStepResult {
    pub fn max_complementarity(&self) -> f64 {
        self.z_plus
            .iter()
            .zip(&self.z_minus)
            .map(|(p, m)| p * m)
            .fold(0.0, f64::max)
    }
}

/// Remove simultaneous healing and damaging at each node and form ζ.
///
/// Keeps `z⁺ − z⁻` and lowers both parts, so the objective cannot increase.
/// Bounds that are attained in the solution are written exactly.
pub fn reduce_complementarity(qp: &DamageQP, z: &[f64], zeta_prev: &[f64], settings: &QpSettings) -> DamageStepResult {
    let n = qp.n_nodes();
    let g = qp.gradient(z);
    let mut z_plus = Vec::with_capacity(n);
    let mut z_minus = Vec::with_capacity(n);
    let mut zeta = Vec::with_capacity(n);
    let mut multipliers = Vec::with_capacity(n);
    for i in 0..n {
        let (p, m) = (z[i], z[n + i]);
        let common = p.min(m);
        let (p, m) = (p - common, m - common);
        let healed_fully = p > 0.0 && p >= qp.upper[i];
        let damaged_fully = m > 0.0 && m >= qp.upper[n + i];
        let value = if healed_fully {
            1.0
        } else if damaged_fully {
            0.0
        } else {
            (zeta_prev[i] + p - m).clamp(0.0, 1.0)
        };
        let xi = if value == 1.0 && p >= qp.upper[i] {
            (-g[i] / qp.mass[i]).max(0.0)
        } else if value == 0.0 && m >= qp.upper[n + i] {
            (g[n + i] / qp.mass[i]).min(0.0)
        } else {
            0.0
        };
        z_plus.push(p);
        z_minus.push(m);
        zeta.push(value);
        multipliers.push(xi);
    }
    let kkt_residual = norm(&qp.projected_gradient(z, &g));
    let result = DamageStepResult {
        zeta,
        z_plus,
        z_minus,
        multipliers,
        kkt_residual,
        iterations: 0,
    };
    debug_assert!(result.max_complementarity() <= settings.tol_comp);
    result
}

/// One damage step: assemble, solve, reduce.
#[allow(clippy::too_many_arguments)]
pub fn damage_step(
    mesh: &Mesh,
    operators: &DamageOperators,
    e_el: &[Sym2],
    zeta_prev: &[f64],
    tau: f64,
    material: &MaterialModel,
    settings: &QpSettings,
    warm_start: Option<&[f64]>,
) -> Result<DamageStepResult> {
    let qp = assemble_damage_qp(mesh, operators, e_el, zeta_prev, tau, material);
    let solution = match warm_start {
        Some(z0) => solve_qp_from(&qp, settings, z0)?,
        None => solve_qp(&qp, settings)?,
    };
    let mut result = reduce_complementarity(&qp, &solution.z, zeta_prev, settings);
    result.iterations = solution.iterations;
    Ok(result)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
