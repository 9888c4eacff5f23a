//! Fractional-step time loop, energy ledger and parameter studies.
//!
//! Every step first minimizes in `(u, π)` with the damage of the previous
//! step, then in `ζ` with the new `(u, π)`. Both substeps are exact
//! minimizations of convex problems, so each one lowers the stored energy by
//! at least its dissipation; the ledger checks this step by step and
//! accumulates the discrete energy balance.

use std::path::PathBuf;

use log::{debug, info, warn};
use rayon::prelude::*;

use crate::damage::{damage_step, DamageOperators, QpSettings};
use crate::error::{Error, Result};
use crate::fem::{element_average, element_strain, elastic_strain, load_vector, shifted_displacement, LoadProgram, State};
use crate::material::MaterialModel;
use crate::mesh::{generate_mesh, initial_damage, Geometry, Mesh};
use crate::plasticity::{max_yield_excess, solve_elastic, solve_elastoplastic_step, ElastoplasticSolver, NewtonSettings};
use crate::tensor::{von_mises, Sym2};

/// Step-size control driven by the per-step balance gap.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveStepping {
    /// Gap (relative to the energy scale) above which the step is halved.
    pub gap_threshold: f64,
    pub min_tau: f64,
    pub max_tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub geometry: Geometry,
    pub level: u32,
    pub material: MaterialModel,
    /// Time step (s).
    pub tau: f64,
    /// Final time (s).
    pub final_time: f64,
    pub loads: LoadProgram,
    pub newton: NewtonSettings,
    pub qp: QpSettings,
    /// Relative slack of the per-step energy estimates below which a warning is logged.
    pub energy_warn_tol: f64,
    /// Relative slack below which the run aborts.
    pub energy_abort_tol: f64,
    pub output_dir: Option<PathBuf>,
    /// Snapshot spacing in time (s); zero disables snapshots.
    pub snapshot_interval: f64,
    pub adaptive: Option<AdaptiveStepping>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            geometry: Geometry::default(),
            level: 2,
            material: MaterialModel::default(),
            tau: 1e3,
            final_time: 400e3,
            loads: LoadProgram::default(),
            newton: NewtonSettings::default(),
            qp: QpSettings::default(),
            energy_warn_tol: 1e-10,
            energy_abort_tol: 1e-8,
            output_dir: None,
            snapshot_interval: 20e3,
            adaptive: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.material.validate()?;
        if self.level > 6 {
            return Err(Error::invalid("level", "must be at most 6"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau_s", "must be positive"));
        }
        if !(self.final_time >= self.tau && self.final_time.is_finite()) {
            return Err(Error::invalid("final_time_s", "must be at least tau_s"));
        }
        if self.adaptive.is_none() {
            let ratio = self.final_time / self.tau;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return Err(Error::invalid("final_time_s", "must be an integer multiple of tau_s"));
            }
        }
        if !(self.snapshot_interval >= 0.0) {
            return Err(Error::invalid("snapshot_interval_s", "must be nonnegative"));
        }
        if !(self.newton.tol_rel > 0.0) {
            return Err(Error::invalid("newton_tol", "must be positive"));
        }
        if !(self.qp.tol_kkt > 0.0) {
            return Err(Error::invalid("qp_tol", "must be positive"));
        }
        if !(self.energy_abort_tol >= self.energy_warn_tol && self.energy_warn_tol >= 0.0) {
            return Err(Error::invalid("energy_abort_tol", "must be at least energy_warn_tol"));
        }
        if let Some(a) = &self.adaptive {
            if !(a.gap_threshold > 0.0) {
                return Err(Error::invalid("adaptive_gap_threshold", "must be positive"));
            }
            if !(a.min_tau > 0.0 && a.min_tau <= self.tau && self.tau <= a.max_tau) {
                return Err(Error::invalid("adaptive_min_tau_s", "need 0 < min_tau ≤ tau ≤ max_tau"));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.final_time / self.tau).round() as usize
    }
}

/// Stored energy `E(t, u, π, ζ)` (J).
pub fn stored_energy(
    mesh: &Mesh,
    material: &MaterialModel,
    operators: &DamageOperators,
    state: &State,
    loads: &LoadProgram,
    t: f64,
) -> f64 {
    let zbar = element_average(mesh, &state.zeta);
    let bulk: Vec<f64> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| {
            let e = element_strain(mesh, k, &state.u) - state.plastic[k].to_matrix();
            mesh.element_geometry(k).area * material.elastic_energy_density(&e, zbar[k])
        })
        .collect();
    let bulk: f64 = bulk.iter().sum();
    let microcracks: f64 = operators
        .mass
        .iter()
        .zip(&state.zeta)
        .map(|(m, z)| m * material.stored_damage_energy(*z))
        .sum();
    let k_zeta = crate::fem::spmv(&operators.stiffness, &state.zeta);
    let gradient: f64 = 0.5 * state.zeta.iter().zip(&k_zeta).map(|(a, b)| a * b).sum::<f64>();
    let forces = load_vector(mesh, &operators.mass, loads.body_force_at(t), loads.traction_at(t));
    let shifted = shifted_displacement(mesh, &state.u);
    let load: f64 = forces.iter().zip(&shifted).map(|(f, u)| f.dot(u)).sum();
    bulk - microcracks + gradient - load
}

/// Area-weighted mean of `|dev σ|` over elements centered in the fault stripe.
pub fn reaction_force(mesh: &Mesh, stress: &[Sym2], geometry: &Geometry) -> Result<f64> {
    let mut weighted = 0.0;
    let mut area = 0.0;
    for (k, s) in stress.iter().enumerate() {
        if geometry.in_centered_stripe(mesh.centroid(k).y, geometry.fault_stripe_height) {
            let a = mesh.element_geometry(k).area;
            weighted += a * von_mises(s);
            area += a;
        }
    }
    if area == 0.0 {
        return Err(Error::EmptyStripe {
            height: geometry.fault_stripe_height,
        });
    }
    Ok(weighted / area)
}

/// One row of the energy ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub time: f64,
    pub stored_energy: f64,
    pub plastic_dissipation_cum: f64,
    pub damage_dissipation_cum: f64,
    pub external_work_cum: f64,
    /// `E + cumulative dissipation − E⁰ − cumulative work`; nonpositive up to solver tolerance.
    pub balance_residual: f64,
    pub reaction_force: f64,
    pub min_zeta: f64,
    pub max_plastic_norm: f64,
    pub newton_iterations: usize,
    pub qp_iterations: usize,
    pub tau: f64,
    pub plastic_dissipation: f64,
    pub damage_dissipation: f64,
    pub external_work: f64,
    /// Slack of the plastic and damage substep energy estimates (J).
    pub slack_plastic: f64,
    pub slack_damage: f64,
    pub max_von_mises: f64,
    /// `max(|dev σ| − σ_Y(ζ_prev))` over elements (Pa).
    pub yield_excess: f64,
}

/// What the time loop reports after each step.
pub struct StepView<'a> {
    pub row: &'a LedgerRow,
    pub state: &'a State,
    pub stress: &'a [Sym2],
    pub mesh: &'a Mesh,
    pub snapshot: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: State,
    pub stress: Vec<Sym2>,
    pub energy_start: f64,
    pub energy_mid: f64,
    pub energy_new: f64,
    pub external_work: f64,
    pub plastic_dissipation: f64,
    pub damage_dissipation: f64,
    pub slack_plastic: f64,
    pub slack_damage: f64,
    pub newton_iterations: usize,
    pub qp_iterations: usize,
    pub yield_excess: f64,
    /// Stacked damage increments, reused to warm-start the next QP.
    pub damage_increment: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ledger: Vec<LedgerRow>,
    pub final_state: State,
    /// `(step, time, state)` at the snapshot times, including the initial state.
    pub snapshots: Vec<(usize, f64, State)>,
}

pub struct Simulation {
    pub config: SimulationConfig,
    pub mesh: Mesh,
    pub operators: DamageOperators,
    solver: ElastoplasticSolver,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let mesh = generate_mesh(&config.geometry, config.level);
        Ok(Self::with_mesh(config, mesh))
    }

    /// Use an explicit mesh instead of generating one from the geometry.
    pub fn with_mesh(config: SimulationConfig, mesh: Mesh) -> Self {
        let operators = DamageOperators::new(&mesh, &config.material);
        let solver = ElastoplasticSolver::new(&mesh, config.newton.clone());
        Simulation {
            config,
            mesh,
            operators,
            solver,
        }
    }

    /// Elastic equilibrium at `t = 0` with zero plastic strain and the initial damage.
    pub fn initial_state(&mut self) -> Result<State> {
        let zeta = initial_damage(&self.mesh, &self.config.geometry);
        let state = State::new(&self.mesh, zeta);
        let r = solve_elastic(
            &mut self.solver,
            &self.mesh,
            &self.config.material,
            &state.u,
            &state.plastic,
            &state.zeta,
            &self.config.loads,
            &self.operators.mass,
            0.0,
        )?;
        Ok(State { u: r.u, ..state })
    }

    pub fn stored_energy(&self, state: &State, t: f64) -> f64 {
        stored_energy(&self.mesh, &self.config.material, &self.operators, state, &self.config.loads, t)
    }

    pub fn stress(&self, state: &State) -> Vec<Sym2> {
        crate::fem::element_stresses(&self.mesh, &self.config.material, state)
    }

    /// Advance from `prev` at `t_prev` to `t_prev + tau`.
    ///
    /// `energy_prev` is `E(t_prev, prev)`. Fails if a substep energy estimate
    /// is violated beyond the abort tolerance.
    pub fn step(
        &mut self,
        index: usize,
        prev: &State,
        energy_prev: f64,
        t_prev: f64,
        tau: f64,
        warm_start: Option<&[f64]>,
    ) -> Result<StepOutcome> {
        let t = t_prev + tau;
        let material = self.config.material.clone();
        let loads = self.config.loads.clone();

        let mut start = prev.clone();
        crate::fem::apply_dirichlet(&self.mesh, &loads, t, &mut start.u);
        let energy_start = self.stored_energy(&start, t);
        let external_work = energy_start - energy_prev;

        let plastic = solve_elastoplastic_step(
            &mut self.solver,
            &self.mesh,
            &material,
            &prev.u,
            &prev.plastic,
            &prev.zeta,
            &loads,
            &self.operators.mass,
            t,
        )?;
        let mid = State {
            u: plastic.u,
            plastic: plastic.plastic,
            zeta: prev.zeta.clone(),
        };
        let energy_mid = self.stored_energy(&mid, t);
        let slack_plastic = energy_start - energy_mid - plastic.dissipation;

        let e_el = elastic_strain(&self.mesh, &mid.u, &mid.plastic);
        let damage = damage_step(
            &self.mesh,
            &self.operators,
            &e_el,
            &prev.zeta,
            tau,
            &material,
            &self.config.qp,
            warm_start,
        )?;
        let damage_dissipation: f64 = self
            .operators
            .mass
            .iter()
            .zip(damage.zeta.iter().zip(&prev.zeta))
            .map(|(m, (z, zp))| m * tau * material.dissipation_rate_hat((z - zp) / tau))
            .sum();
        let state = State {
            zeta: damage.zeta,
            ..mid
        };
        let energy_new = self.stored_energy(&state, t);
        let slack_damage = energy_mid - energy_new - damage_dissipation;

        let scale = [energy_start, energy_mid, energy_new, energy_prev]
            .iter()
            .fold(plastic.dissipation + damage_dissipation, |a, e| a.max(e.abs()));
        for (which, slack) in [("plastic", slack_plastic), ("damage", slack_damage)] {
            if slack < -self.config.energy_abort_tol * scale {
                return Err(Error::EnergyEstimate {
                    step: index,
                    which,
                    slack,
                    scale,
                });
            }
            if slack < -self.config.energy_warn_tol * scale {
                warn!("step {index}: {which} energy estimate slack {slack:e} J (scale {scale:e} J)");
            }
        }

        let zbar_prev = element_average(&self.mesh, &prev.zeta);
        let yield_excess = max_yield_excess(&material, &plastic.stress, &zbar_prev);
        let mut damage_increment = damage.z_plus;
        damage_increment.extend_from_slice(&damage.z_minus);
        Ok(StepOutcome {
            state,
            stress: plastic.stress,
            energy_start,
            energy_mid,
            energy_new,
            external_work,
            plastic_dissipation: plastic.dissipation,
            damage_dissipation,
            slack_plastic,
            slack_damage,
            newton_iterations: plastic.iterations,
            qp_iterations: damage.iterations,
            yield_excess,
            damage_increment,
        })
    }

    /// Run the full time interval, reporting every row to `observer`.
    ///
    /// A failing step aborts the run after the rows of all completed steps
    /// have been reported.
    pub fn run(&mut self, observer: &mut dyn FnMut(&StepView<'_>) -> Result<()>) -> Result<RunOutput> {
        let geometry = self.config.geometry.clone();
        let final_time = self.config.final_time;
        let interval = self.config.snapshot_interval;
        let crosses_snapshot = |t_prev: f64, t: f64| {
            interval > 0.0 && ((t + 1e-9 * interval) / interval).floor() > ((t_prev + 1e-9 * interval) / interval).floor()
        };

        let mut state = self.initial_state()?;
        let stress = self.stress(&state);
        let energy0 = self.stored_energy(&state, 0.0);
        let mut row = LedgerRow {
            step: 0,
            time: 0.0,
            stored_energy: energy0,
            plastic_dissipation_cum: 0.0,
            damage_dissipation_cum: 0.0,
            external_work_cum: 0.0,
            balance_residual: 0.0,
            reaction_force: reaction_force(&self.mesh, &stress, &geometry)?,
            min_zeta: min_of(&state.zeta),
            max_plastic_norm: 0.0,
            newton_iterations: 0,
            qp_iterations: 0,
            tau: self.config.tau,
            plastic_dissipation: 0.0,
            damage_dissipation: 0.0,
            external_work: 0.0,
            slack_plastic: 0.0,
            slack_damage: 0.0,
            max_von_mises: stress.iter().map(von_mises).fold(0.0, f64::max),
            yield_excess: max_yield_excess(
                &self.config.material,
                &stress,
                &element_average(&self.mesh, &state.zeta),
            ),
        };
        let snapshot0 = interval > 0.0;
        observer(&StepView {
            row: &row,
            state: &state,
            stress: &stress,
            mesh: &self.mesh,
            snapshot: snapshot0,
        })?;
        let mut ledger = vec![row.clone()];
        let mut snapshots = Vec::new();
        if snapshot0 {
            snapshots.push((0, 0.0, state.clone()));
        }

        let fixed_steps = self.config.n_steps();
        let mut tau = self.config.tau;
        let mut t = 0.0;
        let mut warm: Option<Vec<f64>> = None;
        let mut index = 0;
        loop {
            index += 1;
            let t_prev = t;
            match &self.config.adaptive {
                None => {
                    if index > fixed_steps {
                        break;
                    }
                    t = index as f64 * tau;
                }
                Some(_) => {
                    if t_prev >= final_time * (1.0 - 1e-12) {
                        break;
                    }
                    tau = tau.min(final_time - t_prev);
                    t = if final_time - t_prev - tau <= 1e-9 * tau { final_time } else { t_prev + tau };
                }
            }
            let step_tau = t - t_prev;
            let out = self.step(index, &state, row.stored_energy, t_prev, step_tau, warm.as_deref())?;
            row = LedgerRow {
                step: index,
                time: t,
                stored_energy: out.energy_new,
                plastic_dissipation_cum: row.plastic_dissipation_cum + out.plastic_dissipation,
                damage_dissipation_cum: row.damage_dissipation_cum + out.damage_dissipation,
                external_work_cum: row.external_work_cum + out.external_work,
                balance_residual: 0.0,
                reaction_force: reaction_force(&self.mesh, &out.stress, &geometry)?,
                min_zeta: min_of(&out.state.zeta),
                max_plastic_norm: out.state.plastic.iter().map(|p| p.norm()).fold(0.0, f64::max),
                newton_iterations: out.newton_iterations,
                qp_iterations: out.qp_iterations,
                tau: step_tau,
                plastic_dissipation: out.plastic_dissipation,
                damage_dissipation: out.damage_dissipation,
                external_work: out.external_work,
                slack_plastic: out.slack_plastic,
                slack_damage: out.slack_damage,
                max_von_mises: out.stress.iter().map(von_mises).fold(0.0, f64::max),
                yield_excess: out.yield_excess,
            };
            row.balance_residual = row.stored_energy + row.plastic_dissipation_cum + row.damage_dissipation_cum
                - energy0
                - row.external_work_cum;
            debug!(
                "step {index} t={t:e}: E={:e} F={:e} min ζ={} newton {} qp {}",
                row.stored_energy, row.reaction_force, row.min_zeta, row.newton_iterations, row.qp_iterations
            );
            state = out.state;
            let snapshot = crosses_snapshot(t_prev, t);
            observer(&StepView {
                row: &row,
                state: &state,
                stress: &out.stress,
                mesh: &self.mesh,
                snapshot,
            })?;
            if snapshot {
                snapshots.push((index, t, state.clone()));
            }
            ledger.push(row.clone());
            warm = Some(out.damage_increment);

            if let Some(a) = &self.config.adaptive {
                let gap = out.slack_plastic + out.slack_damage;
                let scale = out.energy_start.abs().max(out.energy_new.abs()).max(f64::MIN_POSITIVE);
                if gap > a.gap_threshold * scale {
                    tau = (0.5 * tau).max(a.min_tau);
                } else if gap < a.gap_threshold * scale / 8.0 {
                    tau = (2.0 * tau).min(a.max_tau).min(final_time);
                }
            }
        }
        info!(
            "run finished: {} steps, final balance residual {:e} J",
            ledger.len() - 1,
            row.balance_residual
        );
        Ok(RunOutput {
            ledger,
            final_state: state,
            snapshots,
        })
    }
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Run the configuration without observing intermediate steps.
pub fn run(config: &SimulationConfig) -> Result<RunOutput> {
    Simulation::new(config.clone())?.run(&mut |_| Ok(()))
}

/// First step at which the reaction force falls more than 50% below its running peak.
pub fn rupture_step(ledger: &[LedgerRow]) -> Option<usize> {
    let mut peak = 0.0f64;
    for row in ledger {
        peak = peak.max(row.reaction_force);
        if peak > 0.0 && row.reaction_force < 0.5 * peak {
            return Some(row.step);
        }
    }
    None
}

/// Runs of the same configuration for several time steps.
pub fn convergence_study(base: &SimulationConfig, taus: &[f64]) -> Result<Vec<(f64, RunOutput)>> {
    taus.iter()
        .map(|&tau| {
            let config = SimulationConfig { tau, ..base.clone() };
            run(&config).map(|out| (tau, out))
        })
        .collect()
}

/// Runs of the same configuration for several damage viscosities `a₂`.
pub fn a2_sweep(base: &SimulationConfig, a2_values: &[f64]) -> Result<Vec<(f64, RunOutput)>> {
    a2_values
        .iter()
        .map(|&a2| {
            let mut config = base.clone();
            config.material.a2 = a2;
            run(&config).map(|out| (a2, out))
        })
        .collect()
}
