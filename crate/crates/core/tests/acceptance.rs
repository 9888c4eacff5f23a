//! End-to-end acceptance checks.
//!
//! Each test writes one `criterion N: PASS|FAIL ...` line straight to stderr,
//! so the verdicts show up in the test log even when output is captured.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plastic_damage::damage::{reduce_complementarity, solve_qp, DamageQP, QpSettings};
use plastic_damage::fem::{apply_dirichlet, damage_stiffness, lumped_mass};
use plastic_damage::mesh::Point;
use plastic_damage::plasticity::{local_plastic_update, reduced_energy};
use plastic_damage::sim::{rupture_step, LedgerRow, Simulation, SimulationConfig};
use plastic_damage::tensor::{PlasticStrain, Sym2};
use plastic_damage::{generate_mesh, Geometry, LoadProgram, MaterialModel, Mesh, State};

fn report(criterion: u32, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion}: {verdict} {detail}");
    assert!(ok, "criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------- mesh

#[test]
fn level2_mesh_counts() {
    let start = Instant::now();
    let mesh = generate_mesh(&Geometry::default(), 2);
    let elapsed = start.elapsed();
    let ok = mesh.n_elements() == 4608 && mesh.n_nodes() == 2373 && elapsed < Duration::from_secs(1);
    report(
        1,
        ok,
        &format!("{} elements, {} nodes in {elapsed:.2?}", mesh.n_elements(), mesh.n_nodes()),
    );
}

// ---------------------------------------------------------------- return mapping

/// Local functional `½ℂ(ζ)(e−π):(e−π) + σ_Y(ζ)|π−π_prev|` for `π = [[a,b],[b,−a]]`,
/// written out from the interpolated moduli.
fn local_functional(m: &MaterialModel, e: &Sym2, prev: (f64, f64), zeta: f64, a: f64, b: f64) -> f64 {
    let lambda = m.lambda0 + zeta * (m.lambda1 - m.lambda0);
    let mu = m.mu0 + zeta * (m.mu1 - m.mu0);
    let sigma_y = m.yield0 + zeta * (m.yield1 - m.yield0);
    let (e11, e22, e12) = (e[(0, 0)] - a, e[(1, 1)] + a, e[(0, 1)] - b);
    let tr = e11 + e22;
    let elastic = 0.5 * lambda * tr * tr + mu * (e11 * e11 + e22 * e22 + 2.0 * e12 * e12);
    let (da, db) = (a - prev.0, b - prev.1);
    elastic + sigma_y * (2.0 * (da * da + db * db)).sqrt()
}

/// Zooming grid search over the two plastic components.
///
/// The minimizer moves π from π_prev by at most |dev e − π_prev|, so the
/// initial box centered at π_prev with that half-width contains it.
fn brute_force_local(m: &MaterialModel, e: &Sym2, prev: (f64, f64), zeta: f64) -> f64 {
    const N: i32 = 10;
    let w = (
        0.5 * (e[(0, 0)] - e[(1, 1)]) - prev.0,
        e[(0, 1)] - prev.1,
    );
    let mut half = 1.01 * (2.0 * (w.0 * w.0 + w.1 * w.1)).sqrt() + 1e-300;
    let mut center = prev;
    let mut best = local_functional(m, e, prev, zeta, prev.0, prev.1);
    for _ in 0..200 {
        let mut best_point = center;
        for i in -N..=N {
            for j in -N..=N {
                let a = center.0 + half * i as f64 / N as f64;
                let b = center.1 + half * j as f64 / N as f64;
                let f = local_functional(m, e, prev, zeta, a, b);
                if f < best {
                    best = f;
                    best_point = (a, b);
                }
            }
        }
        center = best_point;
        half *= 0.3;
        if half < 1e-15 * (center.0.abs() + center.1.abs() + 1e-300) {
            break;
        }
    }
    best
}

#[test]
fn return_mapping_matches_brute_force() {
    let start = Instant::now();
    let m = MaterialModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_energy = 0.0f64;
    let mut worst_yield = f64::NEG_INFINITY;
    let mut worst_consistency = 0.0f64;
    let mut plastic_cases = 0;
    for case in 0..1000 {
        let scale = 10f64.powf(rng.gen_range(-6.0..-2.5));
        let (e11, e22, e12) = (
            scale * rng.gen_range(-1.0..1.0),
            scale * rng.gen_range(-1.0..1.0),
            scale * rng.gen_range(-1.0..1.0),
        );
        let e = Sym2::new(e11, e12, e12, e22);
        let prev = (rng.gen_range(-1e-4..1e-4), rng.gen_range(-1e-4..1e-4));
        let zeta = match case % 10 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..1.0),
        };
        let update = local_plastic_update(&m, &e, PlasticStrain::new(prev.0, prev.1), zeta);
        let oracle = brute_force_local(&m, &e, prev, zeta);
        let value = local_functional(&m, &e, prev, zeta, update.plastic.xx, update.plastic.xy);
        worst_energy = worst_energy.max((value - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
        worst_energy = worst_energy.max((update.energy - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));

        // The deviator must be the one carried by the full stress tensor ...
        let s = update.stress;
        let d = update.deviator;
        let pressure_part = Sym2::identity() * (0.5 * s.trace());
        let mu = m.mu0 + zeta * (m.mu1 - m.mu0);
        let magnitude = s.norm() + 2.0 * mu * (e.norm() + update.plastic.to_matrix().norm());
        worst_consistency = worst_consistency.max((s - pressure_part - d).norm() / magnitude);
        // ... and lie in the yield ball.
        let dev_norm = (d[(0, 0)].powi(2) + d[(1, 1)].powi(2) + 2.0 * d[(0, 1)].powi(2)).sqrt();
        let sigma_y = m.yield0 + zeta * (m.yield1 - m.yield0);
        worst_yield = worst_yield.max(dev_norm / sigma_y - 1.0);
        plastic_cases += update.yielding as usize;
    }
    let elapsed = start.elapsed();
    let ok = worst_energy <= 1e-6 && worst_yield <= 1e-9 && worst_consistency <= 1e-13 && elapsed < Duration::from_secs(30);
    report(
        2,
        ok,
        &format!(
            "1000 triples ({plastic_cases} yielding), worst energy rel. error {worst_energy:.2e}, \
             worst |dev σ|/σ_Y − 1 = {worst_yield:.2e}, deviator vs tensor {worst_consistency:.1e}, {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------- damage QP

/// Small counterclockwise meshes with 3 to 6 nodes, randomly perturbed.
fn tiny_mesh(n: usize, rng: &mut ChaCha8Rng) -> Mesh {
    let (nodes, triangles): (Vec<(f64, f64)>, Vec<[usize; 3]>) = match n {
        3 => (vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], vec![[0, 1, 2]]),
        4 => (
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        ),
        5 => (
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)],
            vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
        ),
        6 => (
            vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 1.0)],
            vec![[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4]],
        ),
        _ => unreachable!(),
    };
    let nodes = nodes
        .into_iter()
        .map(|(x, y)| Point::new(x + rng.gen_range(-0.15..0.15), y + rng.gen_range(-0.15..0.15)))
        .collect();
    Mesh::from_parts(nodes, triangles, Vec::new(), Vec::new(), 0).expect("perturbed mesh stays valid")
}

/// A damage QP with the split structure: `c⁻ = −c⁺ + a₃M`, bounds `1 − ζ_prev` and `ζ_prev`.
fn random_damage_qp(mesh: &Mesh, rng: &mut ChaCha8Rng) -> (DamageQP, Vec<f64>) {
    let n = mesh.n_nodes();
    let mass = lumped_mass(mesh);
    let kappa = 10f64.powf(rng.gen_range(-2.0..0.5));
    let heal = 10f64.powf(rng.gen_range(-1.0..1.0));
    let damage = 10f64.powf(rng.gen_range(-1.0..1.0));
    let a3 = rng.gen_range(0.0..1.0);
    let zeta_prev: Vec<f64> = (0..n)
        .map(|_| match rng.gen_range(0..6) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..1.0),
        })
        .collect();
    let g0: Vec<f64> = (0..n).map(|i| mass[i] * rng.gen_range(-3.0..3.0)).collect();
    let mut linear_term = g0.clone();
    linear_term.extend((0..n).map(|i| -g0[i] + a3 * mass[i]));
    let mut upper: Vec<f64> = zeta_prev.iter().map(|z| 1.0 - z).collect();
    upper.extend_from_slice(&zeta_prev);
    let qp = DamageQP {
        stiffness: damage_stiffness(mesh, kappa),
        diag_plus: mass.iter().map(|m| m * heal).collect(),
        diag_minus: mass.iter().map(|m| m * damage).collect(),
        linear_term,
        upper,
        mass,
    };
    (qp, zeta_prev)
}

fn dense_hessian(qp: &DamageQP) -> DMatrix<f64> {
    let n = qp.n_nodes();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    for (i, row) in qp.stiffness.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            h[(i, j)] += v;
            h[(i, n + j)] -= v;
            h[(n + i, j)] -= v;
            h[(n + i, n + j)] += v;
        }
    }
    for i in 0..n {
        h[(i, i)] += qp.diag_plus[i];
        h[(n + i, n + i)] += qp.diag_minus[i];
    }
    h
}

#[derive(Clone, Copy)]
enum Status {
    Lower,
    Upper,
    Free,
}

/// Minimize with the given variables pinned to their bounds and the rest
/// solved from the stationarity equations; `None` if the candidate is infeasible.
fn candidate(h: &DMatrix<f64>, c: &[f64], upper: &[f64], status: &[Status]) -> Option<(f64, Vec<f64>)> {
    let dim = c.len();
    let mut z = vec![0.0; dim];
    let mut free = Vec::new();
    for (i, s) in status.iter().enumerate() {
        match s {
            Status::Lower => z[i] = 0.0,
            Status::Upper => z[i] = upper[i],
            Status::Free => free.push(i),
        }
    }
    if !free.is_empty() {
        let k = free.len();
        let hff = DMatrix::from_fn(k, k, |a, b| h[(free[a], free[b])]);
        let rhs = DVector::from_fn(k, |a, _| {
            let i = free[a];
            -c[i] - (0..dim).filter(|j| !free.contains(j)).map(|j| h[(i, j)] * z[j]).sum::<f64>()
        });
        let sol = hff.cholesky()?.solve(&rhs);
        for (a, &i) in free.iter().enumerate() {
            let v = sol[a];
            let slack = 1e-12 * (1.0 + upper[i]);
            if v < -slack || v > upper[i] + slack {
                return None;
            }
            z[i] = v.clamp(0.0, upper[i]);
        }
    }
    let zv = DVector::from_column_slice(&z);
    let value = 0.5 * zv.dot(&(h * &zv)) + zv.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
    Some((value, z))
}

/// Exhaustive enumeration of active sets.
///
/// Up to four nodes every variable independently takes one of its three
/// states. For five and six nodes only the per-node complementary patterns are
/// enumerated (at most one of z⁺, z⁻ away from 0), which contains the
/// optimum because lowering a simultaneous pair strictly lowers the objective.
fn enumerate_qp(qp: &DamageQP) -> f64 {
    let n = qp.n_nodes();
    let h = dense_hessian(qp);
    let c = &qp.linear_term;
    let mut best = f64::INFINITY;
    let mut status = vec![Status::Lower; 2 * n];
    if n <= 4 {
        let total = 3usize.pow(2 * n as u32);
        for code in 0..total {
            let mut k = code;
            for s in status.iter_mut() {
                *s = [Status::Lower, Status::Upper, Status::Free][k % 3];
                k /= 3;
            }
            if let Some((v, _)) = candidate(&h, c, &qp.upper, &status) {
                best = best.min(v);
            }
        }
    } else {
        let patterns = [
            (Status::Lower, Status::Lower),
            (Status::Free, Status::Lower),
            (Status::Upper, Status::Lower),
            (Status::Lower, Status::Free),
            (Status::Lower, Status::Upper),
        ];
        for code in 0..5usize.pow(n as u32) {
            let mut k = code;
            for i in 0..n {
                let (p, m) = patterns[k % 5];
                status[i] = p;
                status[n + i] = m;
                k /= 5;
            }
            if let Some((v, _)) = candidate(&h, c, &qp.upper, &status) {
                best = best.min(v);
            }
        }
    }
    best
}

#[test]
fn damage_qp_matches_active_set_enumeration() {
    let start = Instant::now();
    let settings = QpSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_objective = 0.0f64;
    let mut worst_complementarity = 0.0f64;
    let mut failures = 0;
    for case in 0..200 {
        let n = 3 + case % 4;
        let mesh = tiny_mesh(n, &mut rng);
        let (qp, zeta_prev) = random_damage_qp(&mesh, &mut rng);
        let oracle = enumerate_qp(&qp);
        match solve_qp(&qp, &settings) {
            Ok(sol) => {
                let value = qp.objective(&sol.z);
                let scale = oracle.abs().max(1e-12 * qp.linear_term.iter().map(|c| c * c).sum::<f64>().sqrt());
                worst_objective = worst_objective.max((value - oracle).abs() / scale);
                let reduced = reduce_complementarity(&qp, &sol.z, &zeta_prev, &settings);
                worst_complementarity = worst_complementarity.max(reduced.max_complementarity());
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = start.elapsed();
    let ok = failures == 0
        && worst_objective <= 1e-8
        && worst_complementarity <= 1e-12
        && elapsed < Duration::from_secs(60);
    report(
        3,
        ok,
        &format!(
            "200 QPs with 3-6 nodes, {failures} solver failures, worst objective rel. error \
             {worst_objective:.2e}, worst z⁺z⁻ {worst_complementarity:.2e}, {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------- gradient

#[test]
fn reduced_energy_gradient_matches_finite_differences() {
    let geometry = Geometry::default();
    let mesh = generate_mesh(&geometry, 0);
    let material = MaterialModel::default();
    let loads = LoadProgram {
        body_force: Point::new(3.0, -20.0),
        traction: Point::new(1e3, -5e2),
        ..LoadProgram::default()
    };
    let mass = lumped_mass(&mesh);
    let fixed = mesh.dirichlet_mask();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let amplitude = 10f64.powf(rng.gen_range(-3.5..-2.5));
        let t = rng.gen_range(0.0..400e3);
        let mut u: Vec<Point> = (0..mesh.n_nodes())
            .map(|_| Point::new(amplitude * rng.gen_range(-1.0..1.0), amplitude * rng.gen_range(-1.0..1.0)))
            .collect();
        apply_dirichlet(&mesh, &loads, t, &mut u);
        let plastic: Vec<PlasticStrain> = (0..mesh.n_elements())
            .map(|_| PlasticStrain::new(rng.gen_range(-5e-5..5e-5), rng.gen_range(-5e-5..5e-5)))
            .collect();
        let zeta: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let energy = |u: &[Point]| reduced_energy(&mesh, &material, u, &plastic, &zeta, &loads, &mass, t).0;
        let (_, gradient) = reduced_energy(&mesh, &material, &u, &plastic, &zeta, &loads, &mass, t);

        let h = 1e-6 * amplitude;
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for i in (0..mesh.n_nodes()).filter(|&i| !fixed[i]) {
            for c in 0..2 {
                let mut up = u.clone();
                let mut down = u.clone();
                up[i][c] += h;
                down[i][c] -= h;
                let fd = (energy(&up) - energy(&down)) / (2.0 * h);
                err2 += (fd - gradient[i][c]).powi(2);
                norm2 += gradient[i][c].powi(2);
            }
        }
        worst = worst.max((err2 / norm2).sqrt());
    }
    report(4, worst < 1e-5, &format!("50 random level-0 states, worst relative error {worst:.2e}"));
}

// ---------------------------------------------------------------- simulation runs

/// A finished run plus invariants checked on every intermediate state.
struct Record {
    label: String,
    ledger: Vec<LedgerRow>,
    elapsed: Duration,
    zeta_in_range: bool,
    trace_free: bool,
}

fn record(label: &str, config: SimulationConfig) -> Record {
    let start = Instant::now();
    let mut sim = Simulation::new(config).expect("valid configuration");
    let mut zeta_in_range = true;
    let mut trace_free = true;
    let out = sim
        .run(&mut |view| {
            zeta_in_range &= view.state.zeta.iter().all(|z| (0.0..=1.0).contains(z));
            trace_free &= view.state.plastic.iter().all(|p| p.to_matrix().trace() == 0.0);
            Ok(())
        })
        .unwrap_or_else(|e| panic!("{label}: {e}"));
    Record {
        label: label.to_string(),
        ledger: out.ledger,
        elapsed: start.elapsed(),
        zeta_in_range,
        trace_free,
    }
}

fn level0(final_time: f64, tau: f64) -> SimulationConfig {
    SimulationConfig {
        level: 0,
        final_time,
        tau,
        snapshot_interval: 0.0,
        ..SimulationConfig::default()
    }
}

fn short_level0_run() -> &'static Record {
    static RUN: OnceLock<Record> = OnceLock::new();
    RUN.get_or_init(|| record("level 0, T = 100 ks, τ = 1 ks", level0(100e3, 1e3)))
}

fn convergence_runs() -> &'static [Record] {
    static RUNS: OnceLock<Vec<Record>> = OnceLock::new();
    RUNS.get_or_init(|| {
        [10e3, 5e3, 1e3]
            .iter()
            .map(|&tau| record(&format!("level 0, τ = {} ks", tau / 1e3), level0(400e3, tau)))
            .collect()
    })
}

fn viscosity_runs() -> &'static [Record] {
    static RUNS: OnceLock<Vec<Record>> = OnceLock::new();
    RUNS.get_or_init(|| {
        [10e6, 0.1e6]
            .iter()
            .map(|&a2| {
                let mut config = SimulationConfig {
                    snapshot_interval: 0.0,
                    ..SimulationConfig::default()
                };
                config.material.a2 = a2;
                record(&format!("level 2, a₂ = {a2:e} Pa·s"), config)
            })
            .collect()
    })
}

/// Energy scale of step `k`, from the same energies the step itself compares.
fn step_scale(prev: &LedgerRow, row: &LedgerRow) -> f64 {
    let start = prev.stored_energy + row.external_work;
    let mid = start - row.plastic_dissipation - row.slack_plastic;
    [start, mid, row.stored_energy, prev.stored_energy]
        .iter()
        .fold(row.plastic_dissipation + row.damage_dissipation, |a, e| a.max(e.abs()))
}

#[test]
fn per_step_energy_estimates_hold() {
    let run = short_level0_run();
    let mut worst_plastic = f64::INFINITY;
    let mut worst_damage = f64::INFINITY;
    for pair in run.ledger.windows(2) {
        let scale = step_scale(&pair[0], &pair[1]);
        worst_plastic = worst_plastic.min(pair[1].slack_plastic / scale);
        worst_damage = worst_damage.min(pair[1].slack_damage / scale);
    }
    let steps = run.ledger.len() - 1;
    let ok = steps == 100
        && worst_plastic >= -1e-8
        && worst_damage >= -1e-8
        && run.elapsed < Duration::from_secs(120);
    report(
        5,
        ok,
        &format!(
            "{steps} steps, min relative slack: plastic {worst_plastic:.2e}, damage {worst_damage:.2e}, {:.2?}",
            run.elapsed
        ),
    );
}

#[test]
fn balance_gap_shrinks_with_time_step() {
    let runs = convergence_runs();
    let gaps: Vec<f64> = runs
        .iter()
        .map(|r| r.ledger.last().expect("nonempty ledger").balance_residual.abs())
        .collect();
    let elapsed: Duration = runs.iter().map(|r| r.elapsed).sum();
    let ok = gaps.windows(2).all(|w| w[1] < w[0]) && elapsed < Duration::from_secs(600);
    let detail = runs
        .iter()
        .zip(&gaps)
        .map(|(r, g)| format!("{}: |gap| {g:.4e} J", r.label))
        .collect::<Vec<_>>()
        .join("; ");
    report(6, ok, &format!("{detail}; {elapsed:.2?}"));
}

#[test]
fn stick_slip_and_viscosity_ordering() {
    let runs = viscosity_runs();
    let ruptures: Vec<Option<usize>> = runs.iter().map(|r| rupture_step(&r.ledger)).collect();
    let rises = runs.iter().zip(&ruptures).all(|(r, rupture)| match rupture {
        Some(k) => {
            let peak = r.ledger[..*k].iter().map(|row| row.reaction_force).fold(0.0, f64::max);
            peak > r.ledger[0].reaction_force
        }
        None => false,
    });
    let within = ruptures.iter().all(|r| matches!(r, Some(k) if *k <= 400));
    let earlier = matches!((ruptures[0], ruptures[1]), (Some(slow), Some(fast)) if fast < slow);
    let elapsed: Duration = runs.iter().map(|r| r.elapsed).sum();
    let ok = rises && within && earlier && elapsed < Duration::from_secs(1800);
    let detail = runs
        .iter()
        .zip(&ruptures)
        .map(|(r, k)| format!("{}: first drop at step {k:?}", r.label))
        .collect::<Vec<_>>()
        .join("; ");
    report(7, ok, &format!("{detail}; force rises first: {rises}; {elapsed:.2?}"));
}

fn bitwise_equal(a: &[LedgerRow], b: &[LedgerRow]) -> bool {
    let bits = |r: &LedgerRow| {
        [
            r.time,
            r.stored_energy,
            r.plastic_dissipation_cum,
            r.damage_dissipation_cum,
            r.external_work_cum,
            r.balance_residual,
            r.reaction_force,
            r.min_zeta,
            r.max_plastic_norm,
            r.tau,
            r.plastic_dissipation,
            r.damage_dissipation,
            r.external_work,
            r.slack_plastic,
            r.slack_damage,
            r.max_von_mises,
            r.yield_excess,
        ]
        .map(f64::to_bits)
    };
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.step == y.step
                && x.newton_iterations == y.newton_iterations
                && x.qp_iterations == y.qp_iterations
                && bits(x) == bits(y)
        })
}

fn single_worker<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(f)
}

#[test]
fn invariants_across_runs() {
    let yield_tol = 1e-6 * MaterialModel::default().yield1;
    let mut runs: Vec<&Record> = vec![short_level0_run()];
    runs.extend(convergence_runs());
    runs.extend(viscosity_runs());
    let mut problems = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    for r in &runs {
        if !r.zeta_in_range {
            problems.push(format!("{}: ζ outside [0,1]", r.label));
        }
        if !r.trace_free {
            problems.push(format!("{}: nonzero tr π", r.label));
        }
        for row in &r.ledger {
            if !(row.plastic_dissipation >= 0.0 && row.damage_dissipation >= 0.0) {
                problems.push(format!("{}: negative dissipation at step {}", r.label, row.step));
            }
            worst_excess = worst_excess.max(row.yield_excess);
        }
    }
    if worst_excess > yield_tol {
        problems.push(format!("yield excess {worst_excess:e} Pa"));
    }

    let repeat = |config: SimulationConfig| single_worker(|| record("repeat", config).ledger);
    let mut repeated = 0;
    for (config, reference) in [(level0(100e3, 1e3), &short_level0_run().ledger)]
        .into_iter()
        .chain([10e3, 5e3, 1e3].iter().zip(convergence_runs()).map(|(&tau, r)| (level0(400e3, tau), &r.ledger)))
    {
        let first = repeat(config.clone());
        let second = repeat(config);
        if !bitwise_equal(&first, &second) {
            problems.push("repeated single-worker ledgers differ".into());
        }
        if !bitwise_equal(&first, reference) {
            problems.push("single-worker ledger differs from the pooled run".into());
        }
        repeated += 1;
    }

    report(
        8,
        problems.is_empty(),
        &format!(
            "{} runs, max yield excess {worst_excess:.2e} Pa, {repeated} configurations repeated bit for bit{}",
            runs.len(),
            if problems.is_empty() { String::new() } else { format!(": {}", problems.join("; ")) }
        ),
    );
}

// ---------------------------------------------------------------- null test

#[test]
fn zero_load_keeps_everything_constant() {
    let config = SimulationConfig {
        geometry: Geometry {
            damaged_stripe_height: 0.0,
            ..Geometry::default()
        },
        level: 0,
        final_time: 100e3,
        loads: LoadProgram::at_rest(),
        snapshot_interval: 0.0,
        ..SimulationConfig::default()
    };
    let mut sim = Simulation::new(config).expect("valid configuration");
    let mut states: Vec<State> = Vec::new();
    let out = sim
        .run(&mut |view| {
            states.push(view.state.clone());
            Ok(())
        })
        .expect("run");
    let first = &states[0];
    let zeta_one = first.zeta.iter().all(|&z| z == 1.0);
    let max_state_change = states
        .iter()
        .map(|s| {
            let du = s.u.iter().zip(&first.u).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let dp = s
                .plastic
                .iter()
                .zip(&first.plastic)
                .map(|(a, b)| (a.xx - b.xx).abs().max((a.xy - b.xy).abs()))
                .fold(0.0, f64::max);
            let dz = s.zeta.iter().zip(&first.zeta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            du.max(dp).max(dz)
        })
        .fold(0.0, f64::max);
    let row0 = &out.ledger[0];
    let energy_scale = row0.stored_energy.abs();
    let max_ledger_change = out.ledger[1..]
        .iter()
        .map(|r| {
            [
                (r.stored_energy - row0.stored_energy).abs() / energy_scale,
                r.plastic_dissipation_cum.abs() / energy_scale,
                r.damage_dissipation_cum.abs() / energy_scale,
                r.external_work_cum.abs() / energy_scale,
                r.balance_residual.abs() / energy_scale,
                (r.reaction_force - row0.reaction_force).abs(),
                (r.min_zeta - row0.min_zeta).abs(),
                (r.max_plastic_norm - row0.max_plastic_norm).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let steps = out.ledger.len() - 1;
    let ok = steps == 100 && zeta_one && max_state_change <= 1e-15 && max_ledger_change <= 1e-15;
    report(
        9,
        ok,
        &format!("{steps} steps, max state change {max_state_change:.1e}, max ledger change {max_ledger_change:.1e}"),
    );
}

