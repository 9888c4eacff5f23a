//! Flat TOML configuration with unit-suffixed keys.
//!
//! Every key is optional; missing keys take the benchmark defaults. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::sim::{AdaptiveStepping, SimulationConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct ConfigFile {
    level: Option<u32>,
    tau_s: Option<f64>,
    final_time_s: Option<f64>,

    width_m: Option<f64>,
    height_m: Option<f64>,
    damaged_stripe_m: Option<f64>,
    fault_stripe_m: Option<f64>,

    lambda1_Pa: Option<f64>,
    mu1_Pa: Option<f64>,
    lambda0_Pa: Option<f64>,
    mu0_Pa: Option<f64>,
    yield1_Pa: Option<f64>,
    yield0_Pa: Option<f64>,
    a1_Pa_s: Option<f64>,
    a2_Pa_s: Option<f64>,
    a3_Pa: Option<f64>,
    b1_J_m3: Option<f64>,
    kappa_J_m: Option<f64>,

    plate_velocity_m_s: Option<f64>,
    body_force_N_m3: Option<[f64; 2]>,
    body_force_rate_N_m3_s: Option<[f64; 2]>,
    traction_Pa: Option<[f64; 2]>,
    traction_rate_Pa_s: Option<[f64; 2]>,

    newton_tol: Option<f64>,
    newton_max_iterations: Option<usize>,
    qp_tol: Option<f64>,
    qp_complementarity_tol: Option<f64>,
    qp_iterations_per_node: Option<usize>,
    energy_warn_tol: Option<f64>,
    energy_abort_tol: Option<f64>,

    output_dir: Option<PathBuf>,
    snapshot_interval_s: Option<f64>,

    adaptive: Option<bool>,
    adaptive_gap_threshold: Option<f64>,
    adaptive_min_tau_s: Option<f64>,
    adaptive_max_tau_s: Option<f64>,
}

pub fn parse_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}

/// Parse configuration text; `path` is only used in error messages.
pub fn parse_config_str(text: &str, path: &Path) -> Result<SimulationConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let mut c = SimulationConfig::default();
    macro_rules! set {
        ($($src:ident => $($dst:ident).+),* $(,)?) => {
            $(if let Some(v) = file.$src { c.$($dst).+ = v; })*
        };
    }
    set! {
        level => level,
        tau_s => tau,
        final_time_s => final_time,
        width_m => geometry.width,
        height_m => geometry.height,
        damaged_stripe_m => geometry.damaged_stripe_height,
        fault_stripe_m => geometry.fault_stripe_height,
        lambda1_Pa => material.lambda1,
        mu1_Pa => material.mu1,
        lambda0_Pa => material.lambda0,
        mu0_Pa => material.mu0,
        yield1_Pa => material.yield1,
        yield0_Pa => material.yield0,
        a1_Pa_s => material.a1,
        a2_Pa_s => material.a2,
        a3_Pa => material.a3,
        b1_J_m3 => material.b1,
        kappa_J_m => material.kappa,
        plate_velocity_m_s => loads.plate_velocity,
        newton_tol => newton.tol_rel,
        newton_max_iterations => newton.max_iterations,
        qp_tol => qp.tol_kkt,
        qp_complementarity_tol => qp.tol_comp,
        qp_iterations_per_node => qp.iterations_per_node,
        energy_warn_tol => energy_warn_tol,
        energy_abort_tol => energy_abort_tol,
        snapshot_interval_s => snapshot_interval,
    }
    let vector = |v: [f64; 2]| Point::new(v[0], v[1]);
    if let Some(v) = file.body_force_N_m3 {
        c.loads.body_force = vector(v);
    }
    if let Some(v) = file.body_force_rate_N_m3_s {
        c.loads.body_force_rate = vector(v);
    }
    if let Some(v) = file.traction_Pa {
        c.loads.traction = vector(v);
    }
    if let Some(v) = file.traction_rate_Pa_s {
        c.loads.traction_rate = vector(v);
    }
    c.output_dir = file.output_dir;
    if file.adaptive.unwrap_or(false) {
        c.adaptive = Some(AdaptiveStepping {
            gap_threshold: file.adaptive_gap_threshold.unwrap_or(1e-6),
            min_tau: file.adaptive_min_tau_s.unwrap_or(c.tau / 64.0),
            max_tau: file.adaptive_max_tau_s.unwrap_or(c.final_time),
        });
    } else if file.adaptive_gap_threshold.is_some()
        || file.adaptive_min_tau_s.is_some()
        || file.adaptive_max_tau_s.is_some()
    {
        return Err(Error::invalid("adaptive", "adaptive_* keys need adaptive = true"));
    }
    c.validate()?;
    Ok(c)
}
