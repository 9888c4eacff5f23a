//! Configuration files, result serialization and plots.

pub mod config;
pub mod ledger;
pub mod plot;
pub mod vtk;

pub use config::{parse_config, parse_config_str};
pub use ledger::{read_ledger, write_ledger, LedgerWriter};
pub use plot::{emit_plots, PlotSummary};
pub use vtk::{read_vtk, write_vtk_snapshot, VtkSnapshot};

use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{RunOutput, Simulation, SimulationConfig};

/// Run a configuration, streaming the ledger to `out_dir/ledger.csv` and
/// writing VTK snapshots `out_dir/snapshot_<step>.vtk` at the snapshot times.
///
/// Rows of completed steps are on disk even if a later step fails.
pub fn run_to_dir(config: &SimulationConfig, out_dir: &Path) -> Result<RunOutput> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut sim = Simulation::new(config.clone())?;
    let mut writer = LedgerWriter::create(&out_dir.join("ledger.csv"))?;
    sim.run(&mut |view| {
        writer.write_row(view.row)?;
        if view.snapshot {
            let path = out_dir.join(format!("snapshot_{:05}.vtk", view.row.step));
            write_vtk_snapshot(&path, view.mesh, view.state, view.stress)?;
        }
        Ok(())
    })
}
