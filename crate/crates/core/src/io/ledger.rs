//! CSV energy ledger.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! the file round-trips bit for bit and does not depend on the locale.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::LedgerRow;

pub const COLUMNS: [&str; 20] = [
    "step",
    "time_s",
    "stored_energy_J",
    "plastic_diss_cum_J",
    "damage_diss_cum_J",
    "external_work_cum_J",
    "balance_residual_J",
    "reaction_force_Pa",
    "min_zeta",
    "max_plastic_norm",
    "newton_iters",
    "qp_iters",
    "tau_s",
    "plastic_diss_J",
    "damage_diss_J",
    "external_work_J",
    "slack_plastic_J",
    "slack_damage_J",
    "max_von_mises_Pa",
    "yield_excess_Pa",
];

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn record(row: &LedgerRow) -> Vec<String> {
    vec![
        row.step.to_string(),
        float(row.time),
        float(row.stored_energy),
        float(row.plastic_dissipation_cum),
        float(row.damage_dissipation_cum),
        float(row.external_work_cum),
        float(row.balance_residual),
        float(row.reaction_force),
        float(row.min_zeta),
        float(row.max_plastic_norm),
        row.newton_iterations.to_string(),
        row.qp_iterations.to_string(),
        float(row.tau),
        float(row.plastic_dissipation),
        float(row.damage_dissipation),
        float(row.external_work),
        float(row.slack_plastic),
        float(row.slack_damage),
        float(row.max_von_mises),
        float(row.yield_excess),
    ]
}

/// Appends rows to a ledger file, flushing after each one.
pub struct LedgerWriter {
    writer: csv::Writer<File>,
}

impl LedgerWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(COLUMNS)?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(LedgerWriter { writer })
    }

    pub fn write_row(&mut self, row: &LedgerRow) -> Result<()> {
        self.writer.write_record(record(row))?;
        self.writer.flush().map_err(|e| Error::io("<ledger>", e))
    }
}

pub fn write_ledger(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    let mut w = LedgerWriter::create(path)?;
    for row in rows {
        w.write_row(row)?;
    }
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let headers = reader.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(format!("missing column `{name}`")))
    };
    let cols: Vec<usize> = COLUMNS.iter().map(|c| index(c)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let f = |k: usize| -> Result<f64> {
            rec.get(cols[k])
                .unwrap_or("")
                .parse()
                .map_err(|_| parse_err(format!("row {}: bad value in `{}`", line + 1, COLUMNS[k])))
        };
        let n = |k: usize| -> Result<usize> {
            rec.get(cols[k])
                .unwrap_or("")
                .parse()
                .map_err(|_| parse_err(format!("row {}: bad value in `{}`", line + 1, COLUMNS[k])))
        };
        rows.push(LedgerRow {
            step: n(0)?,
            time: f(1)?,
            stored_energy: f(2)?,
            plastic_dissipation_cum: f(3)?,
            damage_dissipation_cum: f(4)?,
            external_work_cum: f(5)?,
            balance_residual: f(6)?,
            reaction_force: f(7)?,
            min_zeta: f(8)?,
            max_plastic_norm: f(9)?,
            newton_iterations: n(10)?,
            qp_iterations: n(11)?,
            tau: f(12)?,
            plastic_dissipation: f(13)?,
            damage_dissipation: f(14)?,
            external_work: f(15)?,
            slack_plastic: f(16)?,
            slack_damage: f(17)?,
            max_von_mises: f(18)?,
            yield_excess: f(19)?,
        });
    }
    Ok(rows)
}
