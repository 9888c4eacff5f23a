//! Legacy ASCII VTK snapshots of the nodal and element fields.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::State;
use crate::mesh::{Mesh, Point};
use crate::tensor::{von_mises, Sym2};

const HEADER: &str = "# vtk DataFile Version 3.0";
const TRIANGLE: u32 = 5;

/// Contents of a snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct VtkSnapshot {
    pub points: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
    pub one_minus_zeta: Vec<f64>,
    pub displacement: Vec<Point>,
    pub plastic_norm: Vec<f64>,
    pub von_mises: Vec<f64>,
}

/// Write `1 − ζ`, `u` (point data) and `|π|`, `|dev σ|` (cell data).
///
/// Coordinates are the undeformed mesh; any displacement magnification is
/// left to the viewer.
pub fn write_vtk_snapshot(path: &Path, mesh: &Mesh, state: &State, stress: &[Sym2]) -> Result<()> {
    let mut s = String::new();
    let n = mesh.n_nodes();
    let m = mesh.n_elements();
    // Writing to a String cannot fail.
    let _ = writeln!(s, "{HEADER}\nplastic-damage snapshot\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", p.x, p.y);
    }
    let _ = writeln!(s, "CELLS {m} {}", 4 * m);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        let _ = writeln!(s, "{TRIANGLE}");
    }
    let _ = writeln!(s, "POINT_DATA {n}\nSCALARS one_minus_zeta double 1\nLOOKUP_TABLE default");
    for z in &state.zeta {
        let _ = writeln!(s, "{:.16e}", 1.0 - z);
    }
    let _ = writeln!(s, "VECTORS displacement double");
    for u in &state.u {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", u.x, u.y);
    }
    let _ = writeln!(s, "CELL_DATA {m}\nSCALARS plastic_norm double 1\nLOOKUP_TABLE default");
    for p in &state.plastic {
        let _ = writeln!(s, "{:.16e}", p.norm());
    }
    let _ = writeln!(s, "SCALARS von_mises double 1\nLOOKUP_TABLE default");
    for sigma in stress {
        let _ = writeln!(s, "{:.16e}", von_mises(sigma));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

struct Tokens<'a> {
    words: std::vec::IntoIter<&'a str>,
    path: &'a Path,
}

impl<'a> Tokens<'a> {
    fn err(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            message,
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.words.next() {
            Some(w) => Ok(w),
            None => Err(self.err(format!("unexpected end of file reading {what}"))),
        }
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let w = self.next(word)?;
        if w != word {
            return Err(self.err(format!("expected `{word}`, found `{w}`")));
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let w = self.next(what)?;
        w.parse().map_err(|_| self.err(format!("bad {what} `{w}`")))
    }

    fn scalars(&mut self, name: &str, count: usize) -> Result<Vec<f64>> {
        for w in ["SCALARS", name, "double", "1", "LOOKUP_TABLE", "default"] {
            self.expect(w)?;
        }
        (0..count).map(|_| self.number(name)).collect()
    }

    fn points(&mut self, count: usize, what: &str) -> Result<Vec<Point>> {
        (0..count)
            .map(|_| {
                let x = self.number(what)?;
                let y = self.number(what)?;
                let _z: f64 = self.number(what)?;
                Ok(Point::new(x, y))
            })
            .collect()
    }
}

/// Read a snapshot written by [`write_vtk_snapshot`].
pub fn read_vtk(path: &Path) -> Result<VtkSnapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "missing VTK header".into(),
        });
    }
    let words: Vec<&str> = lines.skip(1).flat_map(str::split_whitespace).collect();
    let mut t = Tokens {
        words: words.into_iter(),
        path,
    };
    for w in ["ASCII", "DATASET", "UNSTRUCTURED_GRID", "POINTS"] {
        t.expect(w)?;
    }
    let n: usize = t.number("point count")?;
    t.expect("double")?;
    let points = t.points(n, "coordinate")?;
    t.expect("CELLS")?;
    let m: usize = t.number("cell count")?;
    let _size: usize = t.number("cell list size")?;
    let mut cells = Vec::with_capacity(m);
    for _ in 0..m {
        if t.number::<usize>("cell arity")? != 3 {
            return Err(t.err("only triangles are supported".into()));
        }
        cells.push([t.number("index")?, t.number("index")?, t.number("index")?]);
    }
    t.expect("CELL_TYPES")?;
    let _: usize = t.number("cell count")?;
    for _ in 0..m {
        if t.number::<u32>("cell type")? != TRIANGLE {
            return Err(t.err("only triangles are supported".into()));
        }
    }
    t.expect("POINT_DATA")?;
    let _: usize = t.number("point count")?;
    let one_minus_zeta = t.scalars("one_minus_zeta", n)?;
    for w in ["VECTORS", "displacement", "double"] {
        t.expect(w)?;
    }
    let displacement = t.points(n, "displacement")?;
    t.expect("CELL_DATA")?;
    let _: usize = t.number("cell count")?;
    let plastic_norm = t.scalars("plastic_norm", m)?;
    let von_mises = t.scalars("von_mises", m)?;
    Ok(VtkSnapshot {
        points,
        cells,
        one_minus_zeta,
        displacement,
        plastic_norm,
        von_mises,
    })
}
