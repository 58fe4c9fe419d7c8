//! CSV and legacy VTK writers.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Floats with 17 significant digits; round-trips every `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\r', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    /// RFC 4180 text (CRLF line breaks).
    pub fn render(&self) -> String {
        let mut out = String::new();
        let line = |cells: Vec<String>| cells.join(",") + "\r\n";
        out += &line(self.header.iter().map(|h| quote(h)).collect());
        for r in &self.rows {
            out += &line(
                r.iter()
                    .map(|c| match c {
                        Cell::Num(v) => format_float(*v),
                        Cell::Int(v) => v.to_string(),
                        Cell::Text(s) => quote(s),
                    })
                    .collect(),
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    /// Numeric column by header name (non-numeric cells become NaN).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[k] {
                    Cell::Num(v) => *v,
                    Cell::Int(v) => *v as f64,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Point data attached to a structured-points file.
pub enum PointData<'a> {
    Scalars(&'a str, &'a [f64]),
    Vectors(&'a str, &'a [Vec3]),
    Tensors(&'a str, &'a [Mat3]),
}

/// Legacy ASCII `STRUCTURED_POINTS` with x fastest.
pub fn render_vtk(grid: &Grid, title: &str, data: &[PointData]) -> Result<String> {
    let h = grid.spacing();
    let mut s = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", grid.n[0], grid.n[1], grid.n[2]);
    let _ = writeln!(s, "ORIGIN {} {} {}", format_float(grid.domain.lo[0]), format_float(grid.domain.lo[1]), format_float(grid.domain.lo[2]));
    let _ = writeln!(s, "SPACING {} {} {}", format_float(h[0]), format_float(h[1]), format_float(h[2]));
    let _ = writeln!(s, "POINT_DATA {}", grid.len());
    for d in data {
        let len = match d {
            PointData::Scalars(_, v) => v.len(),
            PointData::Vectors(_, v) => v.len(),
            PointData::Tensors(_, v) => v.len(),
        };
        if len != grid.len() {
            return Err(Error::GridMismatch(format!("point data has {len} values for {} nodes", grid.len())));
        }
        match d {
            PointData::Scalars(name, v) => {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for x in *v {
                    let _ = writeln!(s, "{}", format_float(*x));
                }
            }
            PointData::Vectors(name, v) => {
                let _ = writeln!(s, "VECTORS {name} double");
                for x in *v {
                    let _ = writeln!(s, "{} {} {}", format_float(x.x), format_float(x.y), format_float(x.z));
                }
            }
            PointData::Tensors(name, v) => {
                let _ = writeln!(s, "TENSORS {name} double");
                for m in *v {
                    for i in 0..3 {
                        let _ = writeln!(s, "{} {} {}", format_float(m[(i, 0)]), format_float(m[(i, 1)]), format_float(m[(i, 2)]));
                    }
                }
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(path: &Path, grid: &Grid, title: &str, data: &[PointData]) -> Result<()> {
    let text = render_vtk(grid, title, data)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
