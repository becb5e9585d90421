//! Legacy ASCII VTK output of DG fields, and a reader for the same subset.
//!
//! Each element gets its own three points so that discontinuous nodal values
//! are written exactly. Numbers use the shortest representation that reads
//! back to the same `f64`, which keeps files bit-stable across runs.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::assembly::FlowState;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// VTK cell type of a linear triangle.
const VTK_TRIANGLE: usize = 5;

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Element-constant quantities written next to the state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellMetrics {
    /// `|u_w|` per element.
    pub velocity: Option<Vec<f64>>,
    /// `B(E)` per element.
    pub mass_balance: Option<Vec<f64>>,
}

/// Contents of a legacy unstructured-grid file restricted to triangles and
/// scalar arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<[usize; 3]>,
    pub point_data: Vec<(String, Vec<f64>)>,
    pub cell_data: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn point_array(&self, name: &str) -> Option<&[f64]> {
        self.point_data
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn cell_array(&self, name: &str) -> Option<&[f64]> {
        self.cell_data
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Discontinuous layout of `state`: points `3e..3e+3` belong to element `e`.
    pub fn from_state<T: Real>(mesh: &TriMesh<T>, state: &FlowState<T>, metrics: &CellMetrics, title: &str) -> Self {
        let ne = mesh.num_elements();
        let mut points = Vec::with_capacity(3 * ne);
        for e in 0..ne {
            for v in mesh.element_vertices(e) {
                points.push([v[0].as_f64(), v[1].as_f64(), 0.0]);
            }
        }
        let cells = (0..ne).map(|e| [3 * e, 3 * e + 1, 3 * e + 2]).collect();
        let nodal = |f: &crate::dg::DgField<T>| f.coeffs().iter().map(|v| v.as_f64()).collect::<Vec<_>>();
        let means = |f: &crate::dg::DgField<T>| f.cell_means().into_iter().map(Real::as_f64).collect::<Vec<_>>();
        let mut cell_data = vec![
            ("S_mean".to_string(), means(&state.saturation)),
            ("P_mean".to_string(), means(&state.pressure)),
        ];
        if let Some(u) = &metrics.velocity {
            cell_data.push(("u_w_magnitude".to_string(), u.clone()));
        }
        if let Some(b) = &metrics.mass_balance {
            cell_data.push(("mass_balance".to_string(), b.clone()));
        }
        Self {
            title: title.to_string(),
            points,
            cells,
            point_data: vec![
                ("S".to_string(), nodal(&state.saturation)),
                ("P".to_string(), nodal(&state.pressure)),
            ],
            cell_data,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        // The title line is limited to 256 characters and must not be empty.
        let title: String = self.title.lines().next().unwrap_or("").chars().take(255).collect();
        let title = if title.trim().is_empty() {
            "twophase"
        } else {
            title.as_str()
        };
        let _ = writeln!(
            s,
            "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID"
        );
        let _ = writeln!(s, "POINTS {} double", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{:e} {:e} {:e}", p[0], p[1], p[2]);
        }
        let _ = writeln!(s, "CELLS {} {}", self.cells.len(), 4 * self.cells.len());
        for c in &self.cells {
            let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.cells.len());
        for _ in &self.cells {
            let _ = writeln!(s, "{VTK_TRIANGLE}");
        }
        let arrays = |s: &mut String, data: &[(String, Vec<f64>)]| {
            for (name, vals) in data {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for v in vals {
                    let _ = writeln!(s, "{v:e}");
                }
            }
        };
        if !self.point_data.is_empty() {
            let _ = writeln!(s, "POINT_DATA {}", self.points.len());
            arrays(&mut s, &self.point_data);
        }
        if !self.cell_data.is_empty() {
            let _ = writeln!(s, "CELL_DATA {}", self.cells.len());
            arrays(&mut s, &self.cell_data);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |m: &str| Error::Vtk(m.to_string());
        if !lines.next().is_some_and(|l| l.starts_with("# vtk DataFile")) {
            return Err(bad("missing version line"));
        }
        let title = lines.next().ok_or_else(|| bad("missing title"))?.to_string();
        if lines.next().map(str::trim) != Some("ASCII") {
            return Err(bad("only ASCII files are supported"));
        }
        let mut tok = lines.flat_map(str::split_whitespace);
        let mut next = |what: &str| {
            tok.next()
                .ok_or_else(|| Error::Vtk(format!("unexpected end of file reading {what}")))
        };
        fn num<V: std::str::FromStr>(s: &str, what: &str) -> Result<V> {
            s.parse().map_err(|_| Error::Vtk(format!("bad {what}: {s:?}")))
        }
        let mut out = VtkData {
            title,
            ..Self::default()
        };
        // 0: none, 1: point data, 2: cell data
        let mut section = 0;
        while let Ok(kw) = next("keyword") {
            match kw {
                "DATASET" => {
                    let kind = next("dataset")?;
                    if kind != "UNSTRUCTURED_GRID" {
                        return Err(Error::Vtk(format!("unsupported dataset {kind}")));
                    }
                }
                "POINTS" => {
                    let n: usize = num(next("point count")?, "point count")?;
                    next("point type")?;
                    for _ in 0..n {
                        let p = [next("x")?, next("y")?, next("z")?];
                        out.points.push([num(p[0], "x")?, num(p[1], "y")?, num(p[2], "z")?]);
                    }
                }
                "CELLS" => {
                    let n: usize = num(next("cell count")?, "cell count")?;
                    next("cell list size")?;
                    for _ in 0..n {
                        if next("cell size")? != "3" {
                            return Err(bad("only triangles are supported"));
                        }
                        let c = [next("cell")?, next("cell")?, next("cell")?];
                        out.cells
                            .push([num(c[0], "cell")?, num(c[1], "cell")?, num(c[2], "cell")?]);
                    }
                }
                "CELL_TYPES" => {
                    let n: usize = num(next("cell type count")?, "cell type count")?;
                    for _ in 0..n {
                        if num::<usize>(next("cell type")?, "cell type")? != VTK_TRIANGLE {
                            return Err(bad("only triangles are supported"));
                        }
                    }
                }
                "POINT_DATA" => {
                    next("count")?;
                    section = 1;
                }
                "CELL_DATA" => {
                    next("count")?;
                    section = 2;
                }
                "SCALARS" => {
                    let name = next("array name")?.to_string();
                    next("array type")?;
                    let mut t = next("LOOKUP_TABLE")?;
                    if t != "LOOKUP_TABLE" {
                        // optional component count
                        t = next("LOOKUP_TABLE")?;
                    }
                    if t != "LOOKUP_TABLE" {
                        return Err(bad("expected LOOKUP_TABLE"));
                    }
                    next("table name")?;
                    let n = match section {
                        1 => out.points.len(),
                        2 => out.cells.len(),
                        _ => return Err(bad("SCALARS outside a data section")),
                    };
                    let mut vals = Vec::with_capacity(n);
                    for _ in 0..n {
                        vals.push(num(next("value")?, "value")?);
                    }
                    if section == 1 {
                        out.point_data.push((name, vals));
                    } else {
                        out.cell_data.push((name, vals));
                    }
                }
                other => return Err(Error::Vtk(format!("unsupported keyword {other}"))),
            }
        }
        Ok(out)
    }
}

pub fn write_vtk<T: Real>(path: &Path, mesh: &TriMesh<T>, state: &FlowState<T>, metrics: &CellMetrics) -> Result<()> {
    let title = format!("step {} time {:e}", state.step, state.time.as_f64());
    let data = VtkData::from_state(mesh, state, metrics, &title);
    write_atomic(path, data.to_text().as_bytes())
}

pub fn read_vtk(path: &Path) -> Result<VtkData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    VtkData::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::DgField;

    fn state(mesh: &TriMesh<f64>, s: f64) -> FlowState<f64> {
        let ne = mesh.num_elements();
        let p = DgField::interpolate(mesh, |x| 1e6 + 1234.5678 * x[0] - 0.1 * x[1]);
        FlowState::new(p, DgField::constant(ne, s), 3, 2.5)
    }

    #[test]
    fn single_triangle() {
        let mesh = TriMesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.vtk");
        write_vtk(&path, &mesh, &state(&mesh, 0.15), &CellMetrics::default()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 3 double"));
        assert!(text.contains("CELLS 1 4"));
        let d = read_vtk(&path).unwrap();
        assert_eq!(d.points.len(), 3);
        assert_eq!(d.cells, vec![[0, 1, 2]]);
        assert!(d.point_array("S").unwrap().iter().all(|&v| v == 0.15));
        assert!((d.cell_array("S_mean").unwrap()[0] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn round_trip_is_exact_and_stable() {
        let mesh = TriMesh::generate_crossed(3, 2, 7.3, 1.1).unwrap();
        let st = state(&mesh, 0.3);
        let ne = mesh.num_elements();
        let metrics = CellMetrics {
            velocity: Some((0..ne).map(|e| 1e-7 * e as f64 / 3.0).collect()),
            mass_balance: Some((0..ne).map(|e| -1e-12 * e as f64).collect()),
        };
        let a = VtkData::from_state(&mesh, &st, &metrics, "t");
        let text = a.to_text();
        assert_eq!(text, VtkData::from_state(&mesh, &st, &metrics, "t").to_text());
        let b = VtkData::parse(&text).unwrap();
        assert_eq!(a, b);
        for (e, c) in b.cells.iter().enumerate() {
            for (i, &pi) in c.iter().enumerate() {
                let v = mesh.element_vertices(e)[i];
                assert!((b.points[pi][0] - v[0]).abs() <= 1e-12 && (b.points[pi][1] - v[1]).abs() <= 1e-12);
            }
        }
        assert_eq!(b.point_array("P").unwrap(), st.pressure.coeffs());
    }

    #[test]
    fn rejects_other_cells() {
        let text =
            "# vtk DataFile Version 3.0\nx\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 0 double\nCELLS 1 5\n4 0 1 2 3\n";
        assert!(matches!(VtkData::parse(text), Err(Error::Vtk(_))));
        assert!(VtkData::parse("hello").is_err());
    }
}
