//! Legacy ASCII VTK unstructured-grid export, plus a reader for the subset
//! this crate writes (used to load displacement frames and run snapshots).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::mesh::Mesh;
use crate::scalar::Real;

/// Named point-data arrays to attach to a snapshot.
pub struct PointData<'a, T: Real> {
    pub name: &'a str,
    pub field: &'a Field<T>,
}

/// Writes mesh and point data as a legacy ASCII VTK unstructured grid.
pub fn write_vtk<T: Real>(
    path: impl AsRef<Path>,
    mesh: &Mesh<T>,
    data: &[PointData<'_, T>],
) -> Result<()> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("cardioflow snapshot\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    let nv = mesh.num_vertices();
    writeln!(out, "POINTS {nv} double").unwrap();
    for v in 0..nv {
        let p = mesh.vertex(v);
        writeln!(
            out,
            "{} {} {}",
            fmt(p[0].to_f64_lossy()),
            fmt(p[1].to_f64_lossy()),
            fmt(p[2].to_f64_lossy())
        )
        .unwrap();
    }
    let nc = mesh.num_cells();
    let per_cell = mesh.dim() + 1;
    writeln!(out, "CELLS {} {}", nc, nc * (per_cell + 1)).unwrap();
    for c in 0..nc {
        write!(out, "{per_cell}").unwrap();
        for &v in mesh.cell(c) {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "CELL_TYPES {nc}").unwrap();
    let cell_type = if mesh.dim() == 2 { 5 } else { 10 }; // triangle / tetra
    for _ in 0..nc {
        writeln!(out, "{cell_type}").unwrap();
    }
    if !data.is_empty() {
        writeln!(out, "POINT_DATA {nv}").unwrap();
        for pd in data {
            pd.field.check_compatible(mesh)?;
            match pd.field.components() {
                1 => {
                    writeln!(out, "SCALARS {} double 1", pd.name).unwrap();
                    out.push_str("LOOKUP_TABLE default\n");
                    for v in 0..nv {
                        writeln!(out, "{}", fmt(pd.field.get(v, 0).to_f64_lossy())).unwrap();
                    }
                }
                _ => {
                    writeln!(out, "VECTORS {} double", pd.name).unwrap();
                    for v in 0..nv {
                        let val = pd.field.vector_at(v);
                        writeln!(
                            out,
                            "{} {} {}",
                            fmt(val[0].to_f64_lossy()),
                            fmt(val[1].to_f64_lossy()),
                            fmt(val[2].to_f64_lossy())
                        )
                        .unwrap();
                    }
                }
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn fmt(v: f64) -> String {
    // Shortest round-trip representation keeps files exact and compact.
    format!("{v:?}")
}

/// Point coordinates and point-data arrays read back from a VTK file.
#[derive(Debug, Default)]
pub struct VtkPointData {
    pub num_points: usize,
    pub points: Vec<[f64; 3]>,
    pub scalars: Vec<(String, Vec<f64>)>,
    pub vectors: Vec<(String, Vec<[f64; 3]>)>,
}

/// Reads the POINT_DATA sections of a legacy ASCII VTK file written by
/// [`write_vtk`] (or any file restricted to that subset).
pub fn read_vtk_point_data(path: impl AsRef<Path>) -> Result<VtkPointData> {
    let file = std::fs::File::open(&path)?;
    let reader = BufReader::new(file);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let mut out = VtkPointData::default();
    let mut i = 0usize;
    let bad = |msg: &str| Error::Parse(format!("{}: {msg}", path.as_ref().display()));
    while i < lines.len() {
        let line = lines[i].trim();
        if line.starts_with("POINTS") {
            let count: usize = line
                .split_whitespace()
                .nth(1)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("bad POINTS count"))?;
            let mut buf: Vec<f64> = Vec::with_capacity(3 * count);
            while buf.len() < 3 * count {
                i += 1;
                for tok in lines[i].split_whitespace() {
                    buf.push(tok.parse::<f64>().map_err(|_| bad("bad point coordinate"))?);
                }
            }
            out.points = buf.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        } else if let Some(rest) = line.strip_prefix("POINT_DATA") {
            out.num_points = rest
                .trim()
                .parse()
                .map_err(|_| bad("bad POINT_DATA count"))?;
        } else if line.starts_with("SCALARS") {
            let name = line
                .split_whitespace()
                .nth(1)
                .ok_or_else(|| bad("SCALARS missing name"))?
                .to_string();
            i += 1; // skip LOOKUP_TABLE
            let mut vals = Vec::with_capacity(out.num_points);
            while vals.len() < out.num_points {
                i += 1;
                for tok in lines[i].split_whitespace() {
                    vals.push(tok.parse::<f64>().map_err(|_| bad("bad scalar value"))?);
                }
            }
            out.scalars.push((name, vals));
        } else if line.starts_with("VECTORS") {
            let name = line
                .split_whitespace()
                .nth(1)
                .ok_or_else(|| bad("VECTORS missing name"))?
                .to_string();
            let mut vals: Vec<[f64; 3]> = Vec::with_capacity(out.num_points);
            let mut buf: Vec<f64> = Vec::new();
            while vals.len() < out.num_points {
                i += 1;
                for tok in lines[i].split_whitespace() {
                    buf.push(tok.parse::<f64>().map_err(|_| bad("bad vector value"))?);
                }
                while buf.len() >= 3 {
                    vals.push([buf[0], buf[1], buf[2]]);
                    buf.drain(..3);
                }
            }
            out.vectors.push((name, vals));
        }
        i += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_box_mesh;

    #[test]
    fn roundtrip_point_data() {
        let dir = std::env::temp_dir().join("cardioflow_vtk_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.vtk");
        let m = generate_box_mesh::<f64>(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let u = Field::from_fn(&m, 2, |p| vec![p[0] * 1.5, -p[1]]);
        let p = Field::from_fn(&m, 1, |q| vec![q[0] + 10.0 * q[1]]);
        write_vtk(
            &path,
            &m,
            &[
                PointData {
                    name: "velocity",
                    field: &u,
                },
                PointData {
                    name: "pressure",
                    field: &p,
                },
            ],
        )
        .unwrap();
        let back = read_vtk_point_data(&path).unwrap();
        assert_eq!(back.num_points, m.num_vertices());
        let (vname, vecs) = &back.vectors[0];
        assert_eq!(vname, "velocity");
        for (v, val) in vecs.iter().enumerate() {
            assert_eq!(val[0], u.get(v, 0));
            assert_eq!(val[1], u.get(v, 1));
        }
        let (sname, scals) = &back.scalars[0];
        assert_eq!(sname, "pressure");
        assert_eq!(scals[3], p.get(3, 0));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn header_sections_present() {
        let dir = std::env::temp_dir().join("cardioflow_vtk_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("header.vtk");
        let m = generate_box_mesh::<f64>(3, &[1.0, 1.0, 1.0], &[1, 1, 1]).unwrap();
        write_vtk(&path, &m, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 8 double"));
        assert!(text.contains("CELLS 6 30"));
        assert!(text.contains("CELL_TYPES 6"));
        std::fs::remove_file(&path).ok();
    }
}
