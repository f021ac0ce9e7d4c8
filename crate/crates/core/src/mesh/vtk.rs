//! Legacy ASCII VTK output (`DATASET UNSTRUCTURED_GRID`).

use std::io::{self, Write};

use super::SimplicialMesh;

const TRIANGLE: u8 = 5;
const TETRA: u8 = 10;

/// Writes a mesh with optional per-cell and per-point scalar fields.
///
/// Coordinates are printed with 17 significant digits so a reader recovers
/// the exact `f64` values; 2D points get a zero `z` component.
pub struct VtkWriter<'a, const D: usize> {
    mesh: &'a SimplicialMesh<D>,
    title: String,
    cell_scalars: Vec<(String, &'a [f64])>,
    point_scalars: Vec<(String, &'a [f64])>,
}

impl<'a, const D: usize> VtkWriter<'a, D> {
    pub fn new(mesh: &'a SimplicialMesh<D>) -> Self {
        VtkWriter {
            mesh,
            title: "meshadapt".to_string(),
            cell_scalars: Vec::new(),
            point_scalars: Vec::new(),
        }
    }

    pub fn title(mut self, title: impl Into<String>) -> Self {
        // the title line must not contain a newline
        self.title = title.into().replace('\n', " ");
        self
    }

    pub fn cell_scalar(mut self, name: &str, values: &'a [f64]) -> Self {
        assert_eq!(values.len(), self.mesh.n_elements(), "cell field {name} has wrong length");
        self.cell_scalars.push((name.to_string(), values));
        self
    }

    pub fn point_scalar(mut self, name: &str, values: &'a [f64]) -> Self {
        assert_eq!(values.len(), self.mesh.n_vertices(), "point field {name} has wrong length");
        self.point_scalars.push((name.to_string(), values));
        self
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mesh = self.mesh;
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{}", self.title)?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", mesh.n_vertices())?;
        for p in mesh.vertices() {
            let z = if D == 3 { p[2] } else { 0.0 };
            writeln!(w, "{:.16e} {:.16e} {:.16e}", p[0], p[1], z)?;
        }

        let ne = mesh.n_elements();
        writeln!(w, "CELLS {} {}", ne, ne * (D + 2))?;
        for k in 0..ne {
            write!(w, "{}", D + 1)?;
            for v in mesh.element(k) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "CELL_TYPES {ne}")?;
        let cell_type = if D == 2 { TRIANGLE } else { TETRA };
        for _ in 0..ne {
            writeln!(w, "{cell_type}")?;
        }

        write_scalars(&mut w, "CELL_DATA", ne, &self.cell_scalars)?;
        write_scalars(&mut w, "POINT_DATA", mesh.n_vertices(), &self.point_scalars)?;
        Ok(())
    }
}

fn write_scalars<W: Write>(w: &mut W, section: &str, n: usize, fields: &[(String, &[f64])]) -> io::Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(w, "{section} {n}")?;
    for (name, values) in fields {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in *values {
            writeln!(w, "{v:.16e}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;

    #[test]
    fn header_and_counts() {
        let m = build_structured_mesh::<2>(2).unwrap();
        let q = vec![1.0; m.n_elements()];
        let u = vec![0.5; m.n_vertices()];
        let mut buf = Vec::new();
        VtkWriter::new(&m)
            .cell_scalar("Q_eq", &q)
            .cell_scalar("Q_ali", &q)
            .point_scalar("u", &u)
            .write(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("POINTS 9 double"));
        assert!(text.contains("CELLS 8 32"));
        assert!(text.contains("CELL_DATA 8\nSCALARS Q_eq double 1"));
        assert!(text.contains("SCALARS Q_ali double 1"));
        assert!(text.contains("POINT_DATA 9\nSCALARS u double 1"));
        assert_eq!(text.lines().filter(|l| *l == "5").count(), 8);
    }
}
