//! Legacy ASCII VTK export of surface and volume meshes.

use std::io::Write;

use super::extrude::TetMesh;
use super::surface::SurfaceMesh;
use crate::error::{Error, Result};

fn header<W: Write>(w: &mut W, title: &str, points: &[[f64; 3]]) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    Ok(())
}

fn point_data<W: Write>(w: &mut W, n: usize, fields: &[(String, Vec<f64>)]) -> Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(w, "POINT_DATA {n}")?;
    for (name, values) in fields {
        if values.len() != n {
            return Err(Error::InvalidParameter(format!(
                "point field '{name}' has {} values for {n} points",
                values.len()
            )));
        }
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in values {
            writeln!(w, "{v:.17e}")?;
        }
    }
    Ok(())
}

/// Writes the surface mesh with a `page_tag` cell field. Point fields are
/// given per degree of freedom and expanded to vertices through `dof_map`.
pub fn write_surface_vtk<W: Write>(
    mut w: W,
    mesh: &SurfaceMesh,
    dof_fields: &[(String, Vec<f64>)],
) -> Result<()> {
    header(&mut w, "open book surface mesh", &mesh.vertices)?;
    let nt = mesh.triangles.len();
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "CELL_DATA {nt}")?;
    writeln!(w, "SCALARS page_tag int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for k in &mesh.page_tag {
        writeln!(w, "{k}")?;
    }
    let (dof, _) = mesh.dof_map();
    let fields: Vec<(String, Vec<f64>)> = dof_fields
        .iter()
        .map(|(name, vals)| (name.clone(), dof.iter().map(|&d| vals[d]).collect()))
        .collect();
    point_data(&mut w, mesh.vertices.len(), &fields)
}

/// Writes the tet mesh with a `region` cell field. A periodic mesh is written
/// with its wrap-around layer duplicated at z = L so the file is a plain
/// unstructured grid. Point fields are per stored vertex.
pub fn write_tet_vtk<W: Write>(
    mut w: W,
    mesh: &TetMesh,
    vertex_fields: &[(String, Vec<f64>)],
) -> Result<()> {
    let mut points = mesh.vertices.clone();
    let mut source: Vec<usize> = (0..points.len()).collect();
    let dup_base = points.len();
    if mesh.periodic {
        for i in 0..mesh.layer_size {
            let mut p = mesh.vertices[i];
            p[2] = mesh.length;
            points.push(p);
            source.push(i);
        }
    }
    header(&mut w, "fattened open book tetrahedral mesh", &points)?;
    let nt = mesh.tets.len();
    writeln!(w, "CELLS {nt} {}", 5 * nt)?;
    for (t, tet) in mesh.tets.iter().enumerate() {
        let ids = tet.map(|v| {
            if mesh.periodic && mesh.tet_slab[t] + 1 == mesh.n_z && mesh.layer_of(v) == 0 {
                dup_base + v
            } else {
                v
            }
        });
        writeln!(w, "4 {} {} {} {}", ids[0], ids[1], ids[2], ids[3])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "10")?;
    }
    writeln!(w, "CELL_DATA {nt}")?;
    writeln!(w, "SCALARS region int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for r in &mesh.region {
        writeln!(w, "{}", r.code())?;
    }
    let fields: Vec<(String, Vec<f64>)> = vertex_fields
        .iter()
        .map(|(name, vals)| (name.clone(), source.iter().map(|&s| vals[s]).collect()))
        .collect();
    point_data(&mut w, points.len(), &fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_periodic_flat_book;
    use crate::meshing::extrude::{extrude_periodic, rectangle_cross_section};
    use crate::meshing::surface::mesh_surface;

    #[test]
    fn surface_file_layout() {
        let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
        let m = mesh_surface(&s, 0.25).unwrap();
        let (_, n) = m.dof_map();
        let mut buf = Vec::new();
        write_surface_vtk(&mut buf, &m, &[("u".into(), vec![1.0; n])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains(&format!("CELLS {} {}", m.triangles.len(), 4 * m.triangles.len())));
        assert!(text.contains("SCALARS page_tag int 1"));
        assert!(text.contains(&format!("POINT_DATA {}", m.vertices.len())));
    }

    #[test]
    fn tet_file_duplicates_wrap_layer() {
        let cs = rectangle_cross_section(1.0, 1.0, 2, 2);
        let m = extrude_periodic(&cs, 1.0, 4).unwrap();
        let mut buf = Vec::new();
        write_tet_vtk(&mut buf, &m, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(&format!("POINTS {} double", 5 * 9)));
        assert!(text.contains("SCALARS region int 1"));
    }
}
