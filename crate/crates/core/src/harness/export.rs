use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::femcore::{assemble_surface, assemble_volume};
use crate::meshing::{build_cross_section, extrude_periodic, mesh_surface, write_surface_vtk, write_tet_vtk};

/// Writes the finest surface mesh and the finest fattened mesh for every ε
/// as legacy VTK, with their assembled forms in Matrix Market format.
pub fn export_meshes(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let s = cfg.validate()?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let hs = *cfg.surface_h_list.last().unwrap_or(&0.0);
    let surface = mesh_surface(&s, hs)?;
    let path = dir.join("surface.vtk");
    let mut w = BufWriter::new(File::create(&path)?);
    write_surface_vtk(&mut w, &surface, &[])?;
    w.flush()?;
    written.push(path);
    assemble_surface(&surface)?.write_matrix_market(dir, "surface")?;
    written.push(dir.join("surface_K.mtx"));
    written.push(dir.join("surface_M.mtx"));

    let h = *cfg.h_list.last().unwrap_or(&0.0);
    for &eps in &cfg.eps_list {
        info!("exporting eps = {eps}");
        let cs = build_cross_section(&s, eps, h, cfg.arc_tol(eps))?;
        let vol = extrude_periodic(&cs, s.binding_length(), cfg.n_z(h))?;
        let stem = format!("volume_eps{eps}");
        let path = dir.join(format!("{stem}.vtk"));
        let mut w = BufWriter::new(File::create(&path)?);
        write_tet_vtk(&mut w, &vol, &[])?;
        w.flush()?;
        written.push(path);
        assemble_volume(&vol)?.write_matrix_market(dir, &stem)?;
        written.push(dir.join(format!("{stem}_K.mtx")));
        written.push(dir.join(format!("{stem}_M.mtx")));
    }
    Ok(written)
}
