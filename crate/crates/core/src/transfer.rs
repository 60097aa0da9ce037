//! Transfer maps between the surface space and the fattened-domain space.
//!
//! `J` averages a volume function over the fiber normal to each page and,
//! near the binding, over a disk around it. `Kx` extends a surface function
//! constantly along fibers, blending toward its binding value in the collar.
//! Both rows are convex combinations, so constants map to constants.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolve::{spectral_subspace, EigenResult, SpectralSubspace};
use crate::error::{Error, Result};
use crate::femcore::AssembledForms;
use crate::meshing::{SurfaceMesh, TetMesh};
use crate::sparse::CsrMatrix;

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
];

const DISK_ANGLES: usize = 16;

/// Quadratic-form differences below this (relative to the normalizing form)
/// are rounding noise and reported as zero.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TransferMaps {
    /// Volume DOFs → surface DOFs.
    pub j: CsrMatrix,
    /// Surface DOFs → volume DOFs.
    pub kx: CsrMatrix,
    pub eps: f64,
    pub collar_radius: f64,
    pub blend_width: f64,
    pub construction: String,
}

impl TransferMaps {
    pub fn apply_j(&self, u: &[f64]) -> Vec<f64> {
        self.j.mul_vec(u)
    }

    pub fn apply_kx(&self, u: &[f64]) -> Vec<f64> {
        self.kx.mul_vec(u)
    }
}

pub trait TransferConstruction: Send + Sync {
    fn name(&self) -> &str;
    fn build(&self, surface: &SurfaceMesh, volume: &TetMesh, eps: f64) -> Result<TransferMaps>;
}

/// Fiber averaging with a junction-disk average, and constant extension.
#[derive(Debug, Clone, Copy, Default)]
pub struct FiberAverage;

pub struct TransferRegistry {
    entries: BTreeMap<String, Arc<dyn TransferConstruction>>,
}

impl Default for TransferRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register(Arc::new(FiberAverage));
        r
    }
}

impl TransferRegistry {
    pub fn register(&mut self, c: Arc<dyn TransferConstruction>) {
        self.entries.insert(c.name().to_string(), c);
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn TransferConstruction>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: "transfer",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }
}

pub fn build_transfer(surface: &SurfaceMesh, volume: &TetMesh, eps: f64) -> Result<TransferMaps> {
    FiberAverage.build(surface, volume, eps)
}

/// Weight of the binding-side formula at distance `r` from the binding:
/// 1 inside the junction radius, 0 beyond twice it, linear in between.
fn collar_blend(r: f64, rj: f64) -> f64 {
    ((2.0 * rj - r) / rj).clamp(0.0, 1.0)
}

fn push_scaled(row: &mut Vec<(usize, f64)>, w: &[(usize, f64)], s: f64) {
    row.extend(w.iter().map(|&(i, c)| (i, c * s)));
}

/// Merges repeated columns and rescales so the row sums to one.
fn normalize_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (i, w) in row {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += w,
            _ => out.push((i, w)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    let total: f64 = out.iter().map(|e| e.1).sum();
    out.iter_mut().for_each(|e| e.1 /= total);
    out
}

impl TransferConstruction for FiberAverage {
    fn name(&self) -> &str {
        "fiber-average"
    }

    fn build(&self, surface: &SurfaceMesh, volume: &TetMesh, eps: f64) -> Result<TransferMaps> {
        let cs = &volume.section;
        if (cs.eps - eps).abs() > 1e-12 * eps.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "volume mesh was built for eps = {} but the maps were requested for {eps}",
                cs.eps
            )));
        }
        if surface.pages.is_empty() || !volume.periodic {
            return Err(Error::InvalidParameter("transfer maps need a periodic book and its fattening".into()));
        }
        if (surface.binding_length - volume.length).abs() > 1e-12 * volume.length {
            return Err(Error::InvalidParameter("surface and volume binding lengths differ".into()));
        }
        let rj = cs.junction_radius;
        let locator = cs.locator();
        let (sdof, n_surf) = surface.dof_map();
        let n_vol = volume.vertices.len();

        // one representative vertex per surface DOF, with its page and s
        let mut rep: Vec<Option<(usize, f64, f64)>> = vec![None; n_surf];
        for j in 0..=surface.nz {
            let v = surface.binding_vertex_ids[j];
            rep[sdof[v]].get_or_insert((0, 0.0, surface.vertices[v][2]));
        }
        for (p, g) in surface.pages.iter().enumerate() {
            let ds = g.length / g.ns as f64;
            for i in 1..=g.ns {
                for j in 0..=surface.nz {
                    let v = surface.grid_vertex(p, i, j);
                    rep[sdof[v]].get_or_insert((p, i as f64 * ds, surface.vertices[v][2]));
                }
            }
        }

        let disk_average = |z: f64| -> Result<Vec<(usize, f64)>> {
            let mut row = Vec::new();
            for &(xr, wr) in &GAUSS4 {
                let r = 0.5 * rj * (1.0 + xr);
                for a in 0..DISK_ANGLES {
                    let th = (a as f64 + 0.5) * TAU / DISK_ANGLES as f64;
                    let q = [r * th.cos(), r * th.sin()];
                    if !cs.contains(q) {
                        continue;
                    }
                    let w = volume.point_weights(&locator, [q[0], q[1], z])?;
                    push_scaled(&mut row, &w, wr * r);
                }
            }
            Ok(normalize_row(row))
        };

        let j_rows: Vec<Vec<(usize, f64)>> = rep
            .par_iter()
            .map(|r| -> Result<Vec<(usize, f64)>> {
                let (p, s, z) = r.ok_or_else(|| Error::MeshTopology("surface DOF without a vertex".into()))?;
                let beta = collar_blend(s, rj);
                let mut row = Vec::new();
                if beta > 0.0 {
                    push_scaled(&mut row, &disk_average(z)?, beta);
                }
                if beta < 1.0 {
                    let d = surface.pages[p].direction;
                    let nrm = [-d[1], d[0]];
                    for &(xi, wi) in &GAUSS4 {
                        let t = eps * xi;
                        let q = [s * d[0] + t * nrm[0], s * d[1] + t * nrm[1], z];
                        let w = volume.point_weights(&locator, q)?;
                        push_scaled(&mut row, &w, 0.5 * wi * (1.0 - beta));
                    }
                }
                Ok(normalize_row(row))
            })
            .collect::<Result<_>>()?;

        let surface_row = |p: usize, s: f64, z: f64| -> Vec<(usize, f64)> {
            surface
                .point_weights(p, s, z)
                .into_iter()
                .map(|(v, w)| (sdof[v], w))
                .collect()
        };
        let k_rows: Vec<Vec<(usize, f64)>> = volume
            .vertices
            .par_iter()
            .map(|x| {
                let mut best = (0usize, 0.0f64, f64::INFINITY);
                for (p, g) in surface.pages.iter().enumerate() {
                    let d = g.direction;
                    let s = (x[0] * d[0] + x[1] * d[1]).clamp(0.0, g.length);
                    let dist = (x[0] - s * d[0]).hypot(x[1] - s * d[1]);
                    if dist < best.2 {
                        best = (p, s, dist);
                    }
                }
                let (p, s, _) = best;
                let beta = collar_blend(x[0].hypot(x[1]), rj);
                let mut row = Vec::new();
                push_scaled(&mut row, &surface_row(p, s, x[2]), 1.0 - beta);
                if beta > 0.0 {
                    push_scaled(&mut row, &surface_row(p, 0.0, x[2]), beta);
                }
                normalize_row(row)
            })
            .collect();

        let triplets = |rows: Vec<Vec<(usize, f64)>>| -> Vec<(usize, usize, f64)> {
            rows.into_iter()
                .enumerate()
                .flat_map(|(i, r)| r.into_iter().map(move |(c, w)| (i, c, w)))
                .collect()
        };
        Ok(TransferMaps {
            j: CsrMatrix::from_triplets(n_surf, n_vol, triplets(j_rows)),
            kx: CsrMatrix::from_triplets(n_vol, n_surf, triplets(k_rows)),
            eps,
            collar_radius: rj,
            blend_width: rj,
            construction: self.name().to_string(),
        })
    }
}

/// Defects of the transfer maps on the spectral subspaces below a cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferDefectReport {
    pub eps: f64,
    pub cutoff: f64,
    /// Dimension of the fattened-domain subspace (the limit one is `dim_limit`).
    pub dim: usize,
    pub dim_limit: usize,
    pub dj_iso: f64,
    pub dj_energy: f64,
    pub dk_iso: f64,
    pub dk_energy: f64,
    /// |M|_h / |M_ε|_h, the factor applied to the volume forms.
    pub volume_scale: f64,
    pub rayleigh: Vec<RayleighCheck>,
}

/// Rayleigh quotient of a transferred eigenvector against the bound implied
/// by the measured defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighCheck {
    /// "J" (volume eigenvector averaged) or "K" (limit eigenvector extended).
    pub map: String,
    pub index: usize,
    pub lambda: f64,
    pub transferred: f64,
    /// (1 + δ) times the original quotient; infinite when the isometry
    /// defect is too large to give a bound.
    pub bound: f64,
    pub factor: f64,
    pub holds: bool,
}

impl TransferDefectReport {
    pub fn rayleigh_holds(&self) -> bool {
        self.rayleigh.iter().all(|c| c.holds)
    }

    pub fn defects(&self) -> [f64; 4] {
        [self.dj_iso, self.dj_energy, self.dk_iso, self.dk_energy]
    }
}

pub const DEFECT_CSV_HEADER: &str = "eps,Lambda,dim,dJ_iso,dJ_en,dK_iso,dK_en";

pub fn write_defect_csv<W: Write>(mut w: W, reports: &[TransferDefectReport]) -> Result<()> {
    writeln!(w, "{DEFECT_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.eps, r.cutoff, r.dim, r.dj_iso, r.dj_energy, r.dk_iso, r.dk_energy
        )?;
    }
    Ok(())
}

/// M-orthonormal basis of a spectral subspace split into the exact constant
/// and its M-orthogonal complement. The computed eigenvector closest to the
/// constant is replaced by the constant itself.
struct SplitBasis {
    constant: DVector<f64>,
    complement: DMatrix<f64>,
}

fn split_basis(mass: &CsrMatrix, basis: &DMatrix<f64>) -> Result<SplitBasis> {
    let n = basis.nrows();
    let ones = vec![1.0; n];
    let c = DVector::from_element(n, 1.0 / mass.quadratic(&ones).sqrt());
    let mc = mass.mul_dvec(&c);
    let proj = basis.transpose() * &mc;
    let w = basis - &c * proj.transpose();
    let g = w.transpose() * mass.mul_block(&w);
    let g = (&g + g.transpose()) * 0.5;
    let eig = g.symmetric_eigen();
    let d = basis.ncols();
    if d == 0 {
        return Err(Error::DegenerateInput("empty spectral subspace".into()));
    }
    // the near-constant direction has the smallest Gram eigenvalue
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if eig.eigenvalues[order[0]] > 0.5 {
        return Err(Error::DegenerateInput(
            "spectral subspace does not contain the constants".into(),
        ));
    }
    let mut complement = DMatrix::zeros(n, d - 1);
    for (k, &i) in order[1..].iter().enumerate() {
        let col = &w * eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt();
        complement.set_column(k, &col);
    }
    Ok(SplitBasis { constant: c, complement })
}

/// max over nonzero c of cᵀ A c / cᵀ H c, with H positive definite; or of
/// |cᵀ A c| / cᵀ H c when `absolute`.
fn max_ratio(a: &DMatrix<f64>, h: &DMatrix<f64>, absolute: bool) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let h = (h + h.transpose()) * 0.5;
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::DegenerateInput("normalizing form is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateInput("singular normalizing form".into()))?;
    let c = &linv * ((a + a.transpose()) * 0.5) * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let ev = c.symmetric_eigen().eigenvalues;
    let v = if absolute {
        ev.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    } else {
        ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(v)
}

fn snap(x: f64) -> f64 {
    if x.abs() <= ROUNDING_FLOOR {
        0.0
    } else {
        x
    }
}

/// Scaled forms and a map into the other space, from the point of view of
/// one side of the transfer.
struct Side<'a> {
    forms: &'a AssembledForms,
    scale: f64,
}

impl Side<'_> {
    fn mass(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.transpose() * self.forms.mass.mul_block(x) * self.scale
    }
    fn stiff(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.transpose() * self.forms.stiffness.mul_block(x) * self.scale
    }
}

/// (isometry defect, energy defect) of `map` from `src` to `dst` on `basis`.
fn side_defects(
    src: &Side,
    dst: &Side,
    map: &CsrMatrix,
    basis: &SplitBasis,
) -> Result<(f64, f64)> {
    let n = basis.constant.len();
    let d = basis.complement.ncols() + 1;
    let mut full = DMatrix::zeros(n, d);
    full.set_column(0, &basis.constant);
    full.view_mut((0, 1), (n, d - 1)).copy_from(&basis.complement);
    let image = map.mul_block(&full);

    let src_m = src.mass(&full);
    let src_k = src.stiff(&full);
    let h1 = &src_k + &src_m;
    let iso = max_ratio(&(&src_m - dst.mass(&image)), &h1, true)?;

    let comp = full.columns(1, d - 1).into_owned();
    let comp_image = image.columns(1, d - 1).into_owned();
    let q_src = src.stiff(&comp);
    let energy = max_ratio(&(dst.stiff(&comp_image) - &q_src), &q_src, false)?;
    Ok((snap(iso), snap(energy).max(0.0)))
}

/// Checks every eigenvector of the subspace; the one for the lowest
/// eigenvalue is replaced by the exact constant.
fn rayleigh_checks(
    label: &str,
    src: &Side,
    dst: &Side,
    map: &CsrMatrix,
    sub: &SpectralSubspace,
    constant: &DVector<f64>,
    iso: f64,
    energy: f64,
) -> Vec<RayleighCheck> {
    let mut vectors = sub.basis.clone();
    vectors.set_column(0, constant);
    let image = map.mul_block(&vectors);
    (0..vectors.ncols())
        .map(|i| {
            let u = vectors.column(i).into_owned();
            let ju = image.column(i).into_owned();
            let mu = u.dot(&src.forms.mass.mul_dvec(&u)) * src.scale;
            let qu = u.dot(&src.forms.stiffness.mul_dvec(&u)) * src.scale;
            let mj = ju.dot(&dst.forms.mass.mul_dvec(&ju)) * dst.scale;
            let qj = ju.dot(&dst.forms.stiffness.mul_dvec(&ju)) * dst.scale;
            let lambda = qu / mu;
            let transferred = if mj > 0.0 { qj / mj } else { f64::INFINITY };
            let shrink = 1.0 - iso * (1.0 + lambda);
            let factor = if shrink > 0.0 { (1.0 + energy) / shrink } else { f64::INFINITY };
            let bound = if lambda.abs() <= ROUNDING_FLOOR && factor.is_finite() {
                0.0
            } else {
                factor * lambda
            };
            // the bound is implied by the defects up to rounding in the forms
            let slack = 1e-9 * (1.0 + lambda.abs());
            RayleighCheck {
                map: label.to_string(),
                index: i,
                lambda,
                transferred,
                bound,
                factor,
                holds: transferred <= bound + slack,
            }
        })
        .collect()
}

/// Measures the four defects on the subspaces of eigenvalues below `cutoff`.
/// Volume forms are scaled by |M|_h / |M_ε|_h so that both spaces carry
/// comparable L² norms. The constant direction is taken exactly; energy
/// defects are maximized over its complement and clamped at zero.
pub fn measure_defects(
    forms2d: &AssembledForms,
    forms3d: &AssembledForms,
    maps: &TransferMaps,
    cutoff: f64,
    eig3d: &EigenResult,
    eig2d: &EigenResult,
) -> Result<TransferDefectReport> {
    if maps.j.nrows() != forms2d.n || maps.j.ncols() != forms3d.n {
        return Err(Error::InvalidParameter("transfer maps do not match the forms".into()));
    }
    let min_gap = |r: &EigenResult| 10.0 * r.tol * (1.0 + cutoff);
    let sub3 = spectral_subspace(eig3d, cutoff, min_gap(eig3d))?;
    let sub2 = spectral_subspace(eig2d, cutoff, min_gap(eig2d))?;
    let scale = forms2d.measure() / forms3d.measure();
    let surf = Side {
        forms: forms2d,
        scale: 1.0,
    };
    let vol = Side {
        forms: forms3d,
        scale,
    };
    let b3 = split_basis(&forms3d.mass, &sub3.basis)?;
    let b2 = split_basis(&forms2d.mass, &sub2.basis)?;
    // the volume basis is M-orthonormal for the unscaled mass
    let (dj_iso, dj_energy) = side_defects(&vol, &surf, &maps.j, &b3)?;
    let (dk_iso, dk_energy) = side_defects(&surf, &vol, &maps.kx, &b2)?;
    let mut rayleigh = rayleigh_checks("J", &vol, &surf, &maps.j, &sub3, &b3.constant, dj_iso, dj_energy);
    rayleigh.extend(rayleigh_checks(
        "K",
        &surf,
        &vol,
        &maps.kx,
        &sub2,
        &b2.constant,
        dk_iso,
        dk_energy,
    ));
    Ok(TransferDefectReport {
        eps: maps.eps,
        cutoff,
        dim: sub3.dim(),
        dim_limit: sub2.dim(),
        dj_iso,
        dj_energy,
        dk_iso,
        dk_energy,
        volume_scale: scale,
        rayleigh,
    })
}
