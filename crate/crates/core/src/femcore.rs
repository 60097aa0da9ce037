//! P1 finite element forms on open-book surfaces and their fattenings.
//!
//! Stiffness and mass use exact element integrals (pages are flat, tets are
//! affine); periodic and binding identification happen through the vertex to
//! DOF map, so no constraint is ever imposed at the binding or on free edges.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::meshing::{CrossSectionMesh, SurfaceMesh, TetMesh};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct AssembledForms {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    /// Mesh vertex → global degree of freedom.
    pub dof_map: Vec<usize>,
    pub n: usize,
}

impl AssembledForms {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Total measure 1ᵀ M 1.
    pub fn measure(&self) -> f64 {
        self.mass.quadratic(&vec![1.0; self.n])
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.stiffness.quadratic(u)
    }

    pub fn mass_norm2(&self, u: &[f64]) -> f64 {
        self.mass.quadratic(u)
    }

    /// Samples a function of vertex coordinates into a DOF vector (periodic
    /// images take the value at their source vertex).
    pub fn sample(&self, vertices: &[[f64; 3]], f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        let mut u = vec![f64::NAN; self.n];
        for (v, &d) in self.dof_map.iter().enumerate() {
            if u[d].is_nan() {
                u[d] = f(vertices[v]);
            }
        }
        u
    }

    /// Writes stiffness and mass as `<stem>_K.mtx` and `<stem>_M.mtx`.
    pub fn write_matrix_market(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        for (suffix, m) in [("K", &self.stiffness), ("M", &self.mass)] {
            let path = dir.join(format!("{stem}_{suffix}.mtx"));
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            m.write_matrix_market(&mut f, true)?;
            f.flush()?;
        }
        Ok(())
    }
}

/// Gradients of the three P1 basis functions of a triangle embedded in 3D,
/// and the triangle area.
pub fn triangle_gradients(p: [[f64; 3]; 3]) -> Option<([[f64; 3]; 3], f64)> {
    let e1 = sub(p[1], p[0]);
    let e2 = sub(p[2], p[0]);
    let n = cross(e1, e2);
    let twice_area = norm(n);
    let scale = norm(e1).max(norm(e2));
    if !(twice_area > 1e-14 * scale * scale) {
        return None;
    }
    let nh = [n[0] / twice_area, n[1] / twice_area, n[2] / twice_area];
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        // grad φ_i = n̂ × (p_{i+2} − p_{i+1}) / (2A)
        let opp = sub(p[(i + 2) % 3], p[(i + 1) % 3]);
        let c = cross(nh, opp);
        g[i] = [c[0] / twice_area, c[1] / twice_area, c[2] / twice_area];
    }
    Some((g, 0.5 * twice_area))
}

/// Gradients of the four P1 basis functions of a tetrahedron and its signed volume.
pub fn tet_gradients(p: [[f64; 3]; 4]) -> Option<([[f64; 3]; 4], f64)> {
    let a = sub(p[1], p[0]);
    let b = sub(p[2], p[0]);
    let c = sub(p[3], p[0]);
    let det = dot(a, cross(b, c));
    let scale = norm(a).max(norm(b)).max(norm(c));
    if !(det > 1e-14 * scale.powi(3)) {
        return None;
    }
    // rows of the inverse Jacobian are the gradients of φ_1..φ_3
    let g1 = cross(b, c).map(|x| x / det);
    let g2 = cross(c, a).map(|x| x / det);
    let g3 = cross(a, b).map(|x| x / det);
    let g0 = [
        -(g1[0] + g2[0] + g3[0]),
        -(g1[1] + g2[1] + g3[1]),
        -(g1[2] + g2[2] + g3[2]),
    ];
    Some(([g0, g1, g2, g3], det / 6.0))
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn assemble_triangles(
    vertices: &[[f64; 3]],
    triangles: &[[usize; 3]],
    dof_map: Vec<usize>,
    n: usize,
) -> Result<AssembledForms> {
    let mut kt = Vec::with_capacity(9 * triangles.len());
    let mut mt = Vec::with_capacity(9 * triangles.len());
    for (e, t) in triangles.iter().enumerate() {
        let p = t.map(|v| vertices[v]);
        let (g, area) = triangle_gradients(p)
            .ok_or_else(|| Error::Assembly(format!("degenerate triangle {e}: {t:?}")))?;
        let d = t.map(|v| dof_map[v]);
        for i in 0..3 {
            for j in 0..3 {
                kt.push((d[i], d[j], area * dot(g[i], g[j])));
                let w = if i == j { area / 6.0 } else { area / 12.0 };
                mt.push((d[i], d[j], w));
            }
        }
    }
    Ok(AssembledForms {
        stiffness: CsrMatrix::from_triplets(n, n, kt),
        mass: CsrMatrix::from_triplets(n, n, mt),
        dof_map,
        n,
    })
}

/// Forms of the limit problem: Dirichlet energy summed over pages and the
/// surface L² mass, on the conforming P1 space of the surface mesh.
pub fn assemble_surface(mesh: &SurfaceMesh) -> Result<AssembledForms> {
    let (dof_map, n) = mesh.dof_map();
    assemble_triangles(&mesh.vertices, &mesh.triangles, dof_map, n)
}

/// Forms of the 2D Neumann problem on a cross-section.
pub fn assemble_planar(cs: &CrossSectionMesh) -> Result<AssembledForms> {
    let vertices: Vec<[f64; 3]> = cs.points.iter().map(|p| [p[0], p[1], 0.0]).collect();
    let n = vertices.len();
    assemble_triangles(&vertices, &cs.triangles, (0..n).collect(), n)
}

/// Forms of the Neumann problem on the fattened domain.
pub fn assemble_volume(mesh: &TetMesh) -> Result<AssembledForms> {
    let n = mesh.vertices.len();
    let mut kt = Vec::with_capacity(16 * mesh.tets.len());
    let mut mt = Vec::with_capacity(16 * mesh.tets.len());
    for (e, t) in mesh.tets.iter().enumerate() {
        let (g, vol) = tet_gradients(mesh.tet_points(e))
            .ok_or_else(|| Error::Assembly(format!("inverted or flat tetrahedron {e}: {t:?}")))?;
        for i in 0..4 {
            for j in 0..4 {
                kt.push((t[i], t[j], vol * dot(g[i], g[j])));
                let w = if i == j { vol / 10.0 } else { vol / 20.0 };
                mt.push((t[i], t[j], w));
            }
        }
    }
    Ok(AssembledForms {
        stiffness: CsrMatrix::from_triplets(n, n, kt),
        mass: CsrMatrix::from_triplets(n, n, mt),
        dof_map: (0..n).collect(),
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KirchhoffResidual {
    /// Net conormal flux into each binding DOF, averaged over its two binding edges.
    pub per_node: Vec<f64>,
    /// √(Σ_e J_e² |e|) over binding edges, J_e the summed page fluxes on edge e.
    pub norm: f64,
    /// √(Σ_e Σ_k (D_ν_k u)² |e|), the size of the individual page fluxes.
    pub flux_scale: f64,
    /// Euclidean norm of the weak residual (K u − λ M u) on binding DOFs.
    pub weak_norm: f64,
}

impl KirchhoffResidual {
    pub fn relative(&self) -> f64 {
        if self.flux_scale > 0.0 {
            self.norm / self.flux_scale
        } else {
            0.0
        }
    }
}

/// Flux-balance diagnostic at the binding for a DOF vector `u` with eigenvalue
/// `lambda`: on every binding edge, sums the conormal derivatives of u taken
/// from the element of each incident page.
pub fn kirchhoff_residual(mesh: &SurfaceMesh, u: &[f64], lambda: f64) -> KirchhoffResidual {
    let (dof, _) = mesh.dof_map();
    let binding: HashMap<usize, usize> = mesh
        .binding_vertex_ids
        .iter()
        .enumerate()
        .map(|(j, &v)| (v, j))
        .collect();
    let nb = mesh.binding_vertex_ids.len();
    // binding edge j joins binding vertices j and j+1
    let mut edge_flux = vec![0.0; nb.saturating_sub(1)];
    let mut edge_sq = vec![0.0; nb.saturating_sub(1)];
    let mut edge_len = vec![0.0; nb.saturating_sub(1)];
    let mut weak: HashMap<usize, f64> = HashMap::new();

    for t in &mesh.triangles {
        let on_binding: Vec<(usize, usize)> = (0..3)
            .filter_map(|i| binding.get(&t[i]).map(|&j| (i, j)))
            .collect();
        if on_binding.is_empty() {
            continue;
        }
        let p = t.map(|v| mesh.vertices[v]);
        let Some((g, area)) = triangle_gradients(p) else {
            continue;
        };
        let uv = t.map(|v| u[dof[v]]);
        // difference form, so constants give an exactly zero gradient
        let grad = [0, 1, 2].map(|c| (uv[1] - uv[0]) * g[1][c] + (uv[2] - uv[0]) * g[2][c]);

        for &(i, _) in &on_binding {
            let mut r = area * dot(g[i], grad);
            let mu: f64 = (0..3)
                .map(|j| if i == j { area / 6.0 } else { area / 12.0 } * uv[j])
                .sum();
            r -= lambda * mu;
            *weak.entry(dof[t[i]]).or_insert(0.0) += r;
        }

        if on_binding.len() == 2 {
            let (ia, ja) = on_binding[0];
            let (ib, jb) = on_binding[1];
            let e = if ja + 1 == jb {
                ja
            } else if jb + 1 == ja {
                jb
            } else {
                continue;
            };
            let c = 3 - ia - ib;
            let a = p[ia];
            let b = p[ib];
            let along = sub(b, a);
            let len = norm(along);
            let dir = along.map(|x| x / len);
            // conormal: in the page plane, perpendicular to the binding, pointing out of the page
            let w = sub(a, p[c]);
            let perp = sub(w, dir.map(|x| x * dot(w, dir)));
            let nu = perp.map(|x| x / norm(perp));
            let flux = dot(grad, nu);
            edge_flux[e] += flux;
            edge_sq[e] += flux * flux;
            edge_len[e] = len;
        }
    }

    let ne = edge_flux.len();
    let periodic = mesh.periodic.iter().any(|&(img, src)| {
        src == mesh.binding_vertex_ids[0] && img == mesh.binding_vertex_ids[nb - 1]
    });
    let nodes = if periodic { nb - 1 } else { nb };
    let per_node = (0..nodes)
        .map(|j| {
            let left = if j > 0 {
                Some(edge_flux[j - 1])
            } else if periodic {
                Some(edge_flux[ne - 1])
            } else {
                None
            };
            let right = if j < ne { Some(edge_flux[j]) } else { None };
            match (left, right) {
                (Some(l), Some(r)) => 0.5 * (l + r),
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => 0.0,
            }
        })
        .collect();
    let norm_sq: f64 = (0..ne).map(|e| edge_flux[e].powi(2) * edge_len[e]).sum();
    let scale_sq: f64 = (0..ne).map(|e| edge_sq[e] * edge_len[e]).sum();
    let mut weak_vals: Vec<(usize, f64)> = weak.into_iter().collect();
    weak_vals.sort_by_key(|x| x.0);
    let weak_norm = weak_vals.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
    KirchhoffResidual {
        per_node,
        norm: norm_sq.sqrt(),
        flux_scale: scale_sq.sqrt(),
        weak_norm,
    }
}
