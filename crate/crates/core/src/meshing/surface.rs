use crate::error::{Error, Result};
use crate::geometry::OpenBookStructure;

/// Structured grid of one page: `ns` cells across the page, `nz` along the binding.
#[derive(Debug, Clone, PartialEq)]
pub struct PageGrid {
    pub page: usize,
    pub first_vertex: usize,
    pub ns: usize,
    pub length: f64,
    pub direction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub page_tag: Vec<usize>,
    /// Binding vertices ordered along the binding, including the duplicate
    /// end row at z = L.
    pub binding_vertex_ids: Vec<usize>,
    /// (image, source) pairs: each vertex of the z = L row and its z = 0 twin.
    pub periodic: Vec<(usize, usize)>,
    pub h: f64,
    pub nz: usize,
    pub binding_length: f64,
    pub pages: Vec<PageGrid>,
}

impl SurfaceMesh {
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    pub fn triangle_area(&self, t: &[usize; 3]) -> f64 {
        let [a, b, c] = t.map(|i| self.vertices[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }

    /// Vertex → degree of freedom, merging every periodic image with its source.
    pub fn dof_map(&self) -> (Vec<usize>, usize) {
        let mut source: Vec<usize> = (0..self.vertices.len()).collect();
        for &(img, src) in &self.periodic {
            source[img] = src;
        }
        let mut dof = vec![usize::MAX; self.vertices.len()];
        let mut n = 0;
        for v in 0..self.vertices.len() {
            if source[v] == v {
                dof[v] = n;
                n += 1;
            }
        }
        for v in 0..self.vertices.len() {
            if source[v] != v {
                dof[v] = dof[source[v]];
            }
        }
        (dof, n)
    }

    /// Vertex at grid position (i across, j along) of a page; i = 0 is the binding.
    pub fn grid_vertex(&self, page: usize, i: usize, j: usize) -> usize {
        if i == 0 {
            self.binding_vertex_ids[j]
        } else {
            self.pages[page].first_vertex + (i - 1) * (self.nz + 1) + j
        }
    }

    /// P1 interpolation weights (vertex, weight) at distance `s` from the
    /// binding along page `page` and height `z` (taken modulo the binding length).
    pub fn point_weights(&self, page: usize, s: f64, z: f64) -> Vec<(usize, f64)> {
        let g = &self.pages[page];
        let ds = g.length / g.ns as f64;
        let dz = self.binding_length / self.nz as f64;
        let (i, xi) = cell_coord(s / ds, g.ns);
        let (j, eta) = cell_coord(z.rem_euclid(self.binding_length) / dz, self.nz);
        let v00 = self.grid_vertex(page, i, j);
        let v10 = self.grid_vertex(page, i + 1, j);
        let v11 = self.grid_vertex(page, i + 1, j + 1);
        let v01 = self.grid_vertex(page, i, j + 1);
        if xi >= eta {
            vec![(v00, 1.0 - xi), (v10, xi - eta), (v11, eta)]
        } else {
            vec![(v00, 1.0 - eta), (v11, xi), (v01, eta - xi)]
        }
    }
}

/// Splits a coordinate measured in cells into (cell index, local fraction),
/// clamped to `n` cells.
pub(crate) fn cell_coord(t: f64, n: usize) -> (usize, f64) {
    let mut i = t.floor();
    let mut f = t - i;
    if f > 1.0 - 1e-10 {
        i += 1.0;
        f = 0.0;
    } else if f < 1e-10 {
        f = 0.0;
    }
    if i < 0.0 {
        return (0, 0.0);
    }
    let i = i as usize;
    if i >= n {
        (n - 1, 1.0)
    } else {
        (i, f)
    }
}

/// Structured P1 triangulation of every page, sharing one row of binding
/// vertices and periodic in the binding direction.
pub fn mesh_surface(s: &OpenBookStructure, h: f64) -> Result<SurfaceMesh> {
    if !s.is_periodic_flat_book() {
        return Err(Error::InvalidParameter(
            "surface meshing supports periodic flat books only".into(),
        ));
    }
    let big_l = s.binding_length();
    let max = s.min_page_length().min(big_l) / 2.0;
    if !(h > 0.0 && h <= max + 1e-12 * max) {
        return Err(Error::MeshResolution { h, max });
    }
    let nz = (big_l / h - 1e-9).ceil().max(1.0) as usize;
    let dz = big_l / nz as f64;

    let mut vertices: Vec<[f64; 3]> = (0..=nz).map(|j| [0.0, 0.0, j as f64 * dz]).collect();
    let binding_vertex_ids: Vec<usize> = (0..=nz).collect();
    let mut periodic = vec![(nz, 0)];
    let mut pages = Vec::new();
    for (k, p) in s.pages.iter().enumerate() {
        let ns = (p.length / h - 1e-9).ceil().max(1.0) as usize;
        let ds = p.length / ns as f64;
        let d = s.page_direction(k);
        let first = vertices.len();
        for i in 1..=ns {
            let r = i as f64 * ds;
            for j in 0..=nz {
                vertices.push([r * d[0], r * d[1], j as f64 * dz]);
            }
            periodic.push((first + (i - 1) * (nz + 1) + nz, first + (i - 1) * (nz + 1)));
        }
        pages.push(PageGrid {
            page: k,
            first_vertex: first,
            ns,
            length: p.length,
            direction: d,
        });
    }

    let mut mesh = SurfaceMesh {
        vertices,
        triangles: vec![],
        page_tag: vec![],
        binding_vertex_ids,
        periodic,
        h,
        nz,
        binding_length: big_l,
        pages,
    };
    let mut triangles = Vec::new();
    let mut page_tag = Vec::new();
    for k in 0..mesh.pages.len() {
        for i in 0..mesh.pages[k].ns {
            for j in 0..nz {
                let v00 = mesh.grid_vertex(k, i, j);
                let v10 = mesh.grid_vertex(k, i + 1, j);
                let v11 = mesh.grid_vertex(k, i + 1, j + 1);
                let v01 = mesh.grid_vertex(k, i, j + 1);
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
                page_tag.extend([k, k]);
            }
        }
    }
    mesh.triangles = triangles;
    mesh.page_tag = page_tag;
    Ok(mesh)
}

/// Structured triangulation of the rectangle [0, a] × [0, b] in the plane
/// z = 0, with free (Neumann) edges everywhere.
pub fn mesh_rectangle(a: f64, b: f64, h: f64) -> Result<SurfaceMesh> {
    if !(a > 0.0 && b > 0.0 && h > 0.0) {
        return Err(Error::InvalidParameter("rectangle sides and h must be positive".into()));
    }
    let nx = (a / h - 1e-9).ceil().max(1.0) as usize;
    let ny = (b / h - 1e-9).ceil().max(1.0) as usize;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            vertices.push([a * i as f64 / nx as f64, b * j as f64 / ny as f64, 0.0]);
        }
    }
    let v = |i: usize, j: usize| i * (ny + 1) + j;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            triangles.push([v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
            triangles.push([v(i, j), v(i + 1, j + 1), v(i, j + 1)]);
        }
    }
    let nt = triangles.len();
    Ok(SurfaceMesh {
        vertices,
        triangles,
        page_tag: vec![0; nt],
        binding_vertex_ids: vec![],
        periodic: vec![],
        h,
        nz: ny,
        binding_length: b,
        pages: vec![],
    })
}
