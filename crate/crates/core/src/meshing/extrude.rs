use std::collections::HashMap;

use super::cross_section::{CrossSectionMesh, PointLocator, Region};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    /// Vertex coordinates with z in [0, L); layer l holds the cross-section at z = l·L/n_z.
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    /// Slab index of each tet; the last slab wraps to layer 0.
    pub tet_slab: Vec<usize>,
    pub region: Vec<Region>,
    pub boundary_faces: Vec<[usize; 3]>,
    pub layer_size: usize,
    pub n_z: usize,
    pub length: f64,
    /// True when the last slab connects back to layer 0.
    pub periodic: bool,
    /// The extruded cross-section; layer vertices follow its point order.
    pub section: CrossSectionMesh,
}

impl TetMesh {
    pub fn layer_of(&self, v: usize) -> usize {
        v / self.layer_size
    }

    /// The periodic map: shifts a vertex one layer up, wrapping at the end.
    pub fn periodic_shift(&self, v: usize) -> usize {
        let layer = v / self.layer_size;
        let i = v % self.layer_size;
        ((layer + 1) % self.n_z) * self.layer_size + i
    }

    /// Unwrapped coordinates of a tet's vertices (z = L instead of 0 on the
    /// top face of the wrapping slab).
    pub fn tet_points(&self, t: usize) -> [[f64; 3]; 4] {
        self.tets[t].map(|v| self.unwrapped(v, self.tet_slab[t]))
    }

    pub fn unwrapped(&self, v: usize, slab: usize) -> [f64; 3] {
        let mut p = self.vertices[v];
        if self.periodic && slab + 1 == self.n_z && self.layer_of(v) == 0 {
            p[2] += self.length;
        }
        p
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(self.tet_points(t))
    }

    pub fn layer_spacing(&self) -> f64 {
        self.length / self.n_z as f64
    }

    /// P1 interpolation weights (vertex, weight) at a point of the domain.
    /// Points outside the polygonal cross-section by at most twice its arc
    /// tolerance snap onto it; points farther out are an error.
    pub fn point_weights(&self, locator: &PointLocator<'_>, p: [f64; 3]) -> Result<Vec<(usize, f64)>> {
        let tol = 2.0 * self.section.arc_tol + 1e-12 * (1.0 + p[0].abs() + p[1].abs());
        let (t, w) = locator.locate_within([p[0], p[1]], tol)?;
        let tri = self.section.triangles[t];
        let period = if self.periodic { self.length } else { f64::INFINITY };
        let z = if self.periodic { p[2].rem_euclid(period) } else { p[2] };
        let (l, f) = super::surface::cell_coord(z / self.layer_spacing(), self.n_z);
        let lo = l;
        let hi = if self.periodic { (l + 1) % self.n_z } else { l + 1 };
        let ls = self.layer_size;
        if f == 0.0 {
            return Ok((0..3).map(|i| (lo * ls + tri[i], w[i])).collect());
        }
        // sort the triangle's vertices by index, as in the prism split
        let mut order = [0usize, 1, 2];
        order.sort_by_key(|&i| tri[i]);
        let [ia, ib, ic] = order;
        let (a, b, c) = (tri[ia], tri[ib], tri[ic]);
        let (wa, wb, wc) = (w[ia], w[ib], w[ic]);
        let bot = |v: usize| lo * ls + v;
        let top = |v: usize| hi * ls + v;
        Ok(if f <= wc {
            vec![(bot(a), wa), (bot(b), wb), (bot(c), wc - f), (top(c), f)]
        } else if f <= wb + wc {
            vec![(bot(a), wa), (bot(b), wb - (f - wc)), (top(b), f - wc), (top(c), wc)]
        } else {
            vec![(bot(a), 1.0 - f), (top(a), f - wb - wc), (top(b), wb), (top(c), wc)]
        })
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// Every face is shared by at most two tets, and the faces used once are
    /// exactly the recorded boundary faces.
    pub fn check_conformity(&self) -> Result<()> {
        let mut count: HashMap<[usize; 3], usize> = HashMap::new();
        for t in &self.tets {
            for skip in 0..4 {
                let mut f = [0usize; 3];
                let mut k = 0;
                for (i, &v) in t.iter().enumerate() {
                    if i != skip {
                        f[k] = v;
                        k += 1;
                    }
                }
                f.sort_unstable();
                *count.entry(f).or_insert(0) += 1;
            }
        }
        if let Some((f, c)) = count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::MeshTopology(format!("face {f:?} shared by {c} tets")));
        }
        let once = count.values().filter(|&&c| c == 1).count();
        if once != self.boundary_faces.len() {
            return Err(Error::MeshTopology(format!(
                "{once} unmatched faces but {} boundary faces",
                self.boundary_faces.len()
            )));
        }
        for bf in &self.boundary_faces {
            let mut f = *bf;
            f.sort_unstable();
            if count.get(&f) != Some(&1) {
                return Err(Error::MeshTopology(format!("boundary face {bf:?} is not on the boundary")));
            }
        }
        Ok(())
    }
}

pub fn signed_volume(p: [[f64; 3]; 4]) -> f64 {
    let a = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
    let b = [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]];
    let c = [p[3][0] - p[0][0], p[3][1] - p[0][1], p[3][2] - p[0][2]];
    (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0]))
        / 6.0
}

/// Splits the prism over triangle (a, b, c) with a < b < c between layers
/// `lo` and `hi`. Each quadrilateral side face gets the diagonal through its
/// smaller-index bottom vertex, so neighbouring prisms agree.
fn split_prism(tri: [usize; 3], lo: usize, hi: usize, layer: usize) -> [[usize; 4]; 3] {
    let mut s = tri;
    s.sort_unstable();
    let [a, b, c] = s;
    let (a0, b0, c0) = (lo * layer + a, lo * layer + b, lo * layer + c);
    let (a1, b1, c1) = (hi * layer + a, hi * layer + b, hi * layer + c);
    [[a0, b0, c0, c1], [a0, b0, b1, c1], [a0, a1, b1, c1]]
}

fn build(cs: &CrossSectionMesh, length: f64, n_z: usize, periodic: bool) -> Result<TetMesh> {
    let layer = cs.points.len();
    let n_layers = if periodic { n_z } else { n_z + 1 };
    let dz = length / n_z as f64;
    let mut vertices = Vec::with_capacity(layer * n_layers);
    for l in 0..n_layers {
        for p in &cs.points {
            vertices.push([p[0], p[1], l as f64 * dz]);
        }
    }
    let mut mesh = TetMesh {
        vertices,
        tets: Vec::with_capacity(3 * cs.triangles.len() * n_z),
        tet_slab: Vec::with_capacity(3 * cs.triangles.len() * n_z),
        region: Vec::with_capacity(3 * cs.triangles.len() * n_z),
        boundary_faces: Vec::new(),
        layer_size: layer,
        n_z,
        length,
        periodic,
        section: cs.clone(),
    };
    for slab in 0..n_z {
        let hi = if periodic { (slab + 1) % n_z } else { slab + 1 };
        for (t, tri) in cs.triangles.iter().enumerate() {
            for mut tet in split_prism(*tri, slab, hi, layer) {
                let vol = signed_volume(tet.map(|v| mesh.unwrapped(v, slab)));
                if vol < 0.0 {
                    tet.swap(0, 1);
                } else if vol == 0.0 {
                    return Err(Error::MeshTopology("degenerate tetrahedron in prism split".into()));
                }
                mesh.tets.push(tet);
                mesh.tet_slab.push(slab);
                mesh.region.push(cs.region[t]);
            }
        }
        for [a, b] in cs.boundary_edges() {
            let (lo_a, lo_b) = (slab * layer + a, slab * layer + b);
            let (hi_a, hi_b) = (hi * layer + a, hi * layer + b);
            // same diagonal rule as the prism split: through the smaller bottom index
            if a < b {
                mesh.boundary_faces.push([lo_a, lo_b, hi_b]);
                mesh.boundary_faces.push([lo_a, hi_b, hi_a]);
            } else {
                mesh.boundary_faces.push([lo_a, lo_b, hi_a]);
                mesh.boundary_faces.push([lo_b, hi_b, hi_a]);
            }
        }
    }
    if !periodic {
        for t in &cs.triangles {
            mesh.boundary_faces.push(*t);
            mesh.boundary_faces.push(t.map(|v| n_z * layer + v));
        }
    }
    mesh.check_conformity()?;
    Ok(mesh)
}

/// Extrudes a cross-section into `n_z` periodic layers along the binding.
pub fn extrude_periodic(cs: &CrossSectionMesh, length: f64, n_z: usize) -> Result<TetMesh> {
    if n_z < 4 {
        return Err(Error::InvalidParameter(format!("n_z must be at least 4, got {n_z}")));
    }
    if !(length > 0.0) {
        return Err(Error::InvalidParameter("binding length must be positive".into()));
    }
    build(cs, length, n_z, true)
}

/// Non-periodic extrusion with free top and bottom faces (used for box tests).
pub fn extrude_closed(cs: &CrossSectionMesh, length: f64, n_z: usize) -> Result<TetMesh> {
    if n_z < 1 || !(length > 0.0) {
        return Err(Error::InvalidParameter("need n_z ≥ 1 and a positive length".into()));
    }
    build(cs, length, n_z, false)
}

/// Structured cross-section of the rectangle [0, a] × [0, b], all strip-tagged.
pub fn rectangle_cross_section(a: f64, b: f64, nx: usize, ny: usize) -> CrossSectionMesh {
    let mut points = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            points.push([a * i as f64 / nx as f64, b * j as f64 / ny as f64]);
        }
    }
    let v = |i: usize, j: usize| i * (ny + 1) + j;
    let mut triangles = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            triangles.push([v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
            triangles.push([v(i, j), v(i + 1, j + 1), v(i, j + 1)]);
        }
    }
    let region = vec![Region::Strip(0); triangles.len()];
    CrossSectionMesh {
        points,
        triangles,
        region,
        boundary: vec![[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]],
        arc_tol: 0.0,
        eps: 0.0,
        h: (a / nx as f64).max(b / ny as f64),
        junction_radius: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_periodic_flat_book;
    use crate::meshing::cross_section::build_cross_section;

    #[test]
    fn counts_follow_the_extrusion_formula() {
        let cs = rectangle_cross_section(1.0, 1.0, 4, 4);
        let m = extrude_periodic(&cs, 2.0, 8).unwrap();
        assert_eq!(m.vertices.len(), cs.points.len() * 8);
        assert_eq!(m.tets.len(), 3 * cs.triangles.len() * 8);
        assert!((m.volume() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn book_extrusion_positive_and_measure_preserving() {
        let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
        let cs = build_cross_section(&s, 0.1, 0.05, 0.002).unwrap();
        let m = extrude_periodic(&cs, 1.0, 16).unwrap();
        for t in 0..m.tets.len() {
            assert!(m.tet_volume(t) > 0.0);
        }
        let expected = cs.area() * 1.0;
        assert!((m.volume() - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn periodic_shift_has_period_nz() {
        let cs = rectangle_cross_section(1.0, 1.0, 3, 3);
        let m = extrude_periodic(&cs, 1.0, 5).unwrap();
        for v in 0..m.vertices.len() {
            let mut w = v;
            for step in 1..=m.n_z {
                w = m.periodic_shift(w);
                if step < m.n_z {
                    assert_ne!(w, v);
                }
            }
            assert_eq!(w, v);
        }
    }

    #[test]
    fn closed_box_has_six_faces_of_boundary() {
        let cs = rectangle_cross_section(1.0, 2.0, 2, 3);
        let m = extrude_closed(&cs, 3.0, 4).unwrap();
        assert!((m.volume() - 6.0).abs() < 1e-12);
        let area: f64 = m
            .boundary_faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|v| m.vertices[v]);
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                0.5 * ((u[1] * w[2] - u[2] * w[1]).powi(2)
                    + (u[2] * w[0] - u[0] * w[2]).powi(2)
                    + (u[0] * w[1] - u[1] * w[0]).powi(2))
                .sqrt()
            })
            .sum();
        assert!((area - 2.0 * (2.0 + 3.0 + 6.0)).abs() < 1e-12);
    }

    #[test]
    fn point_weights_reproduce_linear_functions() {
        let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
        let cs = build_cross_section(&s, 0.1, 0.05, 0.002).unwrap();
        let m = extrude_periodic(&cs, 1.0, 7).unwrap();
        let loc = m.section.locator();
        let f = |p: [f64; 3]| 0.3 + 2.0 * p[0] - p[1];
        for &p in &[[0.5, 0.02, 0.31], [-0.25, 0.4, 0.999], [0.0, 0.0, 0.5], [0.9, -0.05, 0.0]] {
            let w = m.point_weights(&loc, p).unwrap();
            let total: f64 = w.iter().map(|x| x.1).sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert!(w.iter().all(|x| x.1 >= -1e-14));
            let v: f64 = w.iter().map(|&(i, c)| c * f(m.vertices[i])).sum();
            assert!((v - f(p)).abs() < 1e-12);
            // z is reproduced within one slab (unwrapped across the seam)
            let z: f64 = w
                .iter()
                .map(|&(i, c)| {
                    let mut zi = m.vertices[i][2];
                    if zi + 0.5 < p[2] {
                        zi += 1.0;
                    }
                    c * zi
                })
                .sum();
            assert!((z - p[2]).abs() < 1e-12, "{z} vs {}", p[2]);
        }
    }

    #[test]
    fn far_points_are_rejected() {
        let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
        let cs = build_cross_section(&s, 0.1, 0.05, 0.002).unwrap();
        let m = extrude_periodic(&cs, 1.0, 5).unwrap();
        let loc = m.section.locator();
        assert!(matches!(m.point_weights(&loc, [0.5, 0.5, 0.1]), Err(Error::Geometry(_))));
    }

    #[test]
    fn too_few_layers_rejected() {
        let cs = rectangle_cross_section(1.0, 1.0, 2, 2);
        assert!(extrude_periodic(&cs, 1.0, 3).is_err());
    }
}
