use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::delaunay::{mesh_polygon, orient, point_in_polygon, tri_area};
use crate::error::{Error, Result};
use crate::geometry::OpenBookStructure;

/// Radius-edge bound used for the cross-section triangulation (min angle ≈ 20.7°).
pub const QUALITY_RATIO: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Strip(usize),
    Junction,
    Cap(usize),
}

impl Region {
    /// Integer code used in VTK cell data: junction 0, strips 1.., caps 101...
    pub fn code(&self) -> i64 {
        match *self {
            Region::Junction => 0,
            Region::Strip(k) => 1 + k as i64,
            Region::Cap(k) => 101 + k as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionMesh {
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub region: Vec<Region>,
    /// Counter-clockwise boundary polygon before triangulation.
    pub boundary: Vec<[f64; 2]>,
    pub arc_tol: f64,
    pub eps: f64,
    pub h: f64,
    pub junction_radius: f64,
}

impl CrossSectionMesh {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| tri_area(self.points[t[0]], self.points[t[1]], self.points[t[2]]))
            .sum()
    }

    pub fn polygon_area(&self) -> f64 {
        let n = self.boundary.len();
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = (self.boundary[i], self.boundary[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.boundary.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.boundary[i], self.boundary[(i + 1) % n]);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .sum()
    }

    pub fn min_angle_deg(&self) -> f64 {
        super::delaunay::PlanarMesh {
            points: self.points.clone(),
            triangles: self.triangles.clone(),
        }
        .min_angle_deg()
    }

    /// Boundary edges (vertex pairs, counter-clockwise) of the triangulation.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count = std::collections::HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        let mut edges = Vec::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                if count[&(a.min(b), a.max(b))] == 1 {
                    edges.push([a, b]);
                }
            }
        }
        edges
    }

    /// Whether `p` lies inside the polygonal boundary.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        point_in_polygon(p, &self.boundary)
    }

    /// Triangle containing `p` (with barycentric weights), by brute force over
    /// a uniform bucket grid built on first use by the caller.
    pub fn locator(&self) -> PointLocator<'_> {
        PointLocator::new(self)
    }
}

/// Uniform-grid bucket search for point location in a cross-section mesh.
pub struct PointLocator<'a> {
    mesh: &'a CrossSectionMesh,
    lo: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    fn new(mesh: &'a CrossSectionMesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let cell = (mesh.h * 0.5).max(1e-12);
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1);
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for &v in tri {
                for d in 0..2 {
                    tlo[d] = tlo[d].min(mesh.points[v][d]);
                    thi[d] = thi[d].max(mesh.points[v][d]);
                }
            }
            let i0 = (((tlo[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let i1 = (((thi[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let j0 = (((tlo[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            let j1 = (((thi[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[i * ny + j].push(t);
                }
            }
        }
        Self {
            mesh,
            lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangles[t].map(|v| self.mesh.points[v]);
        let area = orient(a, b, c);
        [
            orient(p, b, c) / area,
            orient(a, p, c) / area,
            orient(a, b, p) / area,
        ]
    }

    /// Triangle and barycentric weights of `p`. Points slightly outside the
    /// mesh (within polygonal approximation error) snap to the closest triangle.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        let i = ((p[0] - self.lo[0]) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p[1] - self.lo[1]) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        let mut best = (usize::MAX, [0.0; 3], f64::NEG_INFINITY);
        let search = |cands: &[usize], best: &mut (usize, [f64; 3], f64)| {
            for &t in cands {
                let w = self.barycentric(t, p);
                let worst = w[0].min(w[1]).min(w[2]);
                if worst > best.2 {
                    *best = (t, w, worst);
                }
            }
        };
        search(&self.buckets[i * self.ny + j], &mut best);
        if best.2 < -1e-12 {
            for r in 1..=2usize {
                for di in -(r as i64)..=(r as i64) {
                    for dj in -(r as i64)..=(r as i64) {
                        let (ii, jj) = (i as i64 + di, j as i64 + dj);
                        if ii < 0 || jj < 0 || ii >= self.nx as i64 || jj >= self.ny as i64 {
                            continue;
                        }
                        search(&self.buckets[ii as usize * self.ny + jj as usize], &mut best);
                    }
                }
            }
        }
        if best.2 < -1e-6 {
            let all: Vec<usize> = (0..self.mesh.triangles.len()).collect();
            search(&all, &mut best);
        }
        let (t, w, worst) = best;
        if worst >= 0.0 {
            return (t, w);
        }
        // clip to the triangle and renormalize
        let mut w = w.map(|x| x.max(0.0));
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        (t, w)
    }
}

impl PointLocator<'_> {
    /// Like `locate`, but fails when `p` lies farther than `tol` from the mesh.
    pub fn locate_within(&self, p: [f64; 2], tol: f64) -> Result<(usize, [f64; 3])> {
        let (t, w) = self.locate(p);
        let tri = self.mesh.triangles[t];
        let mut q = [0.0; 2];
        for i in 0..3 {
            for d in 0..2 {
                q[d] += w[i] * self.mesh.points[tri[i]][d];
            }
        }
        let dist = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        if dist > tol {
            return Err(Error::Geometry(format!(
                "point ({:.6}, {:.6}) lies {dist:.3e} outside the cross-section",
                p[0], p[1]
            )));
        }
        Ok((t, w))
    }
}

fn arc_points(center: [f64; 2], r: f64, from: f64, to: f64, arc_tol: f64) -> Vec<[f64; 2]> {
    let step = 2.0 * (1.0 - (arc_tol / r).min(1.0)).acos();
    let n = (((to - from) / step).ceil() as usize).max(1);
    (0..=n)
        .map(|i| {
            let a = from + (to - from) * i as f64 / n as f64;
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        })
        .collect()
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Counter-clockwise boundary of the union of the ε-neighbourhoods of the
/// page segments in the plane normal to the binding.
pub fn cross_section_boundary(s: &OpenBookStructure, eps: f64, arc_tol: f64) -> Result<Vec<[f64; 2]>> {
    let order = s.pages_by_angle();
    let e = order.len();
    let mut poly: Vec<[f64; 2]> = Vec::new();
    for idx in 0..e {
        let prev = order[(idx + e - 1) % e];
        let k = order[idx];
        let (th_prev, th) = (s.pages[prev].angle, s.pages[k].angle);
        let mut gap = (th - th_prev).rem_euclid(TAU);
        if e == 1 || gap == 0.0 {
            gap = TAU;
        }
        // junction between the previous page's left side and this page's right side
        if gap > PI + 1e-12 {
            let from = th_prev + PI / 2.0;
            let to = th_prev + gap - PI / 2.0;
            let pts = arc_points([0.0, 0.0], eps, from, to, arc_tol);
            poly.extend(pts);
        } else {
            let r = eps / (gap / 2.0).sin();
            let b = th_prev + gap / 2.0;
            poly.push([r * b.cos(), r * b.sin()]);
        }
        // this page: right side runs implicitly to the cap, cap arc, left side
        let len = s.pages[k].length;
        let tip = [len * th.cos(), len * th.sin()];
        let cap = arc_points(tip, eps, th - PI / 2.0, th + PI / 2.0, arc_tol);
        poly.extend(cap);
    }
    // drop consecutive duplicates (an arc end meeting a page side start)
    let mut clean: Vec<[f64; 2]> = Vec::with_capacity(poly.len());
    for p in poly {
        if clean
            .last()
            .is_none_or(|q: &[f64; 2]| (q[0] - p[0]).hypot(q[1] - p[1]) > 1e-12 * eps)
        {
            clean.push(p);
        }
    }
    while clean.len() > 1 {
        let (f, l) = (clean[0], clean[clean.len() - 1]);
        if (f[0] - l[0]).hypot(f[1] - l[1]) <= 1e-12 * eps {
            clean.pop();
        } else {
            break;
        }
    }
    let n = clean.len();
    if n < 3 {
        return Err(Error::Geometry("degenerate cross-section boundary".into()));
    }
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(clean[i], clean[(i + 1) % n], clean[j], clean[(j + 1) % n]) {
                return Err(Error::Geometry(format!(
                    "cross-section boundary self-intersects (edges {i} and {j})"
                )));
            }
        }
    }
    Ok(clean)
}

/// Exact area of the union of the ε-neighbourhoods of the page segments.
///
/// Valid for ε below the admissible bound, where the only overlaps are the
/// strips near the origin.
pub fn exact_cross_section_area(s: &OpenBookStructure, eps: f64) -> f64 {
    let order = s.pages_by_angle();
    let e = order.len();
    let mut area = 0.0;
    for &k in &order {
        area += 2.0 * eps * s.pages[k].length + 0.5 * PI * eps * eps;
    }
    for idx in 0..e {
        let prev = order[(idx + e - 1) % e];
        let k = order[idx];
        let mut gap = (s.pages[k].angle - s.pages[prev].angle).rem_euclid(TAU);
        if e == 1 || gap == 0.0 {
            gap = TAU;
        }
        // sector between the two adjacent page sides, counted relative to the
        // half-strips already included
        if gap >= PI {
            area += 0.5 * eps * eps * (gap - PI);
        } else {
            // kite overlap of the two half-strips inside the gap
            area -= eps * eps / (gap / 2.0).tan();
        }
    }
    area
}

/// Triangulates the cross-section of the fattened flat book, with target size
/// `h` (h/2 inside the junction disk) and arc sagitta at most `arc_tol`.
pub fn build_cross_section(
    s: &OpenBookStructure,
    eps: f64,
    h: f64,
    arc_tol: f64,
) -> Result<CrossSectionMesh> {
    if !s.is_periodic_flat_book() {
        return Err(Error::InvalidParameter(
            "cross-sections are defined for periodic flat books only".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if eps >= s.epsilon0 {
        return Err(Error::FatteningTooLarge {
            eps,
            eps0: s.epsilon0,
        });
    }
    if !(arc_tol > 0.0 && arc_tol <= eps / 10.0) {
        return Err(Error::InvalidParameter(format!(
            "arc_tol must lie in (0, eps/10], got {arc_tol}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("h must be positive, got {h}")));
    }
    let boundary = cross_section_boundary(s, eps, arc_tol)?;
    let rj = s.junction_radius(eps);
    let size = move |p: [f64; 2]| {
        if p[0].hypot(p[1]) < rj {
            0.5 * h
        } else {
            h
        }
    };
    let planar = mesh_polygon(&boundary, &size, QUALITY_RATIO)?;

    let order = s.pages_by_angle();
    let region = planar
        .triangles
        .iter()
        .map(|t| {
            let c = [
                (planar.points[t[0]][0] + planar.points[t[1]][0] + planar.points[t[2]][0]) / 3.0,
                (planar.points[t[0]][1] + planar.points[t[1]][1] + planar.points[t[2]][1]) / 3.0,
            ];
            if c[0].hypot(c[1]) <= rj {
                return Region::Junction;
            }
            let mut best = (f64::INFINITY, 0usize, 0.0);
            for &k in &order {
                let d = s.page_direction(k);
                let t = c[0] * d[0] + c[1] * d[1];
                let tc = t.clamp(0.0, s.pages[k].length);
                let dist = (c[0] - tc * d[0]).hypot(c[1] - tc * d[1]);
                if dist < best.0 {
                    best = (dist, k, t);
                }
            }
            if best.2 > s.pages[best.1].length {
                Region::Cap(best.1)
            } else {
                Region::Strip(best.1)
            }
        })
        .collect();

    let mesh = CrossSectionMesh {
        points: planar.points,
        triangles: planar.triangles,
        region,
        boundary,
        arc_tol,
        eps,
        h,
        junction_radius: rj,
    };
    for t in &mesh.triangles {
        let c = [
            (mesh.points[t[0]][0] + mesh.points[t[1]][0] + mesh.points[t[2]][0]) / 3.0,
            (mesh.points[t[0]][1] + mesh.points[t[1]][1] + mesh.points[t[2]][1]) / 3.0,
        ];
        if !point_in_polygon(c, &mesh.boundary) {
            return Err(Error::Geometry("triangle outside the cross-section".into()));
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_periodic_flat_book, flat_book};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn in_union(s: &OpenBookStructure, eps: f64, p: [f64; 2]) -> bool {
        (0..s.page_count()).any(|k| {
            let d = s.page_direction(k);
            let t = (p[0] * d[0] + p[1] * d[1]).clamp(0.0, s.pages[k].length);
            (p[0] - t * d[0]).hypot(p[1] - t * d[1]) <= eps
        })
    }

    fn monte_carlo_area(s: &OpenBookStructure, eps: f64, samples: usize, seed: u64) -> f64 {
        let r = s.pages.iter().map(|p| p.length).fold(0.0, f64::max) + eps;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hits = (0..samples)
            .filter(|_| {
                let p = [rng.random_range(-r..r), rng.random_range(-r..r)];
                in_union(s, eps, p)
            })
            .count();
        4.0 * r * r * hits as f64 / samples as f64
    }

    #[test]
    fn collinear_pair_is_a_stadium() {
        let s = flat_book(&[(1.0, 0.0), (1.0, PI)], 1.0).unwrap();
        let eps = 0.1;
        let exact = 0.4 + PI * 0.01;
        assert!((exact_cross_section_area(&s, eps) - exact).abs() < 1e-14);
        let mut prev_err = f64::INFINITY;
        for tol in [eps / 10.0, eps / 100.0, eps / 1000.0] {
            let cs = build_cross_section(&s, eps, 0.05, tol).unwrap();
            let err = (cs.area() - exact).abs();
            assert!((cs.area() - cs.polygon_area()).abs() < 1e-12);
            assert!(err < tol * cs.perimeter(), "tol {tol}: error {err}");
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-4);
    }

    #[test]
    fn single_page_stadium() {
        let s = build_periodic_flat_book(1, 1.0, 1.0, None).unwrap();
        let eps = 0.1;
        let exact = 0.2 + PI * 0.01;
        assert!((exact_cross_section_area(&s, eps) - exact).abs() < 1e-14);
        let cs = build_cross_section(&s, eps, 0.05, eps / 1000.0).unwrap();
        assert!((cs.area() - exact).abs() < 1e-4);
    }

    #[test]
    fn four_pages_match_monte_carlo() {
        let s = build_periodic_flat_book(4, 1.0, 1.0, None).unwrap();
        let eps = 0.05;
        let cs = build_cross_section(&s, eps, 0.05, eps / 50.0).unwrap();
        let mc = monte_carlo_area(&s, eps, 2_000_000, 7);
        assert!((cs.area() - mc).abs() / mc < 0.01, "{} vs {mc}", cs.area());
        assert!((exact_cross_section_area(&s, eps) - mc).abs() / mc < 0.01);
    }

    #[test]
    fn three_pages_quality_and_regions() {
        let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
        let eps = 0.1;
        let cs = build_cross_section(&s, eps, 0.05, eps / 50.0).unwrap();
        assert!(cs.min_angle_deg() >= 20.0, "{}", cs.min_angle_deg());
        let exact = 6.0 * eps - 3f64.sqrt() * eps * eps + 1.5 * PI * eps * eps;
        assert!((exact_cross_section_area(&s, eps) - exact).abs() < 1e-14);
        assert!((cs.area() - exact).abs() < cs.arc_tol * cs.perimeter());
        assert!((cs.area() - exact).abs() < 5e-3 * exact);
        for k in 0..3 {
            assert!(cs.region.contains(&Region::Strip(k)));
            assert!(cs.region.contains(&Region::Cap(k)));
        }
        assert!(cs.region.contains(&Region::Junction));
    }

    #[test]
    fn wide_gap_uses_disk_arc() {
        // two pages at 90°: one 270° gap with an exposed disk arc
        let s = flat_book(&[(1.0, 0.0), (1.0, PI / 2.0)], 1.0).unwrap();
        let eps = 0.1;
        let cs = build_cross_section(&s, eps, 0.05, eps / 200.0).unwrap();
        let mc = monte_carlo_area(&s, eps, 1_000_000, 3);
        assert!((cs.area() - exact_cross_section_area(&s, eps)).abs() < 1e-3);
        assert!((cs.area() - mc).abs() / mc < 0.01);
    }

    #[test]
    fn parameter_errors() {
        let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
        assert!(matches!(
            build_cross_section(&s, 0.3, 0.05, 0.001),
            Err(Error::FatteningTooLarge { .. })
        ));
        assert!(matches!(
            build_cross_section(&s, 0.1, 0.05, 0.02),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn locator_finds_points() {
        let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
        let cs = build_cross_section(&s, 0.1, 0.05, 0.002).unwrap();
        let loc = cs.locator();
        for &v in &[0usize, 5, 17, cs.points.len() - 1] {
            let (t, w) = loc.locate(cs.points[v]);
            let k = cs.triangles[t].iter().position(|&x| x == v).unwrap();
            assert!((w[k] - 1.0).abs() < 1e-9);
        }
        let p = [0.3, 0.01];
        let (t, w) = loc.locate(p);
        let x: f64 = (0..3).map(|i| w[i] * cs.points[cs.triangles[t][i]][0]).sum();
        assert!((x - 0.3).abs() < 1e-12);
    }
}
