//! Conforming Delaunay refinement of a simple polygon (Ruppert's algorithm).
//!
//! Triangulation is incremental Bowyer–Watson inside a super triangle.
//! Boundary segments are split at their midpoints until none is encroached,
//! which makes every segment an edge of the Delaunay triangulation; poor or
//! oversized interior triangles are then split at their circumcentres unless
//! the circumcentre encroaches a segment, in which case the segment is split
//! instead. Everything runs in a fixed order, so output is deterministic.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const MAX_POINTS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarMesh {
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

impl PlanarMesh {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| tri_area(self.points[t[0]], self.points[t[1]], self.points[t[2]]))
            .sum()
    }

    pub fn min_angle_deg(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| min_angle(self.points[t[0]], self.points[t[1]], self.points[t[2]]))
            .fold(180.0, f64::min)
    }
}

pub(crate) fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Signed area of a planar triangle (positive when counter-clockwise).
pub fn tri_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * orient(a, b, c)
}

fn in_circle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
}

/// Orientation of p against edge ab scaled to a signed distance-like quantity
/// (divided by |ab|), so a fixed tolerance can be applied.
fn edge_side(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    orient(a, b, p) / dist2(a, b).sqrt()
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn circumcenter(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    [a[0] + (cy * b2 - by * c2) / d, a[1] + (bx * c2 - cx * b2) / d]
}

fn min_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let la = dist2(b, c).sqrt();
    let lb = dist2(a, c).sqrt();
    let lc = dist2(a, b).sqrt();
    let ang = |opp: f64, s1: f64, s2: f64| {
        ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0).acos()
    };
    ang(la, lb, lc)
        .min(ang(lb, la, lc))
        .min(ang(lc, la, lb))
        .to_degrees()
}

/// Ratio of circumradius to shortest edge; √3/3 for an equilateral triangle.
fn radius_edge_ratio(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let la = dist2(b, c).sqrt();
    let lb = dist2(a, c).sqrt();
    let lc = dist2(a, b).sqrt();
    let area = tri_area(a, b, c).abs();
    let r = la * lb * lc / (4.0 * area);
    r / la.min(lb).min(lc)
}

pub(crate) fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [usize; 3],
    /// n[i] is the neighbour across the edge opposite v[i]
    n: [usize; 3],
    alive: bool,
}

struct Delaunay {
    pts: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    free: Vec<usize>,
    hint: usize,
    mark: Vec<u32>,
    stamp: u32,
    scale: f64,
}

impl Delaunay {
    fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let d = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        let r = 20.0 * d;
        let s3 = 3f64.sqrt();
        let pts = vec![
            [c[0] - s3 * r, c[1] - r],
            [c[0] + s3 * r, c[1] - r],
            [c[0], c[1] + 2.0 * r],
        ];
        Self {
            pts,
            tris: vec![Tri {
                v: [0, 1, 2],
                n: [NONE; 3],
                alive: true,
            }],
            free: vec![],
            hint: 0,
            mark: vec![0],
            stamp: 0,
            scale: d,
        }
    }

    fn p(&self, i: usize) -> [f64; 2] {
        self.pts[i]
    }

    fn locate(&self, p: [f64; 2]) -> Result<usize> {
        let mut t = self.hint;
        if !self.tris[t].alive {
            t = self
                .tris
                .iter()
                .position(|t| t.alive)
                .ok_or_else(|| Error::MeshTopology("empty triangulation".into()))?;
        }
        // stochastic visibility walk; the xorshift state keeps it deterministic
        let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (self.pts.len() as u64);
        let tol = 1e-13 * self.scale;
        let limit = 4 * self.tris.len() + 16;
        for _ in 0..limit {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let r = (state % 3) as usize;
            let tri = self.tris[t];
            let mut next = None;
            for k in 0..3 {
                let i = (k + r) % 3;
                let a = self.p(tri.v[(i + 1) % 3]);
                let b = self.p(tri.v[(i + 2) % 3]);
                if edge_side(a, b, p) < -tol {
                    next = Some(tri.n[i]);
                    break;
                }
            }
            match next {
                None => return Ok(t),
                Some(NONE) => break,
                Some(nb) => t = nb,
            }
        }
        // exhaustive fallback: the triangle p is least outside of
        let mut best = (f64::NEG_INFINITY, NONE);
        for (i, tri) in self.tris.iter().enumerate().filter(|(_, t)| t.alive) {
            let worst = (0..3)
                .map(|k| edge_side(self.p(tri.v[(k + 1) % 3]), self.p(tri.v[(k + 2) % 3]), p))
                .fold(f64::INFINITY, f64::min);
            if worst > best.0 {
                best = (worst, i);
            }
        }
        if best.0 >= -1e3 * tol {
            Ok(best.1)
        } else {
            Err(Error::Geometry(format!(
                "point ({}, {}) outside the triangulation",
                p[0], p[1]
            )))
        }
    }

    fn in_cavity(&self, t: usize) -> bool {
        t != NONE && self.mark[t] == self.stamp
    }

    /// Inserts a point; returns its index, or None when it duplicates an
    /// existing vertex.
    fn insert(&mut self, p: [f64; 2]) -> Result<Option<usize>> {
        if self.pts.len() >= MAX_POINTS {
            return Err(Error::MeshTopology("refinement exceeded the point budget".into()));
        }
        let t0 = self.locate(p)?;
        let tiny = (1e-12 * self.scale).powi(2);
        if self.tris[t0].v.iter().any(|&v| dist2(self.p(v), p) <= tiny) {
            return Ok(None);
        }

        self.stamp += 1;
        let stamp = self.stamp;
        let mut cavity = vec![t0];
        self.mark[t0] = stamp;
        let mut q = 0;
        while q < cavity.len() {
            let t = cavity[q];
            q += 1;
            for i in 0..3 {
                let nb = self.tris[t].n[i];
                if nb == NONE || self.mark[nb] == stamp {
                    continue;
                }
                let v = self.tris[nb].v;
                if in_circle(self.p(v[0]), self.p(v[1]), self.p(v[2]), p) > 0.0 {
                    self.mark[nb] = stamp;
                    cavity.push(nb);
                }
            }
        }

        // enforce a star-shaped cavity as seen from p
        loop {
            let mut changed = false;
            for idx in 0..cavity.len() {
                let t = cavity[idx];
                if self.mark[t] != stamp {
                    continue;
                }
                for i in 0..3 {
                    let nb = self.tris[t].n[i];
                    if self.in_cavity(nb) {
                        continue;
                    }
                    let a = self.p(self.tris[t].v[(i + 1) % 3]);
                    let b = self.p(self.tris[t].v[(i + 2) % 3]);
                    if edge_side(a, b, p) <= 1e-13 * self.scale {
                        if t == t0 {
                            // p on an edge of its containing triangle
                            if nb == NONE {
                                return Err(Error::Geometry("point on the hull".into()));
                            }
                            self.mark[nb] = stamp;
                            cavity.push(nb);
                        } else {
                            self.mark[t] = 0;
                        }
                        changed = true;
                        break;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        cavity.retain(|&t| self.mark[t] == stamp);

        let mut boundary: Vec<(usize, usize, usize)> = Vec::new();
        for &t in &cavity {
            let tri = self.tris[t];
            for i in 0..3 {
                if !self.in_cavity(tri.n[i]) {
                    boundary.push((tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], tri.n[i]));
                }
            }
        }
        for &t in &cavity {
            self.tris[t].alive = false;
            self.mark[t] = 0;
            self.free.push(t);
        }

        let pi = self.pts.len();
        self.pts.push(p);
        let mut new_ids = Vec::with_capacity(boundary.len());
        for &(a, b, outer) in &boundary {
            let tri = Tri {
                v: [pi, a, b],
                n: [outer, NONE, NONE],
                alive: true,
            };
            let id = match self.free.pop() {
                Some(id) => {
                    self.tris[id] = tri;
                    id
                }
                None => {
                    self.tris.push(tri);
                    self.mark.push(0);
                    self.tris.len() - 1
                }
            };
            new_ids.push(id);
            if outer != NONE {
                let ot = &mut self.tris[outer];
                for k in 0..3 {
                    if ot.v[(k + 1) % 3] == b && ot.v[(k + 2) % 3] == a {
                        ot.n[k] = id;
                    }
                }
            }
        }
        for (j, &(a, b, _)) in boundary.iter().enumerate() {
            let id = new_ids[j];
            // opposite a: edge (b, p), shared with the new triangle starting at b
            // opposite b: edge (p, a), shared with the new triangle ending at a
            let starts_at_b = boundary.iter().position(|e| e.0 == b);
            let ends_at_a = boundary.iter().position(|e| e.1 == a);
            match (starts_at_b, ends_at_a) {
                (Some(s), Some(e)) => {
                    self.tris[id].n[1] = new_ids[s];
                    self.tris[id].n[2] = new_ids[e];
                }
                _ => return Err(Error::MeshTopology("cavity boundary is not a closed loop".into())),
            }
        }
        self.hint = new_ids[0];
        Ok(Some(pi))
    }

    /// For each edge, the apex vertices of its (one or two) triangles.
    fn edge_apexes(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for tri in self.tris.iter().filter(|t| t.alive) {
            for i in 0..3 {
                let a = tri.v[(i + 1) % 3];
                let b = tri.v[(i + 2) % 3];
                map.entry((a.min(b), a.max(b))).or_default().push(tri.v[i]);
            }
        }
        map
    }

    /// Marks triangles reachable from the super triangle without crossing a
    /// segment as outside; everything else is inside.
    fn classify(&self, segments: &HashSet<(usize, usize)>) -> Vec<bool> {
        let mut outside = vec![false; self.tris.len()];
        let mut stack: Vec<usize> = (0..self.tris.len())
            .filter(|&t| self.tris[t].alive && self.tris[t].v.iter().any(|&v| v < 3))
            .collect();
        for &t in &stack {
            outside[t] = true;
        }
        while let Some(t) = stack.pop() {
            let tri = self.tris[t];
            for i in 0..3 {
                let nb = tri.n[i];
                if nb == NONE || outside[nb] {
                    continue;
                }
                let a = tri.v[(i + 1) % 3];
                let b = tri.v[(i + 2) % 3];
                if segments.contains(&(a.min(b), a.max(b))) {
                    continue;
                }
                outside[nb] = true;
                stack.push(nb);
            }
        }
        (0..self.tris.len())
            .map(|t| self.tris[t].alive && !outside[t])
            .collect()
    }
}

fn encroaches(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    // strictly inside the diametral circle of ab
    (a[0] - p[0]) * (b[0] - p[0]) + (a[1] - p[1]) * (b[1] - p[1]) < 0.0
}

/// Quality triangulation of the simple counter-clockwise polygon `boundary`.
///
/// `size(x)` is the target edge length near `x`: triangles with area above
/// that of the equilateral triangle of side `size(centroid)` are split, as are
/// triangles whose circumradius-to-shortest-edge ratio exceeds `max_ratio`
/// (√2 guarantees termination and a minimum angle of about 20.7°).
pub fn mesh_polygon(
    boundary: &[[f64; 2]],
    size: &dyn Fn([f64; 2]) -> f64,
    max_ratio: f64,
) -> Result<PlanarMesh> {
    let n = boundary.len();
    if n < 3 {
        return Err(Error::Geometry("polygon needs at least three vertices".into()));
    }
    let signed: f64 = (0..n)
        .map(|i| {
            let (a, b) = (boundary[i], boundary[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    if signed <= 0.0 {
        return Err(Error::Geometry("polygon must be counter-clockwise".into()));
    }

    // presplit boundary edges to the local target size
    let mut loop_pts = Vec::new();
    for i in 0..n {
        let (a, b) = (boundary[i], boundary[(i + 1) % n]);
        let len = dist2(a, b).sqrt();
        let h = size([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        let k = ((len / h).ceil() as usize).max(1);
        for j in 0..k {
            let t = j as f64 / k as f64;
            loop_pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in boundary {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let mut dt = Delaunay::new(lo, hi);
    let mut ids = Vec::with_capacity(loop_pts.len());
    for &p in &loop_pts {
        let id = dt
            .insert(p)?
            .ok_or_else(|| Error::Geometry("duplicate boundary vertex".into()))?;
        ids.push(id);
    }
    let m = ids.len();
    let mut segments: Vec<(usize, usize)> = (0..m).map(|i| (ids[i], ids[(i + 1) % m])).collect();

    let split_segment = |dt: &mut Delaunay, segments: &mut Vec<(usize, usize)>, s: usize| -> Result<()> {
        let (a, b) = segments[s];
        let (pa, pb) = (dt.p(a), dt.p(b));
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        let id = dt
            .insert(mid)?
            .ok_or_else(|| Error::Geometry("segment too short to split".into()))?;
        segments[s] = (a, id);
        segments.push((id, b));
        Ok(())
    };

    let area_of = |h: f64| 0.25 * 3f64.sqrt() * h * h;
    let mut rounds = 0usize;
    loop {
        rounds += 1;
        if rounds > 10_000 {
            return Err(Error::MeshTopology("refinement did not converge".into()));
        }
        // recover segments: no segment may be missing or encroached
        loop {
            let apexes = dt.edge_apexes();
            let mut to_split = Vec::new();
            for (s, &(a, b)) in segments.iter().enumerate() {
                let key = (a.min(b), a.max(b));
                let bad = match apexes.get(&key) {
                    None => true,
                    Some(ap) => ap
                        .iter()
                        .any(|&v| v >= 3 && encroaches(dt.p(v), dt.p(a), dt.p(b))),
                };
                if bad {
                    to_split.push(s);
                }
            }
            if to_split.is_empty() {
                break;
            }
            for s in to_split {
                split_segment(&mut dt, &mut segments, s)?;
            }
        }

        let seg_set: HashSet<(usize, usize)> =
            segments.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        let inside = dt.classify(&seg_set);
        let mut bad: Vec<(usize, [usize; 3])> = Vec::new();
        for (t, tri) in dt.tris.iter().enumerate() {
            if !inside[t] {
                continue;
            }
            let [a, b, c] = tri.v.map(|v| dt.p(v));
            let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
            let h = size(centroid);
            let shortest = dist2(a, b).min(dist2(b, c)).min(dist2(a, c)).sqrt();
            if shortest < 1e-3 * h {
                continue;
            }
            if radius_edge_ratio(a, b, c) > max_ratio || tri_area(a, b, c) > area_of(h) {
                bad.push((t, tri.v));
            }
        }
        if bad.is_empty() {
            break;
        }
        let mut progressed = false;
        for (t, v) in bad {
            if !dt.tris[t].alive || dt.tris[t].v != v {
                continue;
            }
            let c = circumcenter(dt.p(v[0]), dt.p(v[1]), dt.p(v[2]));
            let encroached: Vec<usize> = (0..segments.len())
                .filter(|&s| encroaches(c, dt.p(segments[s].0), dt.p(segments[s].1)))
                .collect();
            if !encroached.is_empty() {
                for s in encroached {
                    split_segment(&mut dt, &mut segments, s)?;
                }
                progressed = true;
                // the triangulation changed around the boundary; re-recover first
                break;
            } else if point_in_polygon(c, boundary) && dt.insert(c)?.is_some() {
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let seg_set: HashSet<(usize, usize)> =
        segments.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let inside = dt.classify(&seg_set);
    let mut remap = vec![NONE; dt.pts.len()];
    let mut points = Vec::new();
    let mut triangles = Vec::new();
    for (t, tri) in dt.tris.iter().enumerate() {
        if !inside[t] {
            continue;
        }
        let mut out = [0usize; 3];
        for (k, &v) in tri.v.iter().enumerate() {
            if remap[v] == NONE {
                remap[v] = points.len();
                points.push(dt.pts[v]);
            }
            out[k] = remap[v];
        }
        triangles.push(out);
    }
    // renumber vertices in insertion order for a stable, cache-friendlier layout
    let mut order: Vec<usize> = (0..dt.pts.len()).filter(|&v| remap[v] != NONE).collect();
    order.sort_unstable();
    let mut final_id = vec![NONE; points.len()];
    let mut final_pts = Vec::with_capacity(points.len());
    for v in order {
        final_id[remap[v]] = final_pts.len();
        final_pts.push(dt.pts[v]);
    }
    for t in &mut triangles {
        for v in t.iter_mut() {
            *v = final_id[*v];
        }
    }
    Ok(PlanarMesh {
        points: final_pts,
        triangles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    }

    #[test]
    fn square_mesh_covers_area_with_quality() {
        let m = mesh_polygon(&square(), &|_| 0.1, 2f64.sqrt()).unwrap();
        assert!((m.area() - 1.0).abs() < 1e-12, "area {}", m.area());
        assert!(m.min_angle_deg() >= 20.0, "min angle {}", m.min_angle_deg());
        assert!(m.triangles.len() > 100);
        for t in &m.triangles {
            assert!(tri_area(m.points[t[0]], m.points[t[1]], m.points[t[2]]) > 0.0);
        }
    }

    #[test]
    fn nonconvex_polygon_is_respected() {
        // L-shape
        let poly = vec![
            [0.0, 0.0],
            [2.0, 0.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 2.0],
            [0.0, 2.0],
        ];
        let m = mesh_polygon(&poly, &|_| 0.2, 2f64.sqrt()).unwrap();
        assert!((m.area() - 3.0).abs() < 1e-12);
        for t in &m.triangles {
            let c = [
                (m.points[t[0]][0] + m.points[t[1]][0] + m.points[t[2]][0]) / 3.0,
                (m.points[t[0]][1] + m.points[t[1]][1] + m.points[t[2]][1]) / 3.0,
            ];
            assert!(point_in_polygon(c, &poly));
        }
    }

    #[test]
    fn deterministic_output() {
        let size = |p: [f64; 2]| if p[0] < 0.5 { 0.05 } else { 0.1 };
        let a = mesh_polygon(&square(), &size, 1.3).unwrap();
        let b = mesh_polygon(&square(), &size, 1.3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn graded_sizes_refine_locally() {
        let size = |p: [f64; 2]| if p[0] < 0.5 { 0.05 } else { 0.2 };
        let m = mesh_polygon(&square(), &size, 2f64.sqrt()).unwrap();
        let left = m
            .triangles
            .iter()
            .filter(|t| m.points[t[0]][0] < 0.4)
            .count();
        let right = m
            .triangles
            .iter()
            .filter(|t| m.points[t[0]][0] > 0.6)
            .count();
        assert!(left > 4 * right, "left {left} right {right}");
    }

    #[test]
    fn clockwise_polygon_rejected() {
        let mut p = square();
        p.reverse();
        assert!(mesh_polygon(&p, &|_| 0.1, 1.5).is_err());
    }
}
