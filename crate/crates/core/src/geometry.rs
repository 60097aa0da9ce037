//! Open book structures: flat pages glued along bindings.
//!
//! The full numerical pipeline supports the periodic flat book: `E` flat
//! rectangular pages of extent `ℓ_k × L` attached to one straight binding
//! along the z axis, periodic in z. Pages are described in the cross-section
//! plane by their direction angle about the binding. Curved structures (for
//! instance two intersecting spheres) can be described for validation, but
//! carry no meshable geometry.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard floor on the angle between neighbouring pages at a binding.
pub const THETA_MIN_DEG: f64 = 20.0;

pub fn theta_min() -> f64 {
    THETA_MIN_DEG.to_radians()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageSpec {
    /// Extent of the page away from its binding.
    pub length: f64,
    /// Direction of the page about the binding axis, radians in [0, 2π).
    pub angle: f64,
    pub binding_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BindingShape {
    /// Straight binding along the z axis.
    Straight,
    /// Closed circular binding (descriptor only, not meshable).
    Circle { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingSpec {
    pub length: f64,
    pub periodic: bool,
    pub shape: BindingShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenBookStructure {
    pub pages: Vec<PageSpec>,
    pub bindings: Vec<BindingSpec>,
    /// binding index -> indices of the pages attached to it
    pub incidence: Vec<Vec<usize>>,
    pub epsilon0: f64,
}

impl OpenBookStructure {
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    /// True for the geometry class the meshing pipeline handles.
    pub fn is_periodic_flat_book(&self) -> bool {
        self.bindings.len() == 1
            && self.bindings[0].periodic
            && self.bindings[0].shape == BindingShape::Straight
    }

    pub fn binding_length(&self) -> f64 {
        self.bindings[0].length
    }

    pub fn min_page_length(&self) -> f64 {
        self.pages.iter().map(|p| p.length).fold(f64::INFINITY, f64::min)
    }

    /// Total page area.
    pub fn area(&self) -> f64 {
        self.pages
            .iter()
            .map(|p| p.length * self.bindings[p.binding_id].length)
            .sum()
    }

    /// Unit direction of page `k` in the cross-section plane.
    pub fn page_direction(&self, k: usize) -> [f64; 2] {
        let a = self.pages[k].angle;
        [a.cos(), a.sin()]
    }

    /// Gaps between angularly consecutive pages at binding `b`, including the
    /// wrap-around gap. A single page has one gap of 2π.
    pub fn angular_gaps(&self, b: usize) -> Vec<f64> {
        let mut angles: Vec<f64> = self.incidence[b].iter().map(|&k| self.pages[k].angle).collect();
        angles.sort_by(f64::total_cmp);
        sorted_gaps(&angles)
    }

    pub fn min_angular_gap(&self) -> f64 {
        (0..self.bindings.len())
            .flat_map(|b| self.angular_gaps(b))
            .fold(TAU, f64::min)
    }

    /// Radius of the junction zone around the binding at fattening `eps`:
    /// neighbourhoods of distinct pages only meet inside it.
    pub fn junction_radius(&self, eps: f64) -> f64 {
        let gap = self.min_angular_gap().min(PI);
        eps / (0.5 * gap).sin()
    }

    /// Page indices at the (single) binding in increasing angle order.
    pub fn pages_by_angle(&self) -> Vec<usize> {
        let mut idx = self.incidence[0].clone();
        idx.sort_by(|&a, &b| self.pages[a].angle.total_cmp(&self.pages[b].angle).then(a.cmp(&b)));
        idx
    }

    pub fn to_json(&self) -> Result<String> {
        let file = StructureFile {
            pages: self
                .pages
                .iter()
                .map(|p| PageJson {
                    length: p.length,
                    angle_deg: p.angle.to_degrees(),
                })
                .collect(),
            binding: BindingJson {
                length: self.bindings[0].length,
                periodic: self.bindings[0].periodic,
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StructureFile = serde_json::from_str(text)?;
        file.build()
    }
}

fn sorted_gaps(angles: &[f64]) -> Vec<f64> {
    match angles.len() {
        0 => vec![],
        1 => vec![TAU],
        n => (0..n)
            .map(|i| {
                if i + 1 < n {
                    angles[i + 1] - angles[i]
                } else {
                    angles[0] + TAU - angles[n - 1]
                }
            })
            .collect(),
    }
}

/// On-disk form of a periodic flat book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureFile {
    pub pages: Vec<PageJson>,
    pub binding: BindingJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageJson {
    pub length: f64,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingJson {
    pub length: f64,
    pub periodic: bool,
}

impl StructureFile {
    pub fn build(&self) -> Result<OpenBookStructure> {
        if !self.binding.periodic {
            return Err(Error::InvalidParameter(
                "only periodic bindings are supported (non-periodic bindings have 0D endpoints)".into(),
            ));
        }
        let pages: Vec<(f64, f64)> = self
            .pages
            .iter()
            .map(|p| (p.length, p.angle_deg.to_radians().rem_euclid(TAU)))
            .collect();
        flat_book(&pages, self.binding.length)
    }
}

/// Builds the periodic flat book with `pages` equal pages of extent `ell`.
/// Angles default to equispaced `2πj/E`.
pub fn build_periodic_flat_book(
    pages: usize,
    ell: f64,
    binding_length: f64,
    angles: Option<&[f64]>,
) -> Result<OpenBookStructure> {
    if pages == 0 {
        return Err(Error::EmptyStructure);
    }
    let angles: Vec<f64> = match angles {
        Some(a) => {
            if a.len() != pages {
                return Err(Error::InvalidParameter(format!(
                    "{} angles given for {pages} pages",
                    a.len()
                )));
            }
            if a.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidParameter("page angles must be sorted".into()));
            }
            a.to_vec()
        }
        None => (0..pages).map(|j| TAU * j as f64 / pages as f64).collect(),
    };
    let specs: Vec<(f64, f64)> = angles.into_iter().map(|a| (ell, a)).collect();
    flat_book(&specs, binding_length)
}

/// General periodic flat book from (length, angle) pairs.
pub fn flat_book(pages: &[(f64, f64)], binding_length: f64) -> Result<OpenBookStructure> {
    if pages.is_empty() {
        return Err(Error::EmptyStructure);
    }
    if !(binding_length > 0.0 && binding_length.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "binding length must be positive, got {binding_length}"
        )));
    }
    for &(len, angle) in pages {
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "page length must be positive, got {len}"
            )));
        }
        if !(0.0..TAU).contains(&angle) {
            return Err(Error::InvalidParameter(format!(
                "page angle {angle} outside [0, 2π)"
            )));
        }
    }
    let mut sorted: Vec<f64> = pages.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    let min_gap = sorted_gaps(&sorted).into_iter().fold(TAU, f64::min);
    if min_gap < theta_min() - 1e-12 {
        return Err(Error::TransversalityViolation {
            gap_deg: min_gap.to_degrees(),
            min_deg: THETA_MIN_DEG,
        });
    }
    let mut s = OpenBookStructure {
        pages: pages
            .iter()
            .map(|&(length, angle)| PageSpec {
                length,
                angle,
                binding_id: 0,
            })
            .collect(),
        bindings: vec![BindingSpec {
            length: binding_length,
            periodic: true,
            shape: BindingShape::Straight,
        }],
        incidence: vec![(0..pages.len()).collect()],
        epsilon0: 0.0,
    };
    s.epsilon0 = compute_epsilon0(&s);
    Ok(s)
}

/// Count-level descriptor of two transversally intersecting spheres: four
/// spherical-cap pages meeting along one circular binding. Page angles are
/// the directions of the four caps leaving the binding in a meridian plane,
/// page lengths the geodesic distance from the binding to each cap's pole.
pub fn two_spheres(r1: f64, r2: f64, center_distance: f64) -> Result<OpenBookStructure> {
    let d = center_distance;
    if !(r1 > 0.0 && r2 > 0.0 && d > 0.0) {
        return Err(Error::InvalidParameter("radii and distance must be positive".into()));
    }
    if d > r1 + r2 || d < (r1 - r2).abs() {
        return Err(Error::Geometry("spheres do not intersect".into()));
    }
    // meridian plane: centres at (0,0) and (d,0); binding point P = (a, rho)
    let a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
    let rho = (r1 * r1 - a * a).max(0.0).sqrt();
    let p = [a, rho];
    let mut pages = Vec::new();
    for (c, r) in [(0.0, r1), (d, r2)] {
        // polar angle of P on this sphere's meridian circle, in (0, π)
        let beta = p[1].atan2(p[0] - c);
        let tangent = [-beta.sin(), beta.cos()];
        // +tangent runs to the pole at angle π, -tangent to the pole at angle 0
        for (sign, length) in [(1.0, r * (PI - beta)), (-1.0, r * beta)] {
            let dir = [sign * tangent[0], sign * tangent[1]];
            let angle = dir[1].atan2(dir[0]).rem_euclid(TAU);
            pages.push(PageSpec {
                length,
                angle,
                binding_id: 0,
            });
        }
    }
    let mut s = OpenBookStructure {
        pages,
        bindings: vec![BindingSpec {
            length: TAU * rho,
            periodic: true,
            shape: BindingShape::Circle { radius: rho },
        }],
        incidence: vec![vec![0, 1, 2, 3]],
        epsilon0: 0.0,
    };
    s.epsilon0 = compute_epsilon0(&s);
    Ok(s)
}

/// Admissible fattening bound: the minimum of a quarter of the shortest page
/// and, over every pair of pages sharing a binding, `min(ℓ_i, ℓ_j)·sin(φ/2)`
/// with φ their angular separation. Below the pairwise bound the
/// ε-neighbourhoods of two pages only meet inside the junction zone of
/// radius `ε / sin(φ/2)`; at it the end caps start to touch.
pub fn compute_epsilon0(s: &OpenBookStructure) -> f64 {
    let mut eps0 = s.min_page_length() / 4.0;
    for pages in &s.incidence {
        for (a, &i) in pages.iter().enumerate() {
            for &j in &pages[a + 1..] {
                let diff = (s.pages[i].angle - s.pages[j].angle).abs();
                let sep = diff.min(TAU - diff);
                let bound = s.pages[i].length.min(s.pages[j].length) * (0.5 * sep).sin();
                eps0 = eps0.min(bound);
            }
        }
    }
    eps0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub connected: bool,
    pub page_count: usize,
    pub binding_count: usize,
    /// Radians; 2π for a lone page.
    pub min_angular_gap: f64,
    pub epsilon0: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

pub fn validate_structure(s: &OpenBookStructure) -> ValidationReport {
    let mut checks = Vec::new();
    let np = s.pages.len();
    let nb = s.bindings.len();

    checks.push(Check {
        name: "nonempty",
        passed: np > 0,
        detail: format!("{np} pages"),
    });

    let attach_ok = s.pages.iter().enumerate().all(|(k, p)| {
        p.binding_id < nb && s.incidence.get(p.binding_id).is_some_and(|inc| inc.contains(&k))
    }) && s.incidence.len() == nb
        && s.incidence.iter().enumerate().all(|(b, inc)| {
            inc.iter().all(|&k| k < np && s.pages[k].binding_id == b)
        });
    checks.push(Check {
        name: "attachment",
        passed: attach_ok,
        detail: "each page attached to exactly one binding, incidence consistent".into(),
    });

    let bindings_used = s.incidence.iter().all(|inc| !inc.is_empty());
    checks.push(Check {
        name: "binding_incidence",
        passed: bindings_used,
        detail: "every binding has at least one page".into(),
    });

    // pages and bindings as nodes of a bipartite graph
    let connected = attach_ok && is_connected(np, nb, &s.pages);
    checks.push(Check {
        name: "connected",
        passed: connected,
        detail: String::new(),
    });

    let geometry_ok = s.pages.iter().all(|p| p.length > 0.0 && (0.0..TAU).contains(&p.angle))
        && s.bindings.iter().all(|b| b.length > 0.0);
    checks.push(Check {
        name: "page_geometry",
        passed: geometry_ok,
        detail: "lengths positive, angles in [0, 2π)".into(),
    });

    let min_gap = if attach_ok { s.min_angular_gap() } else { 0.0 };
    checks.push(Check {
        name: "transversality",
        passed: min_gap >= theta_min() - 1e-12,
        detail: format!("min angular gap {:.4}° (floor {THETA_MIN_DEG}°)", min_gap.to_degrees()),
    });

    let eps_ok = s.epsilon0 > 0.0 && s.epsilon0 <= s.min_page_length() / 4.0 + 1e-15;
    checks.push(Check {
        name: "epsilon0",
        passed: eps_ok,
        detail: format!("eps0 = {}", s.epsilon0),
    });

    ValidationReport {
        connected,
        page_count: np,
        binding_count: nb,
        min_angular_gap: min_gap,
        epsilon0: s.epsilon0,
        checks,
    }
}

fn is_connected(np: usize, nb: usize, pages: &[PageSpec]) -> bool {
    if np == 0 {
        return false;
    }
    // union-find over pages (0..np) and bindings (np..np+nb)
    let mut parent: Vec<usize> = (0..np + nb).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, page) in pages.iter().enumerate() {
        let (a, b) = (find(&mut parent, k), find(&mut parent, np + page.binding_id));
        parent[a] = b;
    }
    let root = find(&mut parent, 0);
    (0..np + nb).all(|x| find(&mut parent, x) == root)
}
