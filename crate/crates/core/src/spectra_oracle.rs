//! Closed-form spectra used as ground truth.
//!
//! Star graph with E edges of length ℓ, Neumann ends, Kirchhoff centre: on
//! edge e write u_e(x) = c_e cos(k(ℓ − x)), x measured from the centre, which
//! already satisfies the Neumann end condition. Continuity at the centre asks
//! c_e cos(kℓ) to be the same for all e; the flux balance asks
//! Σ_e c_e k sin(kℓ) = 0. Either sin(kℓ) = 0 with all c_e equal (k = nπ/ℓ,
//! multiplicity 1), or cos(kℓ) = 0 with Σ c_e = 0 (k = (n + ½)π/ℓ,
//! multiplicity E − 1). On a periodic flat book of binding length L the
//! operator separates into this star operator plus −d²/dz² on the circle of
//! length L, whose eigenvalues (2πm/L)² have multiplicity 2 for m ≠ 0.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eigensolve::{cluster_values, CLUSTER_GAP};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeLabel {
    /// Transverse wavenumber k (√ of the transverse eigenvalue).
    pub k: f64,
    /// Binding-direction Fourier index |m| (or the second box index).
    pub m: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub lambda: f64,
    pub multiplicity: usize,
    pub label: ModeLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSpectrum {
    pub entries: Vec<SpectrumEntry>,
    pub count: usize,
}

impl AnalyticSpectrum {
    fn from_entries(mut entries: Vec<SpectrumEntry>, count: usize) -> Self {
        entries.sort_by(|a, b| {
            a.lambda
                .total_cmp(&b.lambda)
                .then(a.label.k.total_cmp(&b.label.k))
                .then(a.label.m.cmp(&b.label.m))
        });
        // keep the entries covering the first `count` eigenvalues
        let mut kept = Vec::new();
        let mut total = 0;
        for e in entries {
            if total >= count {
                break;
            }
            total += e.multiplicity;
            kept.push(e);
        }
        Self {
            entries: kept,
            count,
        }
    }

    /// The first `count` eigenvalues, repeated by multiplicity.
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.lambda, e.multiplicity))
            .collect();
        v.truncate(self.count);
        v
    }

    /// Distinct values with merged multiplicities.
    pub fn clusters(&self) -> Vec<(f64, usize)> {
        cluster_values(&self.values(), CLUSTER_GAP)
    }

    /// Number of eigenvalues ≤ λ among the stored entries.
    pub fn counting(&self, lambda: f64) -> usize {
        self.values().iter().filter(|&&v| v <= lambda).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,multiplicity,k,m")?;
        for e in &self.entries {
            writeln!(w, "{:.12e},{},{:.12e},{}", e.lambda, e.multiplicity, e.label.k, e.label.m)?;
        }
        Ok(())
    }
}

/// Transverse wavenumbers of the star graph, (k, multiplicity), enough to
/// cover `count` eigenvalues.
fn star_modes(edges: usize, ell: f64, count: usize) -> Vec<(f64, usize)> {
    let mut modes = Vec::new();
    let mut total = 0;
    let mut n = 0u32;
    while total < count {
        let k = n as f64 * PI / ell;
        modes.push((k, 1));
        total += 1;
        if edges > 1 {
            let k = (n as f64 + 0.5) * PI / ell;
            modes.push((k, edges - 1));
            total += edges - 1;
        }
        n += 1;
    }
    modes
}

pub fn star_graph_spectrum(edges: usize, ell: f64, count: usize) -> AnalyticSpectrum {
    assert!(edges >= 1 && ell > 0.0);
    let entries = star_modes(edges, ell, count)
        .into_iter()
        .map(|(k, mult)| SpectrumEntry {
            lambda: k * k,
            multiplicity: mult,
            label: ModeLabel { k, m: 0 },
        })
        .collect();
    AnalyticSpectrum::from_entries(entries, count)
}

pub fn book_limit_spectrum(edges: usize, ell: f64, binding_length: f64, count: usize) -> AnalyticSpectrum {
    assert!(edges >= 1 && ell > 0.0 && binding_length > 0.0);
    let modes = star_modes(edges, ell, count);
    let mut entries = Vec::new();
    // every value below this bound is generated by the loops below
    let k_max = modes.last().map(|m| m.0).unwrap_or(0.0);
    let bound = k_max * k_max;
    let mut m = 0u32;
    loop {
        let q = 2.0 * PI * m as f64 / binding_length;
        if q * q > bound && m > 0 {
            break;
        }
        for &(k, mult) in &modes {
            entries.push(SpectrumEntry {
                lambda: k * k + q * q,
                multiplicity: mult * if m == 0 { 1 } else { 2 },
                label: ModeLabel { k, m },
            });
        }
        m += 1;
    }
    entries.retain(|e| e.lambda <= bound);
    AnalyticSpectrum::from_entries(entries, count)
}

/// Neumann Laplacian on a box with the given side lengths (2 or 3 of them).
pub fn neumann_box_spectrum(sides: &[f64], count: usize) -> AnalyticSpectrum {
    assert!(!sides.is_empty() && sides.iter().all(|&s| s > 0.0));
    let amax = sides.iter().cloned().fold(0.0, f64::max);
    // λ ≤ (π n/amax)² along the longest side alone gives `n` values, so this
    // bound always contains at least `count` eigenvalues
    let bound = (PI * count as f64 / amax).powi(2);
    let limits: Vec<u32> = sides
        .iter()
        .map(|&a| (bound.sqrt() * a / PI).floor() as u32)
        .collect();
    let mut entries = Vec::new();
    let mut idx = vec![0u32; sides.len()];
    loop {
        let lambda: f64 = idx
            .iter()
            .zip(sides)
            .map(|(&p, &a)| (PI * p as f64 / a).powi(2))
            .sum();
        if lambda <= bound {
            entries.push(SpectrumEntry {
                lambda,
                multiplicity: 1,
                label: ModeLabel {
                    k: PI * idx[0] as f64 / sides[0],
                    m: idx.get(1).copied().unwrap_or(0),
                },
            });
        }
        let mut d = 0;
        loop {
            if d == idx.len() {
                return AnalyticSpectrum::from_entries(entries, count);
            }
            idx[d] += 1;
            if idx[d] <= limits[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_three_edges() {
        let s = star_graph_spectrum(3, 1.0, 6);
        let c = s.clusters();
        assert_eq!(c[0], (0.0, 1));
        assert!((c[1].0 - PI * PI / 4.0).abs() < 1e-12 && c[1].1 == 2);
        assert!((c[2].0 - PI * PI).abs() < 1e-12 && c[2].1 == 1);
        assert!((c[3].0 - 9.0 * PI * PI / 4.0).abs() < 1e-12 && c[3].1 == 2);
    }

    #[test]
    fn single_edge_is_neumann_interval() {
        let v = star_graph_spectrum(1, 1.0, 3).values();
        assert_eq!(v.len(), 3);
        for (i, x) in v.iter().enumerate() {
            assert!((x - (i as f64 * PI).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_edges_equal_interval_of_twice_the_length() {
        let v = star_graph_spectrum(2, 1.0, 8).values();
        for (i, x) in v.iter().enumerate() {
            assert!((x - (i as f64 * PI / 2.0).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn book_first_six() {
        let v = book_limit_spectrum(3, 1.0, 1.0, 6).values();
        let exact = [0.0, 2.4674, 2.4674, 9.8696, 22.2066, 22.2066];
        for (a, b) in v.iter().zip(exact) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn book_includes_binding_modes() {
        // E=1, ℓ=1, L=1: flat cylinder, λ = (nπ)² + (2πm)²
        let v = book_limit_spectrum(1, 1.0, 1.0, 6).values();
        let mut expect = vec![];
        for n in 0..6 {
            for m in -3i32..=3 {
                expect.push((n as f64 * PI).powi(2) + (2.0 * PI * m as f64).powi(2));
            }
        }
        expect.sort_by(f64::total_cmp);
        for (a, b) in v.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn collinear_book_is_cylinder_of_width_two() {
        let a = book_limit_spectrum(2, 1.0, 1.5, 40).values();
        let mut expect = vec![];
        for n in 0..40 {
            for m in -20i32..=20 {
                expect.push((n as f64 * PI / 2.0).powi(2) + (2.0 * PI * m as f64 / 1.5).powi(2));
            }
        }
        expect.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-9 * y.max(1.0));
        }
    }

    #[test]
    fn scaling() {
        let a = book_limit_spectrum(3, 1.0, 1.0, 20).values();
        let b = book_limit_spectrum(3, 2.0, 2.0, 20).values();
        for (x, y) in a.iter().zip(&b) {
            assert!((x / 4.0 - y).abs() < 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn boxes() {
        let v = neumann_box_spectrum(&[1.0, 1.0], 4).values();
        assert_eq!(v, vec![0.0, PI * PI, PI * PI, 2.0 * PI * PI]);
        let c = neumann_box_spectrum(&[1.0, 2.0], 5).clusters();
        let e = [0.0, PI * PI / 4.0, PI * PI, 1.25 * PI * PI];
        for (a, b) in c.iter().zip(e) {
            assert!((a.0 - b).abs() < 1e-12);
        }
        assert_eq!(c[2].1, 2);
        assert_eq!(neumann_box_spectrum(&[1.0, 1.0], 1).clusters(), vec![(0.0, 1)]);
        let v = neumann_box_spectrum(&[1.0, 1.0, 1.0], 7).values();
        assert_eq!(v[1..4], [PI * PI; 3]);
    }

    #[test]
    fn weyl_slope() {
        // N(λ) ~ |M| λ / (4π) for a surface of area |M|
        let s = book_limit_spectrum(3, 1.0, 1.0, 200);
        let v = s.values();
        let lam = v[199];
        let predicted = 3.0 * lam / (4.0 * PI);
        let n = s.counting(lam) as f64;
        assert!((n - predicted).abs() / predicted < 0.15, "{n} vs {predicted}");
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        star_graph_spectrum(3, 1.0, 3).write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("lambda,multiplicity,k,m\n"));
    }
}
