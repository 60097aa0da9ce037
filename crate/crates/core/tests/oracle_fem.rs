//! The closed-form star-graph and book spectra against brute-force finite
//! elements that share no code with the library's assembly.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use openbook::spectra_oracle::{book_limit_spectrum, star_graph_spectrum};

/// P1 stiffness and mass on a star of `edges` edges of length `ell`, each cut
/// into `n` elements. Node 0 is the centre.
fn star_fem(edges: usize, ell: f64, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let size = 1 + edges * n;
    let mut k = DMatrix::zeros(size, size);
    let mut m = DMatrix::zeros(size, size);
    let h = ell / n as f64;
    for e in 0..edges {
        let node = |i: usize| if i == 0 { 0 } else { 1 + e * n + (i - 1) };
        for i in 0..n {
            let (a, b) = (node(i), node(i + 1));
            k[(a, a)] += 1.0 / h;
            k[(b, b)] += 1.0 / h;
            k[(a, b)] -= 1.0 / h;
            k[(b, a)] -= 1.0 / h;
            m[(a, a)] += h / 3.0;
            m[(b, b)] += h / 3.0;
            m[(a, b)] += h / 6.0;
            m[(b, a)] += h / 6.0;
        }
    }
    (k, m)
}

fn pencil_values(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let l = m.clone().cholesky().unwrap().l();
    let li = l.try_inverse().unwrap();
    let c = &li * k * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut v: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn star_fem_extrapolated(edges: usize, ell: f64, n: usize, count: usize) -> Vec<f64> {
    let (k, m) = star_fem(edges, ell, n);
    let a = pencil_values(&k, &m);
    let (k, m) = star_fem(edges, ell, 2 * n);
    let b = pencil_values(&k, &m);
    (0..count).map(|i| b[i] + (b[i] - a[i]) / 3.0).collect()
}

#[test]
fn star_graph_matches_fem_to_1e_minus_4() {
    for (edges, ell) in [(3, 1.0), (4, 0.7), (5, 1.3), (1, 1.0), (2, 1.0)] {
        let fem = star_fem_extrapolated(edges, ell, 100, 12);
        let exact = star_graph_spectrum(edges, ell, 12).values();
        for (f, x) in fem.iter().zip(&exact) {
            assert!((f - x).abs() <= 1e-4 * x.max(1.0), "E={edges}: {f} vs {x}");
        }
    }
}

#[test]
fn book_spectrum_is_the_star_spectrum_plus_binding_modes() {
    // separation of variables: sums of star-graph values and (2πm/L)² with
    // multiplicity 2 for m ≠ 0, built here from the FEM star values
    let (edges, ell, len) = (3, 1.0, 1.0);
    let star = star_fem_extrapolated(edges, ell, 100, 30);
    let mut sums = Vec::new();
    for &s in &star {
        for m in -6i32..=6 {
            sums.push(s + (2.0 * PI * m as f64 / len).powi(2));
        }
    }
    sums.sort_by(f64::total_cmp);
    let exact = book_limit_spectrum(edges, ell, len, 20).values();
    for (f, x) in sums.iter().zip(&exact) {
        assert!((f - x).abs() <= 1e-4 * x.max(1.0), "{f} vs {x}");
    }
}

#[test]
fn published_limit_values() {
    let v = book_limit_spectrum(3, 1.0, 1.0, 6).values();
    let expect = [0.0, 2.4674, 2.4674, 9.8696, 22.2066, 22.2066];
    for (a, b) in v.iter().zip(expect) {
        assert!((a - b).abs() < 5e-5);
    }
}
