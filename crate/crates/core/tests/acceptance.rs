//! One test per acceptance criterion, each printing a PASS/FAIL line.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use openbook::eigensolve::{dense_reference, smallest_eigenpairs, EigenSolver, LobpcgSolver};
use openbook::femcore::{assemble_planar, assemble_surface, assemble_volume, kirchhoff_residual, AssembledForms};
use openbook::geometry::{build_periodic_flat_book, flat_book, OpenBookStructure};
use openbook::harness::{run_convergence, run_limit, write_convergence_outputs, ConvergenceReport, ExperimentConfig};
use openbook::meshing::{build_cross_section, extrude_periodic, mesh_rectangle, mesh_surface};
use openbook::transfer::{build_transfer, measure_defects};

fn verdict(id: u32, title: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    // straight to stdout so the line survives test output capture
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id} ({title}): {tag} {detail}").unwrap();
    out.flush().unwrap();
}

fn default_report() -> &'static ConvergenceReport {
    static REPORT: OnceLock<ConvergenceReport> = OnceLock::new();
    REPORT.get_or_init(|| run_convergence(&ExperimentConfig::default()).unwrap())
}

#[test]
fn criterion_1_limit_operator() {
    let t = Instant::now();
    let r = run_limit(&ExperimentConfig::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let expect = [0.0, 2.4674, 2.4674, 9.8696, 22.2066, 22.2066];
    let mut worst = 0.0f64;
    let mut ok = r.extrapolated.len() >= 6;
    for (x, e) in r.extrapolated.iter().zip(expect) {
        if e == 0.0 {
            ok &= x.abs() <= 1e-6;
        } else {
            let rel = (x - e).abs() / e;
            worst = worst.max(rel);
            ok &= rel <= 5e-3;
        }
    }
    ok &= secs <= 60.0;
    verdict(
        1,
        "limit operator",
        ok,
        &format!("worst relative error {worst:.2e}, {secs:.1} s, values {:?}", r.extrapolated),
    );
    assert!(ok);
}

/// Flux residual norms of eigenvectors 1..=4 at h = 0.1, 0.05, 0.025.
fn kirchhoff_history(s: &OpenBookStructure) -> Vec<Vec<(f64, f64)>> {
    [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            let mesh = mesh_surface(s, h).unwrap();
            let forms = assemble_surface(&mesh).unwrap();
            let e = smallest_eigenpairs(&forms, 6, 1e-10, 1).unwrap();
            (1..=4)
                .map(|i| {
                    let k = kirchhoff_residual(&mesh, &e.vector(i), e.values[i]);
                    (k.norm, k.flux_scale)
                })
                .collect()
        })
        .collect()
}

/// Each step shrinks the residual by 1.5, unless it already sits at rounding
/// level relative to the individual page fluxes.
fn kirchhoff_decreases(hist: &[Vec<(f64, f64)>]) -> bool {
    (0..4).all(|i| {
        hist.windows(2).all(|w| {
            let (prev, _) = w[0][i];
            let (next, scale) = w[1][i];
            next * 1.5 <= prev || next <= 1e-8 * scale
        })
    })
}

#[test]
fn criterion_2_kirchhoff_emergence() {
    let equal = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
    let unequal = flat_book(&[(1.0, 0.0), (0.8, 2.0), (0.6, 4.0)], 1.0).unwrap();
    let he = kirchhoff_history(&equal);
    let hu = kirchhoff_history(&unequal);
    let ok = kirchhoff_decreases(&he) && kirchhoff_decreases(&hu);
    let norms = |h: &[Vec<(f64, f64)>]| -> Vec<Vec<f64>> { h.iter().map(|r| r.iter().map(|x| x.0).collect()).collect() };
    verdict(
        2,
        "Kirchhoff emergence",
        ok,
        &format!("equal pages {:?}, unequal pages {:?}", norms(&he), norms(&hu)),
    );
    assert!(ok);
}

/// P1 Neumann eigenvalues 0..4 of the unit square at mesh size h.
fn unit_square_values(h: f64) -> Vec<f64> {
    let mesh = mesh_rectangle(1.0, 1.0, h).unwrap();
    let forms = assemble_surface(&mesh).unwrap();
    smallest_eigenpairs(&forms, 4, 1e-11, 1).unwrap().values
}

#[test]
fn criterion_3_neumann_solver_sanity() {
    let mut notes = Vec::new();

    let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
    let cs = build_cross_section(&s, 0.1, 0.08, 0.002).unwrap();
    let vol = extrude_periodic(&cs, 1.0, 13).unwrap();
    let f = assemble_volume(&vol).unwrap();
    let e = smallest_eigenpairs(&f, 4, 1e-8, 1).unwrap();
    let u = e.vector(0);
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let spread = u.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max) / mean.abs();
    let zero_ok = e.values[0].abs() <= 1e-6 && spread <= 1e-6;
    notes.push(format!("lambda_0 = {:.1e}, constant spread {spread:.1e}", e.values[0]));

    let cs = build_cross_section(&s, 0.2, 0.25, 0.004).unwrap();
    let small = assemble_volume(&extrude_periodic(&cs, 1.0, 4).unwrap()).unwrap();
    let dense = dense_reference(&small).unwrap();
    let sparse = LobpcgSolver::default()
        .solve(&small.stiffness, &small.mass, 8, 1e-10, 3)
        .unwrap();
    let agree = sparse
        .values
        .iter()
        .zip(&dense.values)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    let dense_ok = small.n <= 600 && agree <= 1e-8;
    notes.push(format!("n = {}, sparse/dense {agree:.1e}", small.n));

    let exact = [0.0, PI * PI, PI * PI, 2.0 * PI * PI];
    let hs = [0.1, 0.05, 0.025];
    let values: Vec<Vec<f64>> = hs.iter().map(|&h| unit_square_values(h)).collect();
    // conforming P1 overestimates by about λ²h²/12 per mode
    let mut box_ok = values[0][0].abs() < 1e-8 && values[2][0].abs() < 1e-8;
    for (k, &l) in exact.iter().enumerate().skip(1) {
        let errs: Vec<f64> = values.iter().map(|v| v[k] - l).collect();
        for (err, h) in errs.iter().zip(hs) {
            box_ok &= *err >= -1e-9 && *err <= l * l * h * h / 4.0;
        }
        let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
        box_ok &= ratios.iter().all(|r| (3.5..=4.5).contains(r));
        notes.push(format!("square mode {k} error ratios {:.2}, {:.2}", ratios[0], ratios[1]));
    }

    let ok = zero_ok && dense_ok && box_ok;
    verdict(3, "3D Neumann solver sanity", ok, &notes.join("; "));
    assert!(ok);
}

#[test]
fn criterion_4_main_convergence() {
    let r = default_report();
    let gaps = |n: usize| -> Vec<f64> { r.rows.iter().filter(|x| x.n == n).map(|x| x.gap).collect() };
    let mut ok = r.metadata.elapsed_s <= 1200.0;
    let mut notes = vec![format!("{:.0} s", r.metadata.elapsed_s)];
    // λ_0 = 0 on both sides, so its gap is zero up to solver noise
    let g0 = gaps(0);
    ok &= g0.len() == 3 && g0.iter().all(|g| *g <= 1e-6);
    for n in 1..=5 {
        let g = gaps(n);
        let row = r.rows.iter().find(|x| x.n == n && x.eps == 0.05).unwrap();
        let decreasing = g.len() == 3 && g.windows(2).all(|w| w[1] < w[0]);
        let small = if row.lambda_limit < 10.0 {
            row.gap < 0.5
        } else {
            row.gap / row.lambda_limit < 0.05
        };
        ok &= decreasing && small;
        notes.push(format!(
            "n={n}: gaps {:?} ({}), at 0.05 {:.3} abs / {:.2}% rel",
            g.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            if decreasing { "decreasing" } else { "NOT decreasing" },
            row.gap,
            100.0 * row.gap / row.lambda_limit
        ));
    }
    verdict(4, "thin-domain convergence", ok, &notes.join("; "));
    assert!(ok);
}

#[test]
fn criterion_5_transfer_contract() {
    let r = default_report();
    let d = &r.defects;
    let mut ok = d.len() == 3 && r.defect_failures.is_empty();
    let mut notes = Vec::new();
    for q in 0..4 {
        let seq: Vec<f64> = d.iter().map(|x| x.defects()[q]).collect();
        let finite = seq.iter().all(|x| x.is_finite() && *x >= 0.0);
        let decreasing = seq.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
        ok &= finite && decreasing;
        notes.push(format!("{:?}", seq.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()));
    }
    let rayleigh = d.iter().all(|x| x.rayleigh_holds() && !x.rayleigh.is_empty());
    ok &= rayleigh;
    notes.push(format!("Rayleigh bounds hold: {rayleigh}"));

    // the constants alone
    let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
    let surf = mesh_surface(&s, 0.05).unwrap();
    let cs = build_cross_section(&s, 0.05, 0.08, 0.001).unwrap();
    let vol = extrude_periodic(&cs, 1.0, 13).unwrap();
    let maps = build_transfer(&surf, &vol, 0.05).unwrap();
    let f2 = assemble_surface(&surf).unwrap();
    let f3 = assemble_volume(&vol).unwrap();
    let e2 = smallest_eigenpairs(&f2, 3, 1e-8, 1).unwrap();
    let e3 = smallest_eigenpairs(&f3, 3, 1e-8, 1).unwrap();
    let c = measure_defects(&f2, &f3, &maps, 1.0, &e3, &e2).unwrap();
    let zero = (c.dim, c.dim_limit) == (1, 1) && c.defects() == [0.0; 4] && c.rayleigh_holds();
    ok &= zero;
    notes.push(format!("constants {:?}", c.defects()));

    verdict(5, "transfer-operator contract", ok, &notes.join("; "));
    assert!(ok);
}

fn m_dot(f: &AssembledForms, a: &[f64], b: &[f64]) -> f64 {
    f.mass.bilinear(a, b)
}

fn rq(f: &AssembledForms, v: &[f64]) -> f64 {
    f.stiffness.quadratic(v) / f.mass.quadratic(v)
}

/// Counts min-max violations over 1000 random vectors.
fn min_max_violations(f: &AssembledForms, seed: u64) -> usize {
    const PAIRS: usize = 6;
    const TOL: f64 = 1e-8;
    let e = dense_reference(f).unwrap();
    let lam = &e.values;
    let basis: Vec<Vec<f64>> = (0..PAIRS)
        .map(|i| {
            let u = e.vector(i);
            let s = m_dot(f, &u, &u).sqrt();
            u.iter().map(|x| x / s).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let slack = |l: f64| TOL * (1.0 + l.abs());
    let mut bad = 0;
    for k in 0..1000 {
        let j = k % PAIRS;
        match k % 3 {
            0 => {
                // M-orthogonal to the first j eigenvectors: quotient at least λ_j
                let mut v = random(f.n);
                for u in &basis[..j] {
                    let c = m_dot(f, u, &v);
                    v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
                }
                bad += usize::from(rq(f, &v) < lam[j] - slack(lam[j]));
            }
            1 => {
                // inside the span of the first j + 1: quotient in [λ_0, λ_j]
                let c = random(j + 1);
                let mut v = vec![0.0; f.n];
                for (ci, u) in c.iter().zip(&basis) {
                    v.iter_mut().zip(u).for_each(|(x, y)| *x += ci * y);
                }
                let q = rq(f, &v);
                bad += usize::from(q > lam[j] + slack(lam[j]) || q < lam[0] - slack(lam[0]));
            }
            _ => {
                // a random (j + 1)-dimensional subspace reaches at least λ_j
                let vs: Vec<Vec<f64>> = (0..=j).map(|_| random(f.n)).collect();
                let d = j + 1;
                let kk = DMatrix::from_fn(d, d, |a, b| f.stiffness.bilinear(&vs[a], &vs[b]));
                let mm = DMatrix::from_fn(d, d, |a, b| m_dot(f, &vs[a], &vs[b]));
                let l = mm.cholesky().unwrap().l();
                let li = l.try_inverse().unwrap();
                let c = &li * kk * li.transpose();
                let c = (&c + c.transpose()) * 0.5;
                let ev = c.symmetric_eigen().eigenvalues;
                let (top, low) = (ev.max(), ev.min());
                bad += usize::from(top < lam[j] - slack(lam[j]) || low < lam[0] - slack(lam[0]));
            }
        }
    }
    bad
}

#[test]
fn criterion_6_min_max() {
    let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
    let cs = build_cross_section(&s, 0.2, 0.1, 0.004).unwrap();
    let cs_coarse = build_cross_section(&s, 0.2, 0.25, 0.004).unwrap();
    let meshes: Vec<(&str, AssembledForms)> = vec![
        ("surface", assemble_surface(&mesh_surface(&s, 0.1).unwrap()).unwrap()),
        ("cross-section", assemble_planar(&cs).unwrap()),
        ("volume", assemble_volume(&extrude_periodic(&cs_coarse, 1.0, 4).unwrap()).unwrap()),
        ("unit square", assemble_surface(&mesh_rectangle(1.0, 1.0, 0.1).unwrap()).unwrap()),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, (name, f)) in meshes.iter().enumerate() {
        let bad = min_max_violations(f, 100 + i as u64);
        ok &= bad == 0;
        notes.push(format!("{name} (n = {}): {bad} violations", f.n));
    }
    verdict(6, "min-max properties", ok, &notes.join("; "));
    assert!(ok);
}

#[test]
fn criterion_7_determinism() {
    let cfg = ExperimentConfig {
        h_list: vec![0.16, 0.08],
        surface_h_list: vec![0.1, 0.05],
        ..Default::default()
    };
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let r = run_convergence(&cfg).unwrap();
        write_convergence_outputs(dir.path(), &r).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let a = run();
    let b = run();
    let ok = !a.is_empty() && a == b;
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    verdict(7, "determinism", ok, &format!("compared {names:?}"));
    assert!(ok);
}
