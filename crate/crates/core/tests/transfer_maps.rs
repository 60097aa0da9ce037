use openbook::eigensolve::smallest_eigenpairs;
use openbook::femcore::{assemble_surface, assemble_volume};
use openbook::geometry::build_periodic_flat_book;
use openbook::meshing::{build_cross_section, extrude_periodic, mesh_surface};
use openbook::transfer::{build_transfer, measure_defects, TransferDefectReport};

const EPS: [f64; 3] = [0.2, 0.1, 0.05];

#[test]
fn averaging_the_extension_returns_the_limit_eigenfunction() {
    let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
    let surf = mesh_surface(&s, 0.05).unwrap();
    let f2 = assemble_surface(&surf).unwrap();
    let e2 = smallest_eigenpairs(&f2, 3, 1e-10, 1).unwrap();
    let u = e2.vector(1);
    let norm = f2.mass_norm2(&u).sqrt();
    let errs: Vec<f64> = EPS
        .iter()
        .map(|&eps| {
            let cs = build_cross_section(&s, eps, 0.08, eps / 50.0).unwrap();
            let vol = extrude_periodic(&cs, 1.0, 20).unwrap();
            let maps = build_transfer(&surf, &vol, eps).unwrap();
            let back = maps.apply_j(&maps.apply_kx(&u));
            let d: Vec<f64> = back.iter().zip(&u).map(|(a, b)| a - b).collect();
            f2.mass_norm2(&d).sqrt() / norm
        })
        .collect();
    println!("relative L2 error of J Kx u: {errs:?}");
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    // O(ε): the error per unit ε does not grow along the sweep
    let per_eps: Vec<f64> = errs.iter().zip(EPS).map(|(e, eps)| e / eps).collect();
    assert!(per_eps.windows(2).all(|w| w[1] <= w[0]), "{per_eps:?}");
}

fn coarse_defects() -> Vec<TransferDefectReport> {
    let s = build_periodic_flat_book(3, 1.0, 1.0, None).unwrap();
    let surf = mesh_surface(&s, 0.05).unwrap();
    let f2 = assemble_surface(&surf).unwrap();
    let e2 = smallest_eigenpairs(&f2, 8, 1e-8, 1).unwrap();
    EPS.iter()
        .map(|&eps| {
            let cs = build_cross_section(&s, eps, 0.08, eps / 50.0).unwrap();
            let vol = extrude_periodic(&cs, 1.0, 13).unwrap();
            let f3 = assemble_volume(&vol).unwrap();
            let e3 = smallest_eigenpairs(&f3, 8, 1e-8, 1).unwrap();
            let maps = build_transfer(&surf, &vol, eps).unwrap();
            measure_defects(&f2, &f3, &maps, 15.0, &e3, &e2).unwrap()
        })
        .collect()
}

#[test]
fn defects_shrink_with_eps_and_bound_rayleigh_quotients() {
    let reports = coarse_defects();
    for q in 0..4 {
        let seq: Vec<f64> = reports.iter().map(|r| r.defects()[q]).collect();
        println!("defect {q}: {seq:?}");
        assert!(seq.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(seq.windows(2).all(|w| w[1] < w[0]), "defect {q}: {seq:?}");
    }
    for r in &reports {
        assert_eq!((r.dim, r.dim_limit), (4, 4));
        assert!(r.rayleigh_holds(), "eps {}: {:?}", r.eps, r.rayleigh);
    }
}
