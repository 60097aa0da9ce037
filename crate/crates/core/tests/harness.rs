use std::f64::consts::PI;

use openbook::harness::{run_convergence, run_limit, ExperimentConfig, StructureConfig};

#[test]
fn single_page_matches_the_flat_cylinder() {
    let cfg = ExperimentConfig {
        structure: StructureConfig {
            edges: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let r = run_limit(&cfg).unwrap();
    // Neumann [0, 1] times a circle of length 1
    let mut exact: Vec<f64> = (0..6)
        .flat_map(|k| (-3i32..=3).map(move |m| (k as f64 * PI).powi(2) + (2.0 * PI * m as f64).powi(2)))
        .collect();
    exact.sort_by(f64::total_cmp);
    for (x, e) in r.extrapolated.iter().zip(&exact) {
        if *e == 0.0 {
            assert!(x.abs() < 1e-6);
        } else {
            assert!((x - e).abs() / e <= 5e-3, "{x} vs {e}");
        }
    }
}

#[test]
fn reduced_study_is_complete_and_consistent() {
    let cfg = ExperimentConfig {
        h_list: vec![0.16, 0.08],
        surface_h_list: vec![0.1, 0.05],
        ..Default::default()
    };
    let r = run_convergence(&cfg).unwrap();
    assert_eq!(r.config, cfg);
    assert_eq!(r.fattened.runs.len(), cfg.eps_list.len() * cfg.h_list.len());
    for eps in &cfg.eps_list {
        for h in &cfg.h_list {
            let run = r.fattened.runs.iter().find(|x| x.eps == *eps && x.h == *h).unwrap();
            assert!(run.failure.is_none());
            assert!(run.values[0].abs() <= 1e-6);
        }
    }
    assert_eq!(r.rows.len(), cfg.eps_list.len() * cfg.eigen_count);
    assert!(r.rows.iter().all(|x| x.gap.is_finite()));
    assert!(!r.sandwich.is_empty());
    for s in &r.sandwich {
        assert!(!s.bound.is_nan());
        assert!(s.holds, "{s:?}");
    }
    for f in r.fits.iter().filter(|f| f.fit.is_some()) {
        assert!(f.fit.unwrap().alpha > 0.0, "{f:?}");
    }
}
