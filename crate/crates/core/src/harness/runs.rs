use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::fit::{fit_rate, observed_order, richardson_ratio, RateFit};
use crate::eigensolve::{cluster_values, smallest_eigenpairs, EigenResult, SolverRegistry, CLUSTER_GAP};
use crate::error::{Error, Result};
use crate::femcore::{assemble_surface, assemble_volume, kirchhoff_residual, AssembledForms};
use crate::geometry::OpenBookStructure;
use crate::meshing::{build_cross_section, extrude_periodic, mesh_surface, SurfaceMesh, TetMesh};
use crate::spectra_oracle::book_limit_spectrum;
use crate::transfer::{measure_defects, TransferDefectReport, TransferRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub message: String,
    pub stalled: bool,
}

impl RunFailure {
    fn from_error(e: &Error) -> Self {
        Self {
            message: e.to_string(),
            stalled: matches!(e, Error::SolverStalled { .. }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRun {
    pub h: f64,
    pub dofs: usize,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub max_residual: f64,
    /// Binding flux residual norm of the first nonconstant eigenvectors.
    pub kirchhoff: Vec<f64>,
    pub seconds: f64,
    pub failure: Option<RunFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub runs: Vec<LimitRun>,
    /// Extrapolated from the two finest successful runs; empty if unavailable.
    pub extrapolated: Vec<f64>,
    /// Observed h-order per eigenvalue from the three finest runs.
    pub observed_order: Vec<Option<f64>>,
    pub oracle: Vec<f64>,
    /// Relative error of the extrapolated values (absolute for a zero oracle value).
    pub error: Vec<f64>,
    pub clusters: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FattenedRun {
    pub eps: f64,
    pub h: f64,
    pub n_z: usize,
    pub dofs: usize,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub max_residual: f64,
    pub seconds: f64,
    pub failure: Option<RunFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FattenedSummary {
    pub eps: f64,
    pub extrapolated: Vec<f64>,
    pub observed_order: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FattenedReport {
    pub runs: Vec<FattenedRun>,
    pub per_eps: Vec<FattenedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub lambda_limit: f64,
    pub eps: f64,
    pub lambda_eps: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFit {
    pub n: usize,
    pub fit: Option<RateFit>,
    /// Gap strictly decreasing as ε decreases.
    pub monotone: bool,
}

/// The eigenvalue gap against the bound implied by the transfer defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub n: usize,
    pub eps: f64,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub started_unix_s: u64,
    pub elapsed_s: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub limit: LimitReport,
    pub fattened: FattenedReport,
    pub rows: Vec<ConvergenceRow>,
    pub fits: Vec<ModeFit>,
    pub defects: Vec<TransferDefectReport>,
    pub defect_failures: Vec<(f64, RunFailure)>,
    pub sandwich: Vec<SandwichRow>,
    pub warnings: Vec<String>,
    pub metadata: RunMetadata,
}

impl ConvergenceReport {
    pub fn any_stalled(&self) -> bool {
        self.limit.runs.iter().filter_map(|r| r.failure.as_ref()).any(|f| f.stalled)
            || self.fattened.runs.iter().filter_map(|r| r.failure.as_ref()).any(|f| f.stalled)
    }
}

impl LimitReport {
    pub fn any_stalled(&self) -> bool {
        self.runs.iter().filter_map(|r| r.failure.as_ref()).any(|f| f.stalled)
    }
}

impl FattenedReport {
    pub fn any_stalled(&self) -> bool {
        self.runs.iter().filter_map(|r| r.failure.as_ref()).any(|f| f.stalled)
    }

    pub fn summary(&self, eps: f64) -> Option<&FattenedSummary> {
        self.per_eps.iter().find(|s| s.eps == eps)
    }
}

pub(crate) fn solve(cfg: &ExperimentConfig, forms: &AssembledForms) -> Result<EigenResult> {
    if cfg.solver == "lobpcg" {
        smallest_eigenpairs(forms, cfg.eigen_count, cfg.tol, cfg.seed)
    } else {
        let s = SolverRegistry::default().get(&cfg.solver)?;
        s.solve(&forms.stiffness, &forms.mass, cfg.eigen_count, cfg.tol, cfg.seed)
    }
}

/// Extrapolates the two finest levels among (h, values) pairs listed from
/// coarse to fine, and estimates the order from the three finest.
fn extrapolate(levels: &[(f64, &[f64])]) -> (Vec<f64>, Vec<Option<f64>>) {
    let k = levels.len();
    if k < 2 {
        return (Vec::new(), Vec::new());
    }
    let (ha, a) = levels[k - 2];
    let (hb, b) = levels[k - 1];
    let m = a.len().min(b.len());
    let ext = (0..m).map(|i| richardson_ratio(a[i], b[i], ha, hb)).collect();
    let order = (0..m)
        .map(|i| {
            if k < 3 {
                return None;
            }
            let (h0, v0) = levels[k - 3];
            if v0.len() <= i || ((h0 / ha) - (ha / hb)).abs() > 1e-9 * (h0 / ha) {
                return None;
            }
            observed_order([v0[i], a[i], b[i]], ha / hb)
        })
        .collect();
    (ext, order)
}

pub(crate) struct SurfaceSolve {
    pub mesh: SurfaceMesh,
    pub forms: AssembledForms,
    pub eig: EigenResult,
}

pub(crate) struct VolumeSolve {
    pub eps: f64,
    pub mesh: TetMesh,
    pub forms: AssembledForms,
    pub eig: EigenResult,
}

fn surface_solve(cfg: &ExperimentConfig, s: &OpenBookStructure, h: f64) -> Result<SurfaceSolve> {
    let mesh = mesh_surface(s, h)?;
    let forms = assemble_surface(&mesh)?;
    let eig = solve(cfg, &forms)?;
    Ok(SurfaceSolve { mesh, forms, eig })
}

fn volume_solve(cfg: &ExperimentConfig, s: &OpenBookStructure, eps: f64, h: f64) -> Result<VolumeSolve> {
    let cs = build_cross_section(s, eps, h, cfg.arc_tol(eps))?;
    let mesh = extrude_periodic(&cs, s.binding_length(), cfg.n_z(h))?;
    let forms = assemble_volume(&mesh)?;
    let eig = solve(cfg, &forms)?;
    Ok(VolumeSolve { eps, mesh, forms, eig })
}

pub(crate) fn limit_study(cfg: &ExperimentConfig, keep_finest: bool) -> Result<(LimitReport, Option<SurfaceSolve>)> {
    let s = cfg.validate()?;
    let finest = *cfg.surface_h_list.last().unwrap_or(&0.0);
    let results: Vec<(LimitRun, Option<SurfaceSolve>)> = cfg
        .surface_h_list
        .par_iter()
        .map(|&h| {
            let t = Instant::now();
            info!("surface solve h = {h}");
            match surface_solve(cfg, &s, h) {
                Ok(sol) => {
                    let kirchhoff = (1..sol.eig.len().min(5))
                        .map(|i| kirchhoff_residual(&sol.mesh, &sol.eig.vector(i), sol.eig.values[i]).norm)
                        .collect();
                    let run = LimitRun {
                        h,
                        dofs: sol.forms.n,
                        values: sol.eig.values.clone(),
                        iterations: sol.eig.iterations,
                        max_residual: sol.eig.residuals.iter().cloned().fold(0.0, f64::max),
                        kirchhoff,
                        seconds: t.elapsed().as_secs_f64(),
                        failure: None,
                    };
                    let keep = keep_finest && h == finest;
                    (run, keep.then_some(sol))
                }
                Err(e) => {
                    warn!("surface run h = {h} failed: {e}");
                    (
                        LimitRun {
                            h,
                            dofs: 0,
                            values: Vec::new(),
                            iterations: 0,
                            max_residual: f64::NAN,
                            kirchhoff: Vec::new(),
                            seconds: t.elapsed().as_secs_f64(),
                            failure: Some(RunFailure::from_error(&e)),
                        },
                        None,
                    )
                }
            }
        })
        .collect();
    let mut kept = None;
    let mut runs = Vec::new();
    for (run, sol) in results {
        if sol.is_some() {
            kept = sol;
        }
        runs.push(run);
    }
    let ok: Vec<(f64, &[f64])> = runs
        .iter()
        .filter(|r| r.failure.is_none())
        .map(|r| (r.h, r.values.as_slice()))
        .collect();
    let (extrapolated, order) = extrapolate(&ok);
    let st = &cfg.structure;
    let oracle = book_limit_spectrum(st.edges, st.ell, st.binding_length, cfg.eigen_count).values();
    let error = extrapolated
        .iter()
        .zip(&oracle)
        .map(|(x, o)| if *o > 0.0 { (x - o).abs() / o } else { (x - o).abs() })
        .collect();
    let clusters = cluster_values(&extrapolated, CLUSTER_GAP);
    Ok((
        LimitReport {
            runs,
            extrapolated,
            observed_order: order,
            oracle,
            error,
            clusters,
        },
        kept,
    ))
}

pub fn run_limit(cfg: &ExperimentConfig) -> Result<LimitReport> {
    Ok(limit_study(cfg, false)?.0)
}

pub(crate) fn fattened_study(
    cfg: &ExperimentConfig,
    keep_finest: bool,
) -> Result<(FattenedReport, Vec<VolumeSolve>)> {
    let s = cfg.validate()?;
    let finest = *cfg.h_list.last().unwrap_or(&0.0);
    let jobs: Vec<(f64, f64)> = cfg
        .eps_list
        .iter()
        .flat_map(|&e| cfg.h_list.iter().map(move |&h| (e, h)))
        .collect();
    let results: Vec<(FattenedRun, Option<VolumeSolve>)> = jobs
        .par_iter()
        .map(|&(eps, h)| {
            let t = Instant::now();
            info!("fattened solve eps = {eps}, h = {h}");
            let mut run = FattenedRun {
                eps,
                h,
                n_z: cfg.n_z(h),
                dofs: 0,
                values: Vec::new(),
                iterations: 0,
                max_residual: f64::NAN,
                seconds: 0.0,
                failure: None,
            };
            let kept = match volume_solve(cfg, &s, eps, h) {
                Ok(sol) => {
                    run.dofs = sol.forms.n;
                    run.values = sol.eig.values.clone();
                    run.iterations = sol.eig.iterations;
                    run.max_residual = sol.eig.residuals.iter().cloned().fold(0.0, f64::max);
                    (keep_finest && h == finest).then_some(sol)
                }
                Err(e) => {
                    warn!("fattened run eps = {eps}, h = {h} failed: {e}");
                    run.failure = Some(RunFailure::from_error(&e));
                    None
                }
            };
            run.seconds = t.elapsed().as_secs_f64();
            (run, kept)
        })
        .collect();
    let mut runs = Vec::new();
    let mut kept = Vec::new();
    for (run, sol) in results {
        runs.push(run);
        kept.extend(sol);
    }
    let per_eps = cfg
        .eps_list
        .iter()
        .map(|&eps| {
            let ok: Vec<(f64, &[f64])> = runs
                .iter()
                .filter(|r| r.eps == eps && r.failure.is_none())
                .map(|r| (r.h, r.values.as_slice()))
                .collect();
            let (extrapolated, observed_order) = extrapolate(&ok);
            FattenedSummary {
                eps,
                extrapolated,
                observed_order,
            }
        })
        .collect();
    Ok((FattenedReport { runs, per_eps }, kept))
}

pub fn run_fattened(cfg: &ExperimentConfig) -> Result<FattenedReport> {
    Ok(fattened_study(cfg, false)?.0)
}

fn defects_for(
    cfg: &ExperimentConfig,
    surface: &SurfaceSolve,
    volumes: &[VolumeSolve],
) -> (Vec<TransferDefectReport>, Vec<(f64, RunFailure)>) {
    let registry = TransferRegistry::default();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for v in volumes {
        let r = registry
            .get(&cfg.transfer)
            .and_then(|c| c.build(&surface.mesh, &v.mesh, v.eps))
            .and_then(|maps| measure_defects(&surface.forms, &v.forms, &maps, cfg.cutoff, &v.eig, &surface.eig));
        match r {
            Ok(r) => reports.push(r),
            Err(e) => {
                warn!("transfer defects at eps = {} failed: {e}", v.eps);
                failures.push((v.eps, RunFailure::from_error(&e)));
            }
        }
    }
    (reports, failures)
}

/// Transfer defects on the finest meshes only.
pub fn run_transfer_defects(cfg: &ExperimentConfig) -> Result<(Vec<TransferDefectReport>, Vec<(f64, RunFailure)>)> {
    let s = cfg.validate()?;
    let hs = *cfg.surface_h_list.last().unwrap_or(&0.0);
    let h = *cfg.h_list.last().unwrap_or(&0.0);
    let surface = surface_solve(cfg, &s, hs)?;
    let volumes = cfg
        .eps_list
        .par_iter()
        .map(|&eps| volume_solve(cfg, &s, eps, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(defects_for(cfg, &surface, &volumes))
}

/// Bound factor (1 + δ) − 1 implied by an (isometry, energy) defect pair at
/// cutoff Λ; infinite when the isometry defect is too large.
pub fn combined_defect(iso: f64, energy: f64, cutoff: f64) -> f64 {
    let shrink = 1.0 - iso * (1.0 + cutoff);
    if shrink > 0.0 {
        (1.0 + energy) / shrink - 1.0
    } else {
        f64::INFINITY
    }
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let start = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let (limit, surface) = limit_study(cfg, true)?;
    let (fattened, volumes) = fattened_study(cfg, true)?;
    let mut warnings = Vec::new();

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for n in 0..cfg.eigen_count {
        let Some(&lambda_limit) = limit.oracle.get(n) else {
            continue;
        };
        let mut eps_ok = Vec::new();
        let mut gaps = Vec::new();
        for summary in &fattened.per_eps {
            match summary.extrapolated.get(n) {
                Some(&lambda_eps) => {
                    let gap = (lambda_eps - lambda_limit).abs();
                    rows.push(ConvergenceRow {
                        n,
                        lambda_limit,
                        eps: summary.eps,
                        lambda_eps,
                        gap,
                    });
                    eps_ok.push(summary.eps);
                    gaps.push(gap);
                }
                None => warnings.push(format!("no extrapolated value for n = {n} at eps = {}", summary.eps)),
            }
        }
        let monotone = gaps.len() == cfg.eps_list.len() && gaps.windows(2).all(|w| w[1] < w[0]);
        // λ_0 = 0 on both sides; its gap is solver noise
        if lambda_limit > 0.0 && !monotone {
            let msg = format!("WARN gap sequence for n = {n} is not strictly decreasing: {gaps:?}");
            warn!("{msg}");
            warnings.push(msg);
        }
        let fit = if lambda_limit > 0.0 && gaps.len() >= 3 {
            fit_rate(&eps_ok, &gaps)
        } else {
            None
        };
        fits.push(ModeFit { n, fit, monotone });
    }

    let (defects, defect_failures) = match &surface {
        Some(s) => defects_for(cfg, s, &volumes),
        None => {
            warnings.push("finest surface run failed; no transfer defects".into());
            (Vec::new(), Vec::new())
        }
    };

    let mut sandwich = Vec::new();
    for d in &defects {
        let delta = combined_defect(d.dj_iso, d.dj_energy, cfg.cutoff)
            .max(combined_defect(d.dk_iso, d.dk_energy, cfg.cutoff));
        for r in rows.iter().filter(|r| r.eps == d.eps && r.lambda_limit < cfg.cutoff) {
            let slack = 10.0 * cfg.tol * (1.0 + r.lambda_limit);
            // an infinite δ bounds nothing except the zero mode
            let bound = if r.lambda_limit == 0.0 {
                slack
            } else {
                delta * r.lambda_limit + slack
            };
            sandwich.push(SandwichRow {
                n: r.n,
                eps: r.eps,
                gap: r.gap,
                bound,
                holds: r.gap <= bound,
            });
        }
    }

    Ok(ConvergenceReport {
        config: cfg.clone(),
        limit,
        fattened,
        rows,
        fits,
        defects,
        defect_failures,
        sandwich,
        warnings,
        metadata: RunMetadata {
            started_unix_s,
            elapsed_s: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_uses_the_two_finest_levels() {
        let f = |h: f64| vec![0.0, 2.0 + 5.0 * h * h];
        let (a, b, c) = (f(0.4), f(0.2), f(0.1));
        let (ext, order) = extrapolate(&[(0.4, &a), (0.2, &b), (0.1, &c)]);
        assert!((ext[1] - 2.0).abs() < 1e-12);
        assert!((order[1].unwrap() - 2.0).abs() < 1e-9);
        assert!(order[0].is_none());
        assert!(extrapolate(&[(0.1, &c)]).0.is_empty());
    }

    #[test]
    fn combined_defect_limits() {
        assert_eq!(combined_defect(0.0, 0.0, 15.0), 0.0);
        assert!((combined_defect(0.0, 0.25, 15.0) - 0.25).abs() < 1e-15);
        assert!(combined_defect(0.1, 0.0, 15.0).is_infinite());
    }

    #[test]
    fn small_limit_study() {
        let cfg = ExperimentConfig {
            surface_h_list: vec![0.2, 0.1],
            eigen_count: 6,
            ..Default::default()
        };
        let r = run_limit(&cfg).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert!(r.runs.iter().all(|x| x.failure.is_none()));
        assert_eq!(r.extrapolated.len(), 6);
        for (x, o) in r.extrapolated.iter().zip(&r.oracle) {
            assert!((x - o).abs() < 0.02 * o.max(1.0), "{x} vs {o}");
        }
        let mult: Vec<usize> = r.clusters.iter().map(|c| c.1).collect();
        assert_eq!(mult[..4], [1, 2, 1, 2]);
    }

    #[test]
    fn failed_runs_are_recorded() {
        let cfg = ExperimentConfig {
            surface_h_list: vec![0.2, 0.1],
            eigen_count: 4,
            solver: "dense".into(),
            ..Default::default()
        };
        // the finer mesh exceeds the dense size limit
        let fine = ExperimentConfig {
            surface_h_list: vec![0.2, 0.02],
            ..cfg.clone()
        };
        let r = run_limit(&fine).unwrap();
        assert!(r.runs[0].failure.is_none());
        let f = r.runs[1].failure.as_ref().unwrap();
        assert!(!f.stalled);
        assert!(r.extrapolated.is_empty());
        assert!(run_limit(&cfg).unwrap().runs.iter().all(|x| x.failure.is_none()));
    }
}
