//! Smallest eigenpairs of symmetric-definite pencils K u = λ M u.

mod dense;
mod lobpcg;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use dense::{dense_pencil, DENSE_LIMIT};
pub use lobpcg::{lobpcg, LobpcgOptions};

use crate::error::{Error, Result};
use crate::femcore::AssembledForms;
use crate::sparse::CsrMatrix;

pub const DEFAULT_TOL: f64 = 1e-7;
/// Relative gap below which neighbouring eigenvalues count as one cluster.
pub const CLUSTER_GAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// Columns are M-orthonormal eigenvectors.
    pub vectors: DMatrix<f64>,
    /// ‖K u − λ M u‖ in the diagonal-M⁻¹ norm, divided by |λ| + 1.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub tol: f64,
    pub solver: String,
}

/// The serializable part of an [`EigenResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub solver: String,
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub tol: f64,
}

impl EigenResult {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i).iter().copied().collect()
    }

    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            solver: self.solver.clone(),
            values: self.values.clone(),
            residuals: self.residuals.clone(),
            iterations: self.iterations,
            tol: self.tol,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())?)
    }

    /// (value, multiplicity) groups of the computed values.
    pub fn clusters(&self) -> Vec<(f64, usize)> {
        cluster_values(&self.values, CLUSTER_GAP)
    }

    pub fn truncated(&self, count: usize) -> EigenResult {
        let c = count.min(self.len());
        EigenResult {
            values: self.values[..c].to_vec(),
            vectors: self.vectors.columns(0, c).into_owned(),
            residuals: self.residuals[..c].to_vec(),
            iterations: self.iterations,
            tol: self.tol,
            solver: self.solver.clone(),
        }
    }
}

/// Groups sorted values whose relative gap is below `rel_gap`; each cluster
/// is reported with its mean value.
pub fn cluster_values(values: &[f64], rel_gap: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((sum, count, last))
                if (v - *last).abs() <= rel_gap * v.abs().max(last.abs()).max(1.0) =>
            {
                *sum += v;
                *count += 1;
                *last = v;
            }
            _ => out.push((v, 1, v)),
        }
    }
    out.into_iter().map(|(s, c, _)| (s / c as f64, c)).collect()
}

pub(crate) fn relative_residuals(r: &DMatrix<f64>, mdiag: &[f64], lambda: &[f64]) -> Vec<f64> {
    (0..r.ncols())
        .map(|j| {
            let s: f64 = r
                .column(j)
                .iter()
                .zip(mdiag)
                .map(|(x, d)| x * x / d)
                .sum();
            s.sqrt() / (lambda[j].abs() + 1.0)
        })
        .collect()
}

/// Normalizes signs (first significant entry positive), computes residuals
/// and packages the result.
pub(crate) fn finish(
    k: &CsrMatrix,
    m: &CsrMatrix,
    values: Vec<f64>,
    mut vectors: DMatrix<f64>,
    iterations: usize,
    tol: f64,
    solver: &str,
) -> EigenResult {
    for j in 0..vectors.ncols() {
        let mut col = vectors.column_mut(j);
        let big = col.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-8 * big).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    let kx = k.mul_block(&vectors);
    let mx = m.mul_block(&vectors);
    let mut r = kx;
    for j in 0..values.len() {
        r.column_mut(j).axpy(-values[j], &mx.column(j), 1.0);
    }
    let residuals = relative_residuals(&r, &m.diagonal(), &values);
    EigenResult {
        values,
        vectors,
        residuals,
        iterations,
        tol,
        solver: solver.to_string(),
    }
}

/// A solver for the smallest eigenpairs of an assembled pencil.
pub trait EigenSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, k: &CsrMatrix, m: &CsrMatrix, count: usize, tol: f64, seed: u64) -> Result<EigenResult>;
}

#[derive(Debug, Default, Clone)]
pub struct LobpcgSolver {
    pub max_iter: Option<usize>,
}

impl EigenSolver for LobpcgSolver {
    fn name(&self) -> &'static str {
        "lobpcg"
    }

    fn solve(&self, k: &CsrMatrix, m: &CsrMatrix, count: usize, tol: f64, seed: u64) -> Result<EigenResult> {
        let mut opts = LobpcgOptions::default();
        if let Some(it) = self.max_iter {
            opts.max_iter = it;
        }
        lobpcg(k, m, count, tol, seed, &opts)
    }
}

#[derive(Debug, Default, Clone)]
pub struct DenseSolver;

impl EigenSolver for DenseSolver {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn solve(&self, k: &CsrMatrix, m: &CsrMatrix, count: usize, tol: f64, _seed: u64) -> Result<EigenResult> {
        let mut r = dense_pencil(k, m, count)?;
        r.tol = tol;
        Ok(r)
    }
}

/// Eigensolvers selectable by name.
#[derive(Clone)]
pub struct SolverRegistry {
    solvers: BTreeMap<String, Arc<dyn EigenSolver>>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut r = Self {
            solvers: BTreeMap::new(),
        };
        r.register(Arc::new(LobpcgSolver::default()));
        r.register(Arc::new(DenseSolver));
        r
    }
}

impl SolverRegistry {
    pub fn register(&mut self, solver: Arc<dyn EigenSolver>) {
        self.solvers.insert(solver.name().to_string(), solver);
    }

    pub fn names(&self) -> Vec<String> {
        self.solvers.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn EigenSolver>> {
        self.solvers.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: "eigensolver",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }
}

/// The `m` smallest eigenpairs by LOBPCG; small problems whose block would
/// not fit fall back to the dense reduction.
pub fn smallest_eigenpairs(forms: &AssembledForms, m: usize, tol: f64, seed: u64) -> Result<EigenResult> {
    let bs = m + 5.max(m / 2);
    if 3 * bs >= forms.n {
        return DenseSolver.solve(&forms.stiffness, &forms.mass, m, tol, seed);
    }
    LobpcgSolver::default().solve(&forms.stiffness, &forms.mass, m, tol, seed)
}

/// Full spectrum by dense reduction (n ≤ 2000).
pub fn dense_reference(forms: &AssembledForms) -> Result<EigenResult> {
    dense_pencil(&forms.stiffness, &forms.mass, forms.n)
}

pub fn rayleigh_quotient(forms: &AssembledForms, u: &[f64]) -> Result<f64> {
    if u.len() != forms.n {
        return Err(Error::InvalidParameter(format!(
            "vector length {} does not match dimension {}",
            u.len(),
            forms.n
        )));
    }
    let mu = forms.mass.quadratic(u);
    if !(mu > 0.0) {
        return Err(Error::DegenerateInput("zero vector has no Rayleigh quotient".into()));
    }
    Ok(forms.stiffness.quadratic(u) / mu)
}

#[derive(Debug, Clone)]
pub struct SpectralSubspace {
    pub cutoff: f64,
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors with λ < cutoff.
    pub basis: DMatrix<f64>,
    /// min |λ_i − cutoff| over the computed values.
    pub gap: f64,
}

impl SpectralSubspace {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Eigenvectors below `cutoff`. The cutoff must be separated from every
/// computed eigenvalue by more than `min_gap` and lie below the largest one,
/// so that no eigenvalue under it is missing.
pub fn spectral_subspace(result: &EigenResult, cutoff: f64, min_gap: f64) -> Result<SpectralSubspace> {
    let mut gap = f64::INFINITY;
    let mut nearest = f64::NAN;
    for &v in &result.values {
        let d = (v - cutoff).abs();
        if d < gap {
            gap = d;
            nearest = v;
        }
    }
    if gap <= min_gap {
        return Err(Error::CutoffOnEigenvalue {
            cutoff,
            eigenvalue: nearest,
            distance: gap,
        });
    }
    if result.values.last().is_none_or(|&top| top < cutoff) {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff} exceeds the largest computed eigenvalue; request more pairs"
        )));
    }
    let idx: Vec<usize> = (0..result.len()).filter(|&i| result.values[i] < cutoff).collect();
    let mut basis = DMatrix::zeros(result.vectors.nrows(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        basis.set_column(c, &result.vectors.column(i));
    }
    Ok(SpectralSubspace {
        cutoff,
        values: idx.iter().map(|&i| result.values[i]).collect(),
        basis,
        gap,
    })
}
