//! Locally optimal block preconditioned conjugate gradient for K x = λ M x.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finish, relative_residuals, EigenResult};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Directions whose Gram eigenvalue falls below this fraction of the largest
/// are dropped during orthonormalization.
const DROP_TOL: f64 = 1e-12;

fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

/// M-orthonormalizes the columns of `y` (SVQB), dropping near-dependent
/// directions. Returns the new block and its M-image.
fn svqb(m: &CsrMatrix, y: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut y = y;
    for _ in 0..2 {
        if y.ncols() == 0 {
            break;
        }
        let my = m.mul_block(&y);
        let g = y.tr_mul(&my);
        let g = (&g + g.transpose()) * 0.5;
        let d: Vec<f64> = (0..g.nrows()).map(|i| g[(i, i)].max(0.0).sqrt()).collect();
        let dmax = d.iter().cloned().fold(0.0, f64::max);
        if dmax == 0.0 {
            return (DMatrix::zeros(y.nrows(), 0), DMatrix::zeros(y.nrows(), 0));
        }
        let dinv: Vec<f64> = d
            .iter()
            .map(|&x| if x > 1e-150 * dmax { 1.0 / x } else { 0.0 })
            .collect();
        let mut gs = g.clone();
        for i in 0..gs.nrows() {
            for j in 0..gs.ncols() {
                gs[(i, j)] *= dinv[i] * dinv[j];
            }
        }
        let eig = SymmetricEigen::new(gs);
        let emax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let mut keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > DROP_TOL * emax)
            .collect();
        keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut t = DMatrix::zeros(y.ncols(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let s = 1.0 / eig.eigenvalues[i].sqrt();
            for r in 0..y.ncols() {
                t[(r, c)] = dinv[r] * eig.eigenvectors[(r, i)] * s;
            }
        }
        y = &y * t;
    }
    let my = m.mul_block(&y);
    (y, my)
}

/// Removes the M-components of `w` along the M-orthonormal block `x` (twice).
fn project_out(w: &mut DMatrix<f64>, x: &DMatrix<f64>, mx: &DMatrix<f64>) {
    if x.ncols() == 0 || w.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let c = mx.tr_mul(w);
        *w -= x * c;
    }
}

pub struct LobpcgOptions {
    pub max_iter: usize,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self { max_iter: 5000 }
    }
}

pub fn lobpcg(
    k: &CsrMatrix,
    m: &CsrMatrix,
    nev: usize,
    tol: f64,
    seed: u64,
    opts: &LobpcgOptions,
) -> Result<EigenResult> {
    let n = k.nrows();
    if nev == 0 {
        return Err(Error::InvalidParameter("need at least one eigenpair".into()));
    }
    let bs = (nev + 5.max(nev / 2)).min(n);
    if 3 * bs >= n {
        return Err(Error::InvalidParameter(format!(
            "block size {bs} too large for dimension {n}; use the dense solver"
        )));
    }
    let kdiag = k.diagonal();
    let mdiag = m.diagonal();
    if mdiag.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::DegenerateInput("mass matrix has a nonpositive diagonal".into()));
    }
    let precond: Vec<f64> = kdiag.iter().zip(&mdiag).map(|(a, b)| 1.0 / (a + b)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = DMatrix::from_fn(n, bs, |_, _| rng.random_range(-1.0..1.0));
    let (x, _) = svqb(m, x0);
    if x.ncols() < bs {
        return Err(Error::DegenerateInput("random start block is rank deficient".into()));
    }

    let rayleigh_ritz = |s: &DMatrix<f64>, ks: &DMatrix<f64>| -> (Vec<f64>, DMatrix<f64>) {
        let h = s.tr_mul(ks);
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut c = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
        for (j, &i) in order.iter().enumerate() {
            c.set_column(j, &eig.eigenvectors.column(i));
        }
        (vals, c)
    };

    let kx = k.mul_block(&x);
    let (vals, c) = rayleigh_ritz(&x, &kx);
    let mut x = &x * &c;
    let mut lambda: Vec<f64> = vals;
    let mut p: Option<DMatrix<f64>> = None;
    let mut iterations = 0;

    loop {
        let kx = k.mul_block(&x);
        let mx = m.mul_block(&x);
        let mut r = kx.clone();
        for j in 0..bs {
            let mut col = r.column_mut(j);
            col.axpy(-lambda[j], &mx.column(j), 1.0);
        }
        let residuals = relative_residuals(&r, &mdiag, &lambda);
        let worst = residuals[..nev].iter().cloned().fold(0.0, f64::max);
        if worst <= tol {
            break;
        }
        if iterations >= opts.max_iter {
            let partial = finish(
                k,
                m,
                lambda[..nev].to_vec(),
                x.columns(0, nev).into_owned(),
                iterations,
                tol,
                "lobpcg",
            );
            return Err(Error::SolverStalled {
                iterations,
                worst_residual: worst,
                partial: Box::new(partial),
            });
        }
        iterations += 1;

        let active: Vec<usize> = (0..bs).filter(|&j| residuals[j] > tol).collect();
        let mut w = DMatrix::zeros(n, active.len());
        for (c, &j) in active.iter().enumerate() {
            for i in 0..n {
                w[(i, c)] = precond[i] * r[(i, j)];
            }
        }

        let mut blocks = vec![x.clone()];
        let mut kblocks = vec![kx];
        let mut basis = x.clone();
        let mut mbasis = mx;
        if let Some(mut pp) = p.take() {
            project_out(&mut pp, &basis, &mbasis);
            let (pp, mpp) = svqb(m, pp);
            if pp.ncols() > 0 {
                kblocks.push(k.mul_block(&pp));
                basis = hstack(&[&basis, &pp]);
                mbasis = hstack(&[&mbasis, &mpp]);
                blocks.push(pp);
            }
        }
        project_out(&mut w, &basis, &mbasis);
        let (w, _) = svqb(m, w);
        if w.ncols() > 0 {
            kblocks.push(k.mul_block(&w));
            blocks.push(w);
        }
        let s = hstack(&blocks.iter().collect::<Vec<_>>());
        let ks = hstack(&kblocks.iter().collect::<Vec<_>>());
        let (vals, c) = rayleigh_ritz(&s, &ks);
        let c = c.columns(0, bs).into_owned();
        let x_new = &s * &c;
        if s.ncols() > bs {
            let tail = s.columns(bs, s.ncols() - bs) * c.rows(bs, s.ncols() - bs);
            p = Some(tail);
        }
        x = x_new;
        lambda = vals[..bs].to_vec();
        if iterations % 20 == 0 {
            // guard against slow loss of M-orthonormality
            let (xo, _) = svqb(m, x);
            if xo.ncols() < bs {
                return Err(Error::DegenerateInput("iteration block lost rank".into()));
            }
            let kx = k.mul_block(&xo);
            let (vals, c) = rayleigh_ritz(&xo, &kx);
            x = &xo * &c;
            lambda = vals;
        }
    }
    Ok(finish(
        k,
        m,
        lambda[..nev].to_vec(),
        x.columns(0, nev).into_owned(),
        iterations,
        tol,
        "lobpcg",
    ))
}
