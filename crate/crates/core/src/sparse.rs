//! Compressed sparse row storage for the assembled forms and transfer maps.
//!
//! Row sums are always accumulated sequentially in column order, so products
//! are bitwise identical whether or not rows are processed in parallel.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows below this count are multiplied on the calling thread.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over the stored entries of one row as (column, value).
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            acc += self.values[k] * x[self.col_idx[k]];
        }
        acc
    }

    /// y = A x into a preallocated slice.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        if self.nrows < PAR_ROWS {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = self.row_dot(r, x);
            }
        } else {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(r, yr)| *yr = self.row_dot(r, x));
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_dvec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.mul_vec(x.as_slice()))
    }

    /// Multiplies a dense column-major block, column by column.
    pub fn mul_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            self.mul_vec_into(xc.as_slice(), yc.as_mut_slice());
        }
        y
    }

    /// xᵀ A y for square matrices.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    /// Largest |A_ij - A_ji| over the stored pattern.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Symmetric permutation P A Pᵀ where `perm[old] = new`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.nrows);
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((perm[r], perm[c], v));
            }
        }
        Self::from_triplets(self.nrows, self.ncols, trip)
    }

    /// a·A + b·B for matrices of equal shape.
    pub fn linear_combination(a: f64, lhs: &Self, b: f64, rhs: &Self) -> Self {
        assert_eq!((lhs.nrows, lhs.ncols), (rhs.nrows, rhs.ncols));
        let mut trip = Vec::with_capacity(lhs.nnz() + rhs.nnz());
        for r in 0..lhs.nrows {
            trip.extend(lhs.row(r).map(|(c, v)| (r, c, a * v)));
            trip.extend(rhs.row(r).map(|(c, v)| (r, c, b * v)));
        }
        Self::from_triplets(lhs.nrows, lhs.ncols, trip)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Writes the matrix in Matrix Market coordinate format. Symmetric
    /// matrices store only the lower triangle, as the format requires.
    pub fn write_matrix_market<W: Write>(&self, mut w: W, symmetric: bool) -> Result<()> {
        if symmetric && (self.nrows != self.ncols || self.max_asymmetry() != 0.0) {
            return Err(Error::InvalidParameter(
                "matrix is not exactly symmetric".into(),
            ));
        }
        let kind = if symmetric { "symmetric" } else { "general" };
        writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
        let entries: Vec<(usize, usize, f64)> = (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .filter(|&(r, c, _)| !symmetric || c <= r)
            .collect();
        writeln!(w, "{} {} {}", self.nrows, self.ncols, entries.len())?;
        for (r, c, v) in entries {
            writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }
}
