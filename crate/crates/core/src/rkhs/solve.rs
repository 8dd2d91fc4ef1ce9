//! Symmetric positive-definite solves for kernel matrices.
//!
//! Kernel matrices built from nearby atoms are routinely close to singular,
//! so every solve goes through a Cholesky factorization with a jitter ladder:
//! the requested diagonal shift is tried first, then a shift starting at
//! `1e-10 * trace / M` grows tenfold until it passes `1e-4 * trace / M`
//! (using the mean absolute diagonal, or 1 if that is zero).

use nalgebra::DMatrix;

use super::KernelMatrix;
use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
/// Pivots below this fraction of the mean diagonal count as a failed factorization.
const PIVOT_FLOOR: f64 = 1e-14;
const REFINEMENT_STEPS: usize = 4;

/// Lower-triangular Cholesky factor of `K + shift * I`.
#[derive(Clone, Debug)]
pub(crate) struct Cholesky {
    l: DMatrix<f64>,
    pub(crate) shift: f64,
}

impl Cholesky {
    fn try_new(k: &DMatrix<f64>, shift: f64, floor: f64) -> Option<Self> {
        let n = k.nrows();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = k[(j, j)] + shift;
            for p in 0..j {
                d -= l[(j, p)] * l[(j, p)];
            }
            if !(d > floor) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = k[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(Cholesky { l, shift })
    }

    /// Factorizes with the jitter ladder.
    pub(crate) fn factor(k: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        let n = k.nrows();
        if n == 0 {
            return Ok(Cholesky { l: DMatrix::zeros(0, 0), shift: jitter });
        }
        let mut scale = k.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n as f64;
        if !(scale > 0.0 && scale.is_finite()) {
            scale = 1.0;
        }
        let floor = PIVOT_FLOOR * scale;
        if let Some(c) = Self::try_new(k, jitter, floor) {
            return Ok(c);
        }
        let jitter_max = JITTER_MAX * scale;
        let mut shift = (JITTER_START * scale).max(jitter * 10.0);
        while shift <= jitter_max * (1.0 + 1e-12) {
            if let Some(c) = Self::try_new(k, shift, floor) {
                return Ok(c);
            }
            shift *= 10.0;
        }
        Err(Error::DegenerateDictionary { jitter_max })
    }

    pub(crate) fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for p in 0..i {
                    s -= self.l[(i, p)] * x[(p, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for p in (i + 1)..n {
                    s -= self.l[(p, i)] * x[(p, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        x
    }

    /// Explicit inverse of the factored matrix.
    pub(crate) fn inverse(&self) -> DMatrix<f64> {
        let n = self.l.nrows();
        let mut inv = self.solve(&DMatrix::identity(n, n));
        // symmetrize round-off
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

/// Solves `(K + jitter I) X = B`. If the factorization fails, the shift is
/// escalated and the answer is polished by iterative refinement against the
/// requested system.
pub fn psd_solve(k: &KernelMatrix, b: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    psd_solve_matrix(k.matrix(), b, jitter)
}

pub(crate) fn psd_solve_matrix(k: &DMatrix<f64>, b: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    if k.nrows() != k.ncols() {
        return Err(Error::usage("psd_solve needs a square matrix"));
    }
    if k.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch { expected: k.nrows(), got: b.nrows() });
    }
    if !(jitter >= 0.0) {
        return Err(Error::usage("jitter must be non-negative"));
    }
    let chol = Cholesky::factor(k, jitter)?;
    let mut x = chol.solve(b);
    if chol.shift > jitter {
        let n = k.nrows();
        let target = k + DMatrix::identity(n, n) * jitter;
        for _ in 0..REFINEMENT_STEPS {
            let r = b - &target * &x;
            x += chol.solve(&r);
        }
    }
    Ok(x)
}
