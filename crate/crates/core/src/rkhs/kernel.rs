use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Points;
use crate::error::{check_dim, Error, Result};

/// A positive semidefinite kernel together with its hyper-parameters.
///
/// Equality is exact on the hyper-parameters; two functions may only be
/// combined when their kernels compare equal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(-|x - y|^2 / (2 c^2))`
    Gaussian { bandwidth: f64 },
    /// `(x^T y + b)^degree`
    Polynomial { offset: f64, degree: u32 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(offset: f64, degree: u32) -> Result<Self> {
        let k = KernelSpec::Polynomial { offset, degree };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                if !(bandwidth.is_finite() && bandwidth > 0.0) {
                    return Err(Error::usage(format!("gaussian bandwidth must be positive, got {bandwidth}")));
                }
            }
            KernelSpec::Polynomial { offset, degree } => {
                if degree < 1 {
                    return Err(Error::usage("polynomial degree must be at least 1"));
                }
                if !offset.is_finite() {
                    return Err(Error::usage("polynomial offset must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Kernel evaluation without dimension checks; callers guarantee
    /// `x.len() == y.len()`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Polynomial { offset, degree } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (dot + offset).powi(degree as i32)
            }
        }
    }

    pub(crate) fn ensure_same(&self, other: &KernelSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::KernelMismatch(self.to_string(), other.to_string()))
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { bandwidth } => write!(f, "gaussian(c={bandwidth})"),
            KernelSpec::Polynomial { offset, degree } => {
                write!(f, "polynomial(b={offset}, c={degree})")
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    Ok(spec.eval_unchecked(x, y))
}

/// Dense matrix of pairwise kernel evaluations between two point sets.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix(DMatrix<f64>);

impl KernelMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        KernelMatrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.0.nrows() == self.0.ncols()
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.0.nrows();
        (0..n).all(|i| (0..i).all(|j| (self.0[(i, j)] - self.0[(j, i)]).abs() <= tol))
    }

    /// PSD tolerance `1e-8 * trace / M` used by the kernel-matrix invariant.
    pub fn psd_tolerance(&self) -> f64 {
        let n = self.0.nrows().max(1);
        1e-8 * self.trace().abs() / n as f64
    }

    /// Smallest eigenvalue of a square symmetric matrix.
    pub fn min_eigenvalue(&self) -> Option<f64> {
        if !self.is_square() || self.0.nrows() == 0 {
            return None;
        }
        let eig = SymmetricEigen::new(self.0.clone());
        eig.eigenvalues.iter().copied().reduce(f64::min)
    }
}

pub fn kernel_matrix(spec: &KernelSpec, a: &Points, b: &Points) -> Result<KernelMatrix> {
    if !a.is_empty() && !b.is_empty() {
        check_dim(a.dim(), b.dim())?;
    }
    Ok(KernelMatrix(gram(spec, a, b)))
}

/// Unchecked Gram matrix; exploits symmetry when both sets are the same object.
pub(crate) fn gram(spec: &KernelSpec, a: &Points, b: &Points) -> DMatrix<f64> {
    let (m, n) = (a.len(), b.len());
    let mut out = DMatrix::zeros(m, n);
    if std::ptr::eq(a, b) {
        for i in 0..m {
            for j in 0..=i {
                let v = spec.eval_unchecked(a.row(i), a.row(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
    } else {
        for j in 0..n {
            let bj = b.row(j);
            for i in 0..m {
                out[(i, j)] = spec.eval_unchecked(a.row(i), bj);
            }
        }
    }
    out
}

/// Symmetric Gram matrix of `a` whose leading block is already known.
/// Entries match [`gram`] exactly.
pub(crate) fn gram_extend(spec: &KernelSpec, a: &Points, prefix: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.len();
    let p = prefix.nrows();
    debug_assert!(p <= m);
    let mut out = DMatrix::zeros(m, m);
    out.view_mut((0, 0), (p, p)).copy_from(prefix);
    for i in p..m {
        for j in 0..=i {
            let v = spec.eval_unchecked(a.row(i), a.row(j));
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_identical_points_is_one() {
        let k = KernelSpec::gaussian(0.37).unwrap();
        assert_eq!(kernel_eval(&k, &[1.5, -2.0], &[1.5, -2.0]).unwrap(), 1.0);
    }

    #[test]
    fn polynomial_offset_only() {
        let k = KernelSpec::polynomial(1.0, 2).unwrap();
        assert_eq!(kernel_eval(&k, &[0.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_one_bandwidth_apart() {
        let k = KernelSpec::gaussian(0.06).unwrap();
        let v = kernel_eval(&k, &[0.0], &[0.06]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(kernel_eval(&k, &[0.0], &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_hyper_parameters() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
        assert!(KernelSpec::polynomial(1.0, 0).is_err());
    }

    #[test]
    fn matrix_shapes() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let one = Points::from_rows(&[vec![0.3, 0.4]]).unwrap();
        assert_eq!(kernel_matrix(&k, &one, &one).unwrap().matrix()[(0, 0)], 1.0);
        let empty = Points::new(2);
        let m = kernel_matrix(&k, &empty, &one).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (0, 1));
    }
}
