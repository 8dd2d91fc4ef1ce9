//! Kernels, kernel matrices and the dictionary-plus-weights function type.

mod function;
pub mod io;
mod kernel;
mod points;
mod solve;

pub use function::RkhsFunction;
pub use kernel::{kernel_eval, kernel_matrix, KernelMatrix, KernelSpec};
pub use points::Points;
pub use solve::psd_solve;

pub(crate) use kernel::{gram, gram_extend};
pub(crate) use solve::{psd_solve_matrix, Cholesky};

use crate::error::Result;

pub fn evaluate(f: &RkhsFunction, x: &[f64]) -> Result<Vec<f64>> {
    f.evaluate(x)
}

pub fn inner_product(f: &RkhsFunction, g: &RkhsFunction) -> Result<Vec<f64>> {
    f.inner_product(g)
}

pub fn hilbert_norm(f: &RkhsFunction) -> f64 {
    f.hilbert_norm()
}
