use nalgebra::DMatrix;

use super::kernel::gram;
use super::{KernelSpec, Points};
use crate::error::{check_dim, Error, Result};

/// A kernel expansion `f(.) = sum_m W[m, :] k(d_m, .)` over a shared
/// dictionary, with one weight column per output.
///
/// An empty dictionary represents the zero function exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct RkhsFunction {
    kernel: KernelSpec,
    dictionary: Points,
    weights: DMatrix<f64>,
}

impl RkhsFunction {
    pub fn zero(kernel: KernelSpec, dim: usize, outputs: usize) -> Self {
        RkhsFunction { kernel, dictionary: Points::new(dim), weights: DMatrix::zeros(0, outputs) }
    }

    pub fn new(kernel: KernelSpec, dictionary: Points, weights: DMatrix<f64>) -> Result<Self> {
        kernel.validate()?;
        if dictionary.len() != weights.nrows() {
            return Err(Error::usage(format!(
                "dictionary has {} atoms but weights have {} rows",
                dictionary.len(),
                weights.nrows()
            )));
        }
        if weights.ncols() == 0 {
            return Err(Error::usage("functions need at least one output"));
        }
        Ok(RkhsFunction { kernel, dictionary, weights })
    }

    /// Single atom `k(x, .)` with unit weight on every output.
    pub fn atom(kernel: KernelSpec, x: &[f64], outputs: usize) -> Self {
        let mut dictionary = Points::new(x.len());
        dictionary.push(x).expect("dimension matches by construction");
        RkhsFunction { kernel, dictionary, weights: DMatrix::from_element(1, outputs, 1.0) }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn dictionary(&self) -> &Points {
        &self.dictionary
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn model_order(&self) -> usize {
        self.dictionary.len()
    }

    pub fn dim(&self) -> usize {
        self.dictionary.dim()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dictionary.is_empty()
    }

    /// Multiplies every weight by `factor`.
    pub fn scale(&mut self, factor: f64) {
        self.weights *= factor;
    }

    /// Appends an atom with the given weight row.
    pub fn push_atom(&mut self, x: &[f64], weight_row: &[f64]) -> Result<()> {
        check_dim(self.outputs(), weight_row.len())?;
        self.dictionary.push(x)?;
        let m = self.weights.nrows();
        let c = self.weights.ncols();
        let mut w = std::mem::replace(&mut self.weights, DMatrix::zeros(0, c)).insert_row(m, 0.0);
        for (j, v) in weight_row.iter().enumerate() {
            w[(m, j)] = *v;
        }
        self.weights = w;
        Ok(())
    }

    /// Writes `f(x)` into `out` without dimension checks.
    pub(crate) fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (m, d) in self.dictionary.rows().enumerate() {
            let k = self.kernel.eval_unchecked(d, x);
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.weights[(m, c)] * k;
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; self.outputs()];
        self.evaluate_into(x, &mut out);
        Ok(out)
    }

    /// Per-output RKHS inner products `w_f[:, c]^T K w_g[:, c]`.
    pub fn inner_product(&self, other: &RkhsFunction) -> Result<Vec<f64>> {
        self.kernel.ensure_same(&other.kernel)?;
        check_dim(self.outputs(), other.outputs())?;
        if self.is_zero() || other.is_zero() {
            return Ok(vec![0.0; self.outputs()]);
        }
        check_dim(self.dim(), other.dim())?;
        let k = gram(&self.kernel, &self.dictionary, &other.dictionary);
        let kw = &k * &other.weights;
        Ok((0..self.outputs()).map(|c| self.weights.column(c).dot(&kw.column(c))).collect())
    }

    /// Squared Hilbert norm summed over outputs, clamped at zero.
    pub fn squared_norm(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let k = gram(&self.kernel, &self.dictionary, &self.dictionary);
        let kw = &k * &self.weights;
        let s: f64 = (0..self.outputs()).map(|c| self.weights.column(c).dot(&kw.column(c))).sum();
        s.max(0.0)
    }

    pub fn hilbert_norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    /// `self - other` represented on the stacked dictionary. Atoms that are
    /// bitwise identical across the two functions are merged so that
    /// identical functions give an exactly zero difference.
    pub fn difference(&self, other: &RkhsFunction) -> Result<RkhsFunction> {
        self.kernel.ensure_same(&other.kernel)?;
        check_dim(self.outputs(), other.outputs())?;
        let dim = if self.is_zero() { other.dim() } else { self.dim() };
        if !self.is_zero() && !other.is_zero() {
            check_dim(self.dim(), other.dim())?;
        }
        let c = self.outputs();
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let push = |x: &[f64], w: Vec<f64>, atoms: &mut Vec<Vec<f64>>, rows: &mut Vec<Vec<f64>>| {
            if let Some(k) = atoms.iter().position(|a| a.as_slice() == x) {
                for (r, v) in rows[k].iter_mut().zip(w) {
                    *r += v;
                }
            } else {
                atoms.push(x.to_vec());
                rows.push(w);
            }
        };
        for (m, x) in self.dictionary.rows().enumerate() {
            let w: Vec<f64> = (0..c).map(|j| self.weights[(m, j)]).collect();
            push(x, w, &mut atoms, &mut rows);
        }
        for (m, x) in other.dictionary.rows().enumerate() {
            let w: Vec<f64> = (0..c).map(|j| -other.weights[(m, j)]).collect();
            push(x, w, &mut atoms, &mut rows);
        }
        let dictionary = Points::from_flat(dim, atoms.concat())?;
        let weights = DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]);
        RkhsFunction::new(self.kernel, dictionary, weights)
    }
}
