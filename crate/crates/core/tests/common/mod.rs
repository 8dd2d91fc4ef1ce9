//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use parsikern::{KernelSpec, Points, RkhsFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain kernel formula, written out separately from the library.
pub fn kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match *spec {
        KernelSpec::Gaussian { bandwidth } => {
            let mut d2 = 0.0;
            for i in 0..x.len() {
                d2 += (x[i] - y[i]).powi(2);
            }
            (-d2 / (2.0 * bandwidth.powi(2))).exp()
        }
        KernelSpec::Polynomial { offset, degree } => {
            let mut dot = offset;
            for i in 0..x.len() {
                dot += x[i] * y[i];
            }
            dot.powi(degree as i32)
        }
    }
}

/// A kernel expansion kept as plain vectors.
#[derive(Clone, Debug)]
pub struct Dense {
    pub kernel: KernelSpec,
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

impl Dense {
    pub fn new(kernel: KernelSpec) -> Self {
        Dense { kernel, atoms: Vec::new(), weights: Vec::new() }
    }

    pub fn from_function(f: &RkhsFunction) -> Self {
        let atoms = f.dictionary().rows().map(|r| r.to_vec()).collect();
        let w = f.weights();
        let weights = (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect();
        Dense { kernel: *f.kernel(), atoms, weights }
    }

    pub fn eval(&self, x: &[f64], outputs: usize) -> Vec<f64> {
        let mut out = vec![0.0; outputs];
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            let k = kernel(&self.kernel, a, x);
            for c in 0..outputs {
                out[c] += w[c] * k;
            }
        }
        out
    }

    /// Squared Hilbert distance summed over outputs.
    pub fn dist2(&self, other: &Dense) -> f64 {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let mut weights = self.weights.clone();
        weights.extend(other.weights.iter().map(|w| w.iter().map(|v| -v).collect::<Vec<f64>>()));
        let mut total = 0.0;
        for (a, wa) in atoms.iter().zip(&weights) {
            for (b, wb) in atoms.iter().zip(&weights) {
                let k = kernel(&self.kernel, a, b);
                total += wa.iter().zip(wb).map(|(u, v)| u * v * k).sum::<f64>();
            }
        }
        total
    }
}

pub fn random_function(rng: &mut ChaCha8Rng, kernel: KernelSpec, m: usize, dim: usize, outputs: usize) -> RkhsFunction {
    let flat: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let w = DMatrix::from_fn(m, outputs, |_, _| rng.random_range(-1.0..1.0));
    RkhsFunction::new(kernel, Points::from_flat(dim, flat).unwrap(), w).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest change of `||f_in - f_w||^2` that a perturbation of the weights
/// of `f_out` by `h` along random directions can produce downwards; a
/// projection leaves no first-order descent.
pub fn perturbation_gain(f_in: &RkhsFunction, f_out: &RkhsFunction, h: f64, rng: &mut ChaCha8Rng) -> f64 {
    let target = Dense::from_function(f_in);
    let base = Dense::from_function(f_out);
    let e0 = target.dist2(&base);
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let mut plus = base.clone();
        let mut minus = base.clone();
        for (wp, wm) in plus.weights.iter_mut().zip(minus.weights.iter_mut()) {
            for (a, b) in wp.iter_mut().zip(wm.iter_mut()) {
                let d: f64 = rng.random_range(-1.0..1.0);
                *a += h * d;
                *b -= h * d;
            }
        }
        worst = worst.max(e0 - target.dist2(&plus)).max(e0 - target.dist2(&minus));
    }
    worst
}
