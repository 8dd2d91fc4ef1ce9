//! Destructive kernel orthogonal matching pursuit.
//!
//! Starting from the full dictionary of the input function, atoms are removed
//! one at a time. At each stage the candidate whose removal leaves the
//! smallest Hilbert-norm distance to the *input* function is dropped, as long
//! as that distance stays within the budget. Surviving weights are refit by
//! orthogonal projection of the input onto the span of the survivors.
//!
//! Two kinds of atoms cost nothing to remove and are handled structurally
//! before any linear algebra: atoms whose weight row is exactly zero, and
//! atoms whose coordinates exactly duplicate another atom (their weights are
//! merged). Everything else goes through an explicit inverse of the
//! dictionary kernel matrix that is downdated after each removal, so a
//! compression costs `O(M^3 + r M^2)` for `r` removals, or `O((r + 1) M^2)`
//! when the inverse is carried over from the previous compression.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rkhs::{gram, gram_extend, psd_solve_matrix, Cholesky, Points, RkhsFunction};

/// Relative Schur-complement pivot below which the inverse is rebuilt
/// instead of downdated.
const DOWNDATE_PIVOT_FLOOR: f64 = 1e-12;
const BORDER_JITTER: f64 = 1e-10;

/// Hilbert-norm budget for one compression.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct CompressionBudget(f64);

impl CompressionBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::usage(format!("compression budget must be non-negative, got {epsilon}")));
        }
        Ok(CompressionBudget(epsilon))
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressionReport {
    pub removed_count: usize,
    /// `|f_out - f_in|_H`
    pub final_error: f64,
    pub final_model_order: usize,
    /// Distance to the input after each accepted removal, in removal order.
    pub removal_errors: Vec<f64>,
}

/// Hilbert-norm optimal weights for representing `target` on `dictionary`.
pub fn refit_weights(target: &RkhsFunction, dictionary: &Points) -> Result<DMatrix<f64>> {
    let c = target.outputs();
    if dictionary.is_empty() {
        return Ok(DMatrix::zeros(0, c));
    }
    if target.is_zero() {
        return Ok(DMatrix::zeros(dictionary.len(), c));
    }
    crate::error::check_dim(target.dim(), dictionary.dim())?;
    let k_dd = gram(target.kernel(), dictionary, dictionary);
    let rhs = gram(target.kernel(), dictionary, target.dictionary()) * target.weights();
    psd_solve_matrix(&k_dd, &rhs, 0.0)
}

/// Distance from `target` to its projection onto the span of `dictionary`.
pub fn approximation_error(target: &RkhsFunction, dictionary: &Points) -> Result<f64> {
    if dictionary.is_empty() || target.is_zero() {
        return Ok(target.hilbert_norm());
    }
    crate::error::check_dim(target.dim(), dictionary.dim())?;
    if covers(dictionary, target.dictionary()) {
        return Ok(0.0);
    }
    let w = refit_weights(target, dictionary)?;
    Ok(residual_norm(target, dictionary, &w))
}

/// Every atom of `atoms` appears verbatim in `dictionary`.
fn covers(dictionary: &Points, atoms: &Points) -> bool {
    atoms.rows().all(|a| dictionary.rows().any(|d| d == a))
}

/// `|target - sum_m w_m k(d_m, .)|_H`, summed over outputs in quadrature.
pub(crate) fn residual_norm(target: &RkhsFunction, dictionary: &Points, w: &DMatrix<f64>) -> f64 {
    let kernel = target.kernel();
    let wt = target.weights();
    let k_tt = gram(kernel, target.dictionary(), target.dictionary());
    let k_dt = gram(kernel, dictionary, target.dictionary());
    let k_dd = gram(kernel, dictionary, dictionary);
    let kw_t = &k_tt * wt;
    let b = &k_dt * wt;
    let kw_d = &k_dd * w;
    let mut err2 = 0.0;
    for c in 0..target.outputs() {
        err2 +=
            wt.column(c).dot(&kw_t.column(c)) - 2.0 * w.column(c).dot(&b.column(c)) + w.column(c).dot(&kw_d.column(c));
    }
    err2.max(0.0).sqrt()
}

/// Removes zero-weight atoms and folds exact duplicates together, smallest
/// index first. Returns the surviving indices and their weight rows.
fn structural_pass(f: &RkhsFunction, removal_errors: &mut Vec<f64>) -> (Vec<usize>, DMatrix<f64>) {
    let m = f.model_order();
    let c = f.outputs();
    let d = f.dictionary();
    let mut w = f.weights().clone();
    let mut alive = vec![true; m];
    // Adding zero maps -0.0 to 0.0 so the bit patterns agree with `==`.
    let mut classes: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for j in 0..m {
        let key = d.row(j).iter().map(|v| (v + 0.0).to_bits()).collect();
        classes.entry(key).or_default().push(j);
    }
    let mut twins: Vec<Vec<usize>> = vec![Vec::new(); m];
    for class in classes.values().filter(|c| c.len() > 1) {
        for &j in class {
            twins[j] = class.iter().copied().filter(|&k| k != j).collect();
        }
    }
    'scan: loop {
        for j in 0..m {
            if !alive[j] {
                continue;
            }
            if (0..c).all(|col| w[(j, col)] == 0.0) {
                alive[j] = false;
                removal_errors.push(0.0);
                continue 'scan;
            }
            if let Some(&k) = twins[j].iter().find(|&&k| alive[k]) {
                for col in 0..c {
                    let v = w[(j, col)];
                    w[(k, col)] += v;
                }
                alive[j] = false;
                removal_errors.push(0.0);
                continue 'scan;
            }
        }
        break;
    }
    let keep: Vec<usize> = (0..m).filter(|&j| alive[j]).collect();
    let z = DMatrix::from_fn(keep.len(), c, |i, col| w[(keep[i], col)]);
    (keep, z)
}

/// Kernel matrix and its inverse for a compressed dictionary, reusable by
/// the next compression of a function whose dictionary extends this one.
#[derive(Clone, Debug, PartialEq)]
pub struct WarmStart {
    gram: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl WarmStart {
    pub fn model_order(&self) -> usize {
        self.inverse.nrows()
    }
}

/// Greedy removal state over the structurally reduced dictionary.
struct Pursuit {
    gram: DMatrix<f64>,
    z0: DMatrix<f64>,
    /// positions into `gram`, ascending
    active: Vec<usize>,
    inverse: DMatrix<f64>,
    /// optimal weights of the input projected onto `active`
    z: DMatrix<f64>,
    err2: f64,
    mean_diag: f64,
}

impl Pursuit {
    fn new(gram: DMatrix<f64>, z0: DMatrix<f64>, warm: Option<&WarmStart>) -> Option<Self> {
        let n = gram.nrows();
        let mean_diag = gram.diagonal().sum() / n as f64;
        let inverse = match warm.and_then(|w| bordered_inverse(&gram, &w.inverse, mean_diag)) {
            Some(inv) => inv,
            None => Cholesky::factor(&gram, 0.0).ok()?.inverse(),
        };
        Some(Pursuit { inverse, z: z0.clone(), active: (0..n).collect(), gram, z0, err2: 0.0, mean_diag })
    }

    /// Squared error after removing the atom at `pos`.
    fn candidate(&self, pos: usize) -> f64 {
        let ajj = self.inverse[(pos, pos)];
        let inc: f64 = self.z.row(pos).iter().map(|v| v * v).sum::<f64>() / ajj;
        let cand = self.err2 + inc;
        if cand.is_finite() && inc >= 0.0 {
            cand
        } else {
            f64::INFINITY
        }
    }

    fn best(&self, blocked: &[bool]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (pos, &a) in self.active.iter().enumerate() {
            if blocked[a] {
                continue;
            }
            let cand = self.candidate(pos);
            if cand.is_finite() && best.is_none_or(|(_, b)| cand < b) {
                best = Some((pos, cand));
            }
        }
        best
    }

    /// Drops the atom at `pos`. Returns false when the reduced kernel matrix
    /// cannot be factored; the state is left unchanged in that case.
    fn remove(&mut self, pos: usize, cand: f64) -> bool {
        let ajj = self.inverse[(pos, pos)];
        let n = self.active.len();
        if 1.0 / ajj < DOWNDATE_PIVOT_FLOOR * self.mean_diag {
            let mut rest = self.active.clone();
            rest.remove(pos);
            let sub = self.gram.select_rows(&rest).select_columns(&rest);
            let Ok(chol) = Cholesky::factor(&sub, 0.0) else {
                return false;
            };
            let rhs = self.gram.select_rows(&rest) * &self.z0;
            self.z = chol.solve(&rhs);
            self.inverse = chol.inverse();
            self.active = rest;
        } else {
            let keep: Vec<usize> = (0..n).filter(|&i| i != pos).collect();
            let a = self.inverse.column(pos).select_rows(&keep);
            let zj = self.z.row(pos).into_owned();
            let mut inv = self.inverse.select_rows(&keep).select_columns(&keep);
            inv -= &a * a.transpose() / ajj;
            let mut z = self.z.select_rows(&keep);
            z -= &a * zj / ajj;
            self.inverse = inv;
            self.z = z;
            self.active.remove(pos);
        }
        self.err2 = cand;
        true
    }

    /// Projection weights on the active set after one refinement sweep.
    fn refined_weights(&self) -> DMatrix<f64> {
        let rows = self.gram.select_rows(&self.active);
        let g_aa = rows.select_columns(&self.active);
        let r = &rows * &self.z0 - &g_aa * &self.z;
        &self.z + &self.inverse * r
    }

    fn warm_start(&self) -> WarmStart {
        WarmStart {
            gram: self.gram.select_rows(&self.active).select_columns(&self.active),
            inverse: self.inverse.clone(),
        }
    }

    /// Puts `extra` back into the active set by bordering the current
    /// inverse. Returns the ascending survivor positions, their refined
    /// weights and the matching warm start.
    fn restore(&self, extra: &[usize]) -> Option<(Vec<usize>, DMatrix<f64>, WarmStart)> {
        let order: Vec<usize> = self.active.iter().chain(extra).copied().collect();
        let rows = self.gram.select_rows(&order);
        let g = rows.select_columns(&order);
        let inv = if self.active.is_empty() {
            Cholesky::factor(&g, 0.0).ok()?.inverse()
        } else {
            bordered_inverse(&g, &self.inverse, self.mean_diag)?
        };
        let b = &rows * &self.z0;
        let w = &inv * &b;
        let w = &w + &inv * (&b - &g * &w);
        let mut perm: Vec<usize> = (0..order.len()).collect();
        perm.sort_unstable_by_key(|&i| order[i]);
        let sorted: Vec<usize> = perm.iter().map(|&i| order[i]).collect();
        let warm = WarmStart {
            gram: g.select_rows(&perm).select_columns(&perm),
            inverse: inv.select_rows(&perm).select_columns(&perm),
        };
        Some((sorted, w.select_rows(&perm), warm))
    }

    /// Upper bound on `|f_in - sum_active w k|`: the quadratic form of the
    /// coefficient difference over the structural dictionary plus its
    /// rounding error. Infinite when the form is not finite.
    fn distance(&self, active: &[usize], w: &DMatrix<f64>) -> f64 {
        let mut d = self.z0.clone();
        for (i, &a) in active.iter().enumerate() {
            for c in 0..d.ncols() {
                d[(a, c)] -= w[(i, c)];
            }
        }
        let n = self.gram.nrows();
        let (mut e2, mut magnitude) = (0.0, 0.0);
        for c in 0..d.ncols() {
            let dc = d.column(c);
            for j in 0..n {
                let dj = dc[j];
                if dj == 0.0 {
                    continue;
                }
                let (mut s, mut m) = (0.0, 0.0);
                for (g, di) in self.gram.column(j).iter().zip(dc.iter()) {
                    s += g * di;
                    m += (g * di).abs();
                }
                e2 += s * dj;
                magnitude += m * dj.abs();
            }
        }
        let rounding = 2.0 * (n + 1) as f64 * f64::EPSILON * magnitude;
        if !(e2.is_finite() && rounding.is_finite()) {
            return f64::INFINITY;
        }
        (e2.max(0.0) + rounding).sqrt()
    }
}

/// Extends the inverse of the leading block of `gram` one atom at a time via
/// Schur complements.
fn bordered_inverse(gram: &DMatrix<f64>, prefix_inv: &DMatrix<f64>, mean_diag: f64) -> Option<DMatrix<f64>> {
    let n = gram.nrows();
    let p = prefix_inv.nrows();
    if p == 0 || p > n {
        return None;
    }
    let mut inv = prefix_inv.clone();
    for i in p..n {
        let b = gram.view((0, i), (i, 1)).into_owned();
        let a = &inv * &b;
        // A new atom numerically inside the span gets the smallest jitter of
        // the factorization ladder on its own diagonal entry.
        let s = (gram[(i, i)] - b.dot(&a)).max(BORDER_JITTER * mean_diag);
        if !s.is_finite() {
            return None;
        }
        let mut next = DMatrix::zeros(i + 1, i + 1);
        let outer = &a * a.transpose() / s;
        next.view_mut((0, 0), (i, i)).copy_from(&(&inv + outer));
        for r in 0..i {
            next[(r, i)] = -a[r] / s;
            next[(i, r)] = -a[r] / s;
        }
        next[(i, i)] = 1.0 / s;
        inv = next;
    }
    Some(inv)
}

/// Compresses `f_in` to the smallest dictionary the greedy rule reaches
/// while staying within `budget` of it in Hilbert norm.
pub fn komp_compress(f_in: &RkhsFunction, budget: CompressionBudget) -> Result<(RkhsFunction, CompressionReport)> {
    komp_compress_warm(f_in, budget, None).map(|(f, r, _)| (f, r))
}

/// [`komp_compress`] reusing the inverse kernel matrix of a previous output
/// whose dictionary is a prefix of `f_in`'s. Returns the inverse for the new
/// output when it is available.
pub fn komp_compress_warm(
    f_in: &RkhsFunction,
    budget: CompressionBudget,
    warm: Option<&WarmStart>,
) -> Result<(RkhsFunction, CompressionReport, Option<WarmStart>)> {
    let eps = budget.epsilon();
    let m_in = f_in.model_order();
    let mut removal_errors = Vec::new();
    let (keep, z0) = structural_pass(f_in, &mut removal_errors);
    let structural = RkhsFunction::new(*f_in.kernel(), f_in.dictionary().select(&keep), z0.clone())?;
    let finish = |f: RkhsFunction, final_error: f64, errors: Vec<f64>| {
        let report = CompressionReport {
            removed_count: m_in - f.model_order(),
            final_error,
            final_model_order: f.model_order(),
            removal_errors: errors,
        };
        (f, report)
    };
    if keep.is_empty() {
        let (f, r) = finish(structural, 0.0, removal_errors);
        return Ok((f, r, None));
    }
    // A warm start applies only if the structural pass kept its whole prefix.
    let warm = warm.filter(|w| {
        let p = w.model_order();
        p <= keep.len() && keep[..p].iter().enumerate().all(|(i, &k)| i == k)
    });
    let g = match warm {
        Some(w) => gram_extend(f_in.kernel(), structural.dictionary(), &w.gram),
        None => gram(f_in.kernel(), structural.dictionary(), structural.dictionary()),
    };
    let Some(mut pursuit) = Pursuit::new(g, z0, warm) else {
        let (f, r) = finish(structural, 0.0, removal_errors);
        return Ok((f, r, None));
    };
    let n_structural = removal_errors.len();
    let mut blocked = vec![false; keep.len()];
    let mut removed: Vec<usize> = Vec::new();
    while let Some((pos, cand)) = pursuit.best(&blocked) {
        if cand.sqrt() > eps {
            break;
        }
        let atom = pursuit.active[pos];
        if pursuit.remove(pos, cand) {
            removed.push(atom);
            removal_errors.push(cand.sqrt());
        } else {
            blocked[atom] = true;
        }
    }
    if removed.is_empty() {
        let next = pursuit.warm_start();
        let (f, r) = finish(structural, 0.0, removal_errors);
        return Ok((f, r, Some(next)));
    }
    // The greedy errors are bookkeeping; the survivors are checked against
    // the input directly and removals are undone until they pass.
    let w = pursuit.refined_weights();
    let err = pursuit.distance(&pursuit.active, &w);
    if err <= eps {
        let global: Vec<usize> = pursuit.active.iter().map(|&i| keep[i]).collect();
        let f = RkhsFunction::new(*f_in.kernel(), f_in.dictionary().select(&global), w)?;
        let next = pursuit.warm_start();
        let (f, r) = finish(f, err, removal_errors);
        return Ok((f, r, Some(next)));
    }
    let mut restored = Vec::new();
    while let Some(atom) = removed.pop() {
        removal_errors.truncate(n_structural + removed.len());
        restored.push(atom);
        if let Some((survivors, w, next)) = pursuit.restore(&restored) {
            let err = pursuit.distance(&survivors, &w);
            if err <= eps {
                let global: Vec<usize> = survivors.iter().map(|&i| keep[i]).collect();
                let f = RkhsFunction::new(*f_in.kernel(), f_in.dictionary().select(&global), w)?;
                let (f, r) = finish(f, err, removal_errors);
                return Ok((f, r, Some(next)));
            }
        } else {
            let survivors: Vec<usize> = (0..keep.len()).filter(|i| !removed.contains(i)).collect();
            let global: Vec<usize> = survivors.iter().map(|&i| keep[i]).collect();
            let dict = f_in.dictionary().select(&global);
            if let Ok(w) = refit_weights(f_in, &dict) {
                let err = pursuit.distance(&survivors, &w);
                if err <= eps {
                    let f = RkhsFunction::new(*f_in.kernel(), dict, w)?;
                    let (f, r) = finish(f, err, removal_errors);
                    return Ok((f, r, None));
                }
            }
        }
    }
    let (f, r) = finish(structural, 0.0, removal_errors);
    Ok((f, r, None))
}
