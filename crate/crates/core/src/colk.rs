//! Compositional online learning with kernels: risk-aware learning that
//! trades mean loss against central moments of the loss.
//!
//! The mean loss is tracked by a scalar `g`. Each step draws two samples:
//! `xi` refreshes `g`, `theta` drives the gradient, and both are appended to
//! the dictionary before compression.

use std::time::Instant;

use crate::error::{check_dim, Error, Result};
use crate::komp::{komp_compress_warm, CompressionBudget, CompressionReport, WarmStart};
use crate::losses::{self, LossModel, Sample};
use crate::metrics::{Evaluation, LossWindow, MetricsRow};
use crate::polk::metrics_row;
use crate::rkhs::{KernelSpec, RkhsFunction};

#[derive(Clone, Debug, PartialEq)]
pub struct ColkConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub mu_risk: f64,
    /// Highest central moment `P` (at least 2).
    pub max_moment: u32,
    /// Use `max(l - g, 0)` inside the moments.
    pub semideviation: bool,
    /// Parsimony constant `K`, budget `eps = K * alpha^2`.
    pub parsimony: f64,
    /// Optional cap on `mu * s`, the risk multiplier of a single step.
    pub risk_clip: Option<f64>,
    pub loss: LossModel,
    pub kernel: KernelSpec,
}

impl ColkConfig {
    pub fn new(
        alpha: f64,
        beta: f64,
        lambda: f64,
        mu_risk: f64,
        parsimony: f64,
        loss: LossModel,
        kernel: KernelSpec,
    ) -> Self {
        ColkConfig {
            alpha,
            beta,
            lambda,
            mu_risk,
            max_moment: 2,
            semideviation: false,
            parsimony,
            risk_clip: None,
            loss,
            kernel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.loss.validate()?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.alpha * self.lambda >= 1.0 {
            return Err(Error::Config(format!(
                "Regularization Condition violated: alpha * lambda = {} must be < 1",
                self.alpha * self.lambda
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.mu_risk >= 0.0 && self.mu_risk.is_finite()) {
            return Err(Error::Config("mu_risk must be non-negative".into()));
        }
        if self.max_moment < 2 {
            return Err(Error::Config("max_moment must be at least 2".into()));
        }
        if !(self.parsimony >= 0.0 && self.parsimony.is_finite()) {
            return Err(Error::Config("parsimony constant must be non-negative".into()));
        }
        if let Some(c) = self.risk_clip {
            if !(c > 0.0) {
                return Err(Error::Config("risk_clip must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn budget(&self) -> f64 {
        self.parsimony * self.alpha * self.alpha
    }

    fn psi(&self, u: f64) -> f64 {
        if self.semideviation {
            u.max(0.0)
        } else {
            u
        }
    }
}

/// `sum_{p=2}^{P} mean_i psi(l_i - g)^p`.
pub fn dispersion_value(losses: &[f64], g_ref: f64, config: &ColkConfig) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::usage("dispersion needs at least one loss"));
    }
    let n = losses.len() as f64;
    let mut total = 0.0;
    for l in losses {
        let u = config.psi(l - g_ref);
        let mut pow = u;
        for _ in 2..=config.max_moment {
            pow *= u;
            total += pow;
        }
    }
    Ok(total / n)
}

pub fn aux_update(g: f64, loss: f64, beta: f64) -> f64 {
    (1.0 - beta) * g + beta * loss
}

/// `s = sum_{p=2}^{P} p psi(u)^{p-1}`, the derivative of the moment sum at `u`.
pub fn moment_multiplier(u: f64, config: &ColkConfig) -> f64 {
    let u = config.psi(u);
    let mut s = 0.0;
    let mut pow = 1.0;
    for p in 2..=config.max_moment {
        pow *= u;
        s += p as f64 * pow;
    }
    s
}

/// Loss-part of the quasi-gradient: the direction is
/// `theta_coef . k(x_theta, .) + xi_coef . k(x_xi, .)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiGradient {
    pub theta_coef: Vec<f64>,
    pub xi_coef: Vec<f64>,
    /// Loss of `f` at the theta sample.
    pub loss_theta: f64,
}

/// Quasi-gradient at a given tracker value `g`.
pub fn quasi_gradient(
    f: &RkhsFunction,
    g: f64,
    theta: &Sample,
    xi: &Sample,
    config: &ColkConfig,
) -> Result<QuasiGradient> {
    let pred_t = f.evaluate(&theta.x)?;
    let pred_x = f.evaluate(&xi.x)?;
    let loss_theta = config.loss.value(&pred_t, theta.y)?;
    let d_theta = config.loss.derivative(&pred_t, theta.y)?;
    let d_xi = config.loss.derivative(&pred_x, xi.y)?;
    let mut ms = config.mu_risk * moment_multiplier(loss_theta - g, config);
    if let Some(c) = config.risk_clip {
        ms = ms.clamp(-c, c);
    }
    Ok(QuasiGradient {
        theta_coef: d_theta.iter().map(|d| (1.0 + ms) * d).collect(),
        xi_coef: d_xi.iter().map(|d| -(ms * d)).collect(),
        loss_theta,
    })
}

#[derive(Clone, Debug)]
pub struct ColkState {
    pub f: RkhsFunction,
    pub g: f64,
    pub t: usize,
    warm: Option<WarmStart>,
}

impl ColkState {
    pub fn new(config: &ColkConfig, dim: usize) -> Self {
        ColkState { f: RkhsFunction::zero(config.kernel, dim, config.loss.outputs()), g: 0.0, t: 0, warm: None }
    }

    pub fn model_order(&self) -> usize {
        self.f.model_order()
    }
}

/// Result of one step, for monitoring.
#[derive(Clone, Debug)]
pub struct ColkStep {
    pub loss_theta: f64,
    pub report: CompressionReport,
}

/// One quasi-gradient step: update `g` from `xi`, append `[xi, theta]`,
/// shrink, compress with `eps = K alpha^2`.
pub fn sqg_step(state: &mut ColkState, theta: &Sample, xi: &Sample, config: &ColkConfig) -> Result<ColkStep> {
    check_dim(state.f.dim(), theta.x.len())?;
    check_dim(state.f.dim(), xi.x.len())?;
    let pred_x = state.f.evaluate(&xi.x)?;
    let g_next = aux_update(state.g, config.loss.value(&pred_x, xi.y)?, config.beta);
    if !g_next.is_finite() {
        return Err(Error::Numerical(format!("loss tracker diverged at step {}", state.t + 1)));
    }
    let q = quasi_gradient(&state.f, g_next, theta, xi, config)?;
    let a = config.alpha;
    let mut dense = state.f.clone();
    dense.scale(1.0 - a * config.lambda);
    let xi_row: Vec<f64> = q.xi_coef.iter().map(|c| -a * c).collect();
    let theta_row: Vec<f64> = q.theta_coef.iter().map(|c| -a * c).collect();
    dense.push_atom(&xi.x, &xi_row)?;
    dense.push_atom(&theta.x, &theta_row)?;
    if dense.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical(format!("non-finite weights at step {}", state.t + 1)));
    }
    let (f, report, warm) = komp_compress_warm(&dense, CompressionBudget::new(config.budget())?, state.warm.as_ref())?;
    state.f = f;
    state.warm = warm;
    state.g = g_next;
    state.t += 1;
    Ok(ColkStep { loss_theta: q.loss_theta, report })
}

/// Mean loss plus `mu` times the moment sum around the mean, plus `(lambda/2)|f|^2`.
pub fn risk_objective(f: &RkhsFunction, data: &[Sample], config: &ColkConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::usage("risk objective needs at least one sample"));
    }
    let l = losses::losses(f, data, &config.loss)?;
    let mean = l.iter().sum::<f64>() / l.len() as f64;
    let disp = if config.mu_risk == 0.0 { 0.0 } else { config.mu_risk * dispersion_value(&l, mean, config)? };
    Ok(mean + disp + 0.5 * config.lambda * f.squared_norm())
}

/// Runs COLK over a stream, consuming `theta` then `xi` for every step.
/// A trailing unpaired sample is ignored.
pub fn run_stream<I>(
    config: &ColkConfig,
    stream: I,
    eval: Option<Evaluation<'_>>,
) -> Result<(ColkState, Vec<MetricsRow>)>
where
    I: IntoIterator<Item = Sample>,
{
    config.validate()?;
    let mut it = stream.into_iter().peekable();
    let dim = it.peek().map(|s| s.x.len()).ok_or_else(|| Error::usage("training stream is empty"))?;
    let mut state = ColkState::new(config, dim);
    let start = Instant::now();
    let mut window = LossWindow::default();
    let mut rows = Vec::new();
    let mut recorded = 0;
    while let (Some(theta), Some(xi)) = (it.next(), it.next()) {
        let step = sqg_step(&mut state, &theta, &xi, config)?;
        window.push(step.loss_theta);
        if let Some(ev) = eval {
            if ev.period > 0 && state.t.is_multiple_of(ev.period) {
                rows.push(metrics_row(&state.f, &config.loss, state.t, &window, ev, start)?);
                recorded = state.t;
            }
        }
    }
    if state.t == 0 {
        return Err(Error::usage("COLK needs at least two samples"));
    }
    if let Some(ev) = eval {
        if recorded != state.t {
            rows.push(metrics_row(&state.f, &config.loss, state.t, &window, ev, start)?);
        }
    }
    Ok((state, rows))
}
