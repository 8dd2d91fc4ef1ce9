//! Parsimonious online learning with kernels: a functional stochastic
//! gradient step followed by KOMP compression, every sample.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::komp::{komp_compress_warm, CompressionBudget, CompressionReport, WarmStart};
use crate::losses::{self, LossModel, Sample};
use crate::metrics::{Evaluation, LossWindow, MetricsRow};
use crate::rkhs::{KernelSpec, RkhsFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// `eta_t = eta`, `eps = K * eta^q` (q = 3/2 by default).
    Constant,
    /// `eta_t = eta / (1 + t)`, `eps_t = eta_t^2`.
    Diminishing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolkConfig {
    pub eta: f64,
    pub lambda: f64,
    pub schedule: Schedule,
    /// Parsimony constant `K` of the constant-step budget.
    pub parsimony: f64,
    /// Exponent `q` in `eps = K * eta^q` for the constant schedule.
    pub budget_exponent: f64,
    pub loss: LossModel,
    pub kernel: KernelSpec,
}

pub const DEFAULT_BUDGET_EXPONENT: f64 = 1.5;

impl PolkConfig {
    pub fn new(eta: f64, lambda: f64, parsimony: f64, loss: LossModel, kernel: KernelSpec) -> Self {
        PolkConfig {
            eta,
            lambda,
            schedule: Schedule::Constant,
            parsimony,
            budget_exponent: DEFAULT_BUDGET_EXPONENT,
            loss,
            kernel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.loss.validate()?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("step size eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.eta * self.lambda >= 1.0 {
            return Err(Error::Config(format!(
                "Regularization Condition violated: eta * lambda = {} must be < 1",
                self.eta * self.lambda
            )));
        }
        if !(self.parsimony >= 0.0 && self.parsimony.is_finite()) {
            return Err(Error::Config("parsimony constant must be non-negative".into()));
        }
        if !(self.budget_exponent > 0.0) {
            return Err(Error::Config("budget exponent must be positive".into()));
        }
        Ok(())
    }

    /// Step size for the step that moves `f_t` to `f_{t+1}`.
    pub fn step_size(&self, t: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.eta,
            Schedule::Diminishing => self.eta / (1.0 + t as f64),
        }
    }

    pub fn budget(&self, t: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.parsimony * self.eta.powf(self.budget_exponent),
            Schedule::Diminishing => self.step_size(t).powi(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSummary {
    pub t: usize,
    pub budget: f64,
    pub removed: usize,
    pub final_error: f64,
    pub model_order: usize,
}

#[derive(Clone, Debug)]
pub struct PolkState {
    pub f: RkhsFunction,
    pub t: usize,
    pub history: Vec<StepSummary>,
    warm: Option<WarmStart>,
}

impl PolkState {
    pub fn new(config: &PolkConfig, dim: usize) -> Self {
        PolkState {
            f: RkhsFunction::zero(config.kernel, dim, config.loss.outputs()),
            t: 0,
            history: Vec::new(),
            warm: None,
        }
    }

    pub fn model_order(&self) -> usize {
        self.f.model_order()
    }

    /// Instantaneous loss of the current function on `sample`.
    pub fn loss_on(&self, config: &PolkConfig, sample: &Sample) -> Result<f64> {
        check_dim(self.f.dim(), sample.x.len())?;
        let pred = self.f.evaluate(&sample.x)?;
        config.loss.value(&pred, sample.y)
    }

    /// Polk step: gradient step, then compression to the scheduled budget.
    pub fn step(&mut self, config: &PolkConfig, sample: &Sample) -> Result<CompressionReport> {
        let eta = config.step_size(self.t);
        let budget = config.budget(self.t);
        let dense = fsgd_step(&self.f, &config.loss, config.lambda, sample, eta)?;
        if dense.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical(format!("non-finite weights at step {}", self.t + 1)));
        }
        let (f, report, warm) = komp_compress_warm(&dense, CompressionBudget::new(budget)?, self.warm.as_ref())?;
        self.warm = warm;
        self.history.push(StepSummary {
            t: self.t + 1,
            budget,
            removed: report.removed_count,
            final_error: report.final_error,
            model_order: report.final_model_order,
        });
        self.f = f;
        self.t += 1;
        Ok(report)
    }
}

/// Unprojected functional gradient step:
/// `(1 - eta lambda) f - eta l'(f(x), y) k(x, .)`, always appending `x`.
pub fn fsgd_step(f: &RkhsFunction, loss: &LossModel, lambda: f64, sample: &Sample, eta: f64) -> Result<RkhsFunction> {
    check_dim(f.dim(), sample.x.len())?;
    let pred = f.evaluate(&sample.x)?;
    let grad = loss.derivative(&pred, sample.y)?;
    let mut next = f.clone();
    next.scale(1.0 - eta * lambda);
    let row: Vec<f64> = grad.iter().map(|g| -eta * g).collect();
    next.push_atom(&sample.x, &row)?;
    Ok(next)
}

pub fn polk_step(state: &mut PolkState, config: &PolkConfig, sample: &Sample) -> Result<CompressionReport> {
    state.step(config, sample)
}

/// Runs POLK over a stream, recording metrics every `eval.period` steps and
/// after the last step.
pub fn run_stream<I>(
    config: &PolkConfig,
    stream: I,
    eval: Option<Evaluation<'_>>,
) -> Result<(PolkState, Vec<MetricsRow>)>
where
    I: IntoIterator<Item = Sample>,
{
    config.validate()?;
    let mut it = stream.into_iter().peekable();
    let dim = it.peek().map(|s| s.x.len()).ok_or_else(|| Error::usage("training stream is empty"))?;
    let mut state = PolkState::new(config, dim);
    let start = Instant::now();
    let mut window = LossWindow::default();
    let mut rows = Vec::new();
    let mut recorded = 0;
    for sample in it {
        window.push(state.loss_on(config, &sample)?);
        state.step(config, &sample)?;
        if let Some(ev) = eval {
            if ev.period > 0 && state.t.is_multiple_of(ev.period) {
                rows.push(metrics_row(&state.f, &config.loss, state.t, &window, ev, start)?);
                recorded = state.t;
            }
        }
    }
    if let Some(ev) = eval {
        if recorded != state.t {
            rows.push(metrics_row(&state.f, &config.loss, state.t, &window, ev, start)?);
        }
    }
    Ok((state, rows))
}

pub(crate) fn metrics_row(
    f: &RkhsFunction,
    loss: &LossModel,
    t: usize,
    window: &LossWindow,
    eval: Evaluation<'_>,
    start: Instant,
) -> Result<MetricsRow> {
    let test_error = if eval.test.is_empty() { f64::NAN } else { losses::test_error(f, eval.test, loss)? };
    Ok(MetricsRow {
        t,
        train_loss: window.mean(),
        test_error,
        model_order: f.model_order(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
