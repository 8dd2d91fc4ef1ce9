//! Convex losses `l(f(x), y)` and their derivatives with respect to the prediction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rkhs::RkhsFunction;

/// One observation. For classification `y` holds the class index.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Sample { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossModel {
    /// `(f - y)^2`, single output.
    Square,
    /// Crammer–Singer multi-class hinge.
    Hinge { classes: usize },
    /// Softmax cross-entropy.
    Logistic { classes: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Square,
    Hinge,
    Logistic,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(LossKind::Square),
            "hinge" => Ok(LossKind::Hinge),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::usage(format!("unknown loss {other:?} (expected square, hinge or logistic)"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Square => "square",
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
        })
    }
}

impl LossModel {
    pub fn from_kind(kind: LossKind, classes: usize) -> Result<Self> {
        let model = match kind {
            LossKind::Square => LossModel::Square,
            LossKind::Hinge => LossModel::Hinge { classes },
            LossKind::Logistic => LossModel::Logistic { classes },
        };
        model.validate()?;
        Ok(model)
    }

    pub fn kind(&self) -> LossKind {
        match self {
            LossModel::Square => LossKind::Square,
            LossModel::Hinge { .. } => LossKind::Hinge,
            LossModel::Logistic { .. } => LossKind::Logistic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossModel::Square => Ok(()),
            LossModel::Hinge { classes } | LossModel::Logistic { classes } if classes >= 2 => Ok(()),
            _ => Err(Error::usage("classification losses need at least 2 classes")),
        }
    }

    /// Number of function outputs `C`.
    pub fn outputs(&self) -> usize {
        match *self {
            LossModel::Square => 1,
            LossModel::Hinge { classes } | LossModel::Logistic { classes } => classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, LossModel::Square)
    }

    fn class_index(&self, y: f64) -> Result<usize> {
        let c = self.outputs();
        if y.fract() != 0.0 || y < 0.0 || y >= c as f64 {
            return Err(Error::usage(format!("label {y} is not a class index in [0, {c})")));
        }
        Ok(y as usize)
    }

    fn check(&self, prediction: &[f64]) -> Result<()> {
        check_dim(self.outputs(), prediction.len())
    }

    pub fn value(&self, prediction: &[f64], y: f64) -> Result<f64> {
        self.check(prediction)?;
        Ok(match *self {
            LossModel::Square => {
                let r = prediction[0] - y;
                r * r
            }
            LossModel::Hinge { .. } => {
                let t = self.class_index(y)?;
                let (_, best) = competitor(prediction, t);
                (1.0 + best - prediction[t]).max(0.0)
            }
            LossModel::Logistic { .. } => {
                let t = self.class_index(y)?;
                log_sum_exp(prediction) - prediction[t]
            }
        })
    }

    /// Writes `dl/df` into `out`. At the hinge kink the zero subgradient is used.
    pub fn derivative_into(&self, prediction: &[f64], y: f64, out: &mut [f64]) -> Result<()> {
        self.check(prediction)?;
        check_dim(self.outputs(), out.len())?;
        match *self {
            LossModel::Square => out[0] = 2.0 * (prediction[0] - y),
            LossModel::Hinge { .. } => {
                let t = self.class_index(y)?;
                out.iter_mut().for_each(|o| *o = 0.0);
                let (c_star, best) = competitor(prediction, t);
                if 1.0 + best - prediction[t] > 0.0 {
                    out[c_star] = 1.0;
                    out[t] = -1.0;
                }
            }
            LossModel::Logistic { .. } => {
                let t = self.class_index(y)?;
                let lse = log_sum_exp(prediction);
                for (o, p) in out.iter_mut().zip(prediction) {
                    *o = (p - lse).exp();
                }
                out[t] -= 1.0;
            }
        }
        Ok(())
    }

    pub fn derivative(&self, prediction: &[f64], y: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.outputs()];
        self.derivative_into(prediction, y, &mut out)?;
        Ok(out)
    }

    /// Misclassification indicator (argmax, smallest index on ties) or squared error.
    pub fn sample_error(&self, prediction: &[f64], y: f64) -> Result<f64> {
        self.check(prediction)?;
        Ok(match self {
            LossModel::Square => (prediction[0] - y).powi(2),
            _ => {
                let t = self.class_index(y)?;
                if argmax(prediction) == t {
                    0.0
                } else {
                    1.0
                }
            }
        })
    }
}

/// Largest score among classes other than `target`; smallest index on ties.
fn competitor(prediction: &[f64], target: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (c, &p) in prediction.iter().enumerate() {
        if c != target && (best.0 == usize::MAX || p > best.1) {
            best = (c, p);
        }
    }
    best
}

pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn loss_value(model: &LossModel, prediction: &[f64], y: f64) -> Result<f64> {
    model.value(prediction, y)
}

pub fn loss_derivative(model: &LossModel, prediction: &[f64], y: f64) -> Result<Vec<f64>> {
    model.derivative(prediction, y)
}

/// Per-sample losses of `f` over `data`.
pub fn losses(f: &RkhsFunction, data: &[Sample], model: &LossModel) -> Result<Vec<f64>> {
    check_dim(model.outputs(), f.outputs())?;
    let mut pred = vec![0.0; f.outputs()];
    data.iter()
        .map(|s| {
            check_dim(f.dim(), s.x.len())?;
            f.evaluate_into(&s.x, &mut pred);
            model.value(&pred, s.y)
        })
        .collect()
}

/// Mean loss over `data` plus `(lambda / 2) |f|_H^2`.
pub fn regularized_risk(f: &RkhsFunction, data: &[Sample], model: &LossModel, lambda: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::usage("regularized risk needs at least one sample"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::usage("lambda must be non-negative"));
    }
    let l = losses(f, data, model)?;
    let mean = l.iter().sum::<f64>() / l.len() as f64;
    let reg = if lambda == 0.0 { 0.0 } else { 0.5 * lambda * f.squared_norm() };
    Ok(mean + reg)
}

/// Misclassification rate for classifiers, mean squared error for regression.
pub fn test_error(f: &RkhsFunction, data: &[Sample], model: &LossModel) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::usage("test error needs at least one sample"));
    }
    check_dim(model.outputs(), f.outputs())?;
    let mut pred = vec![0.0; f.outputs()];
    let mut total = 0.0;
    for s in data {
        check_dim(f.dim(), s.x.len())?;
        f.evaluate_into(&s.x, &mut pred);
        total += model.sample_error(&pred, s.y)?;
    }
    Ok(total / data.len() as f64)
}
