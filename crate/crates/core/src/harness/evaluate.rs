use std::fmt;

use crate::error::{Error, Result};
use crate::losses::{self, LossModel, Sample};
use crate::rkhs::{KernelSpec, RkhsFunction};

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub samples: usize,
    /// Misclassification rate for classifiers, mean squared error otherwise.
    pub test_error: f64,
    pub model_order: usize,
    pub hilbert_norm: f64,
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples {}", self.samples)?;
        writeln!(f, "test_error {}", self.test_error)?;
        writeln!(f, "model_order {}", self.model_order)?;
        write!(f, "hilbert_norm {}", self.hilbert_norm)
    }
}

/// Scores `model` on `data`. With `expected_kernel` set, a model built on a
/// different kernel is a usage error.
pub fn evaluate_model(
    model: &RkhsFunction,
    data: &[Sample],
    loss: &LossModel,
    expected_kernel: Option<&KernelSpec>,
) -> Result<EvaluationReport> {
    if let Some(k) = expected_kernel {
        if k != model.kernel() {
            return Err(Error::KernelMismatch(model.kernel().to_string(), k.to_string()));
        }
    }
    if data.is_empty() {
        return Err(Error::usage("evaluation data is empty"));
    }
    if loss.outputs() != model.outputs() {
        return Err(Error::usage(format!(
            "model has {} outputs but the loss expects {}",
            model.outputs(),
            loss.outputs()
        )));
    }
    if data[0].x.len() != model.dim() {
        return Err(Error::usage(format!(
            "model expects {}-dimensional inputs, data has {}",
            model.dim(),
            data[0].x.len()
        )));
    }
    Ok(EvaluationReport {
        samples: data.len(),
        test_error: losses::test_error(model, data, loss)?,
        model_order: model.model_order(),
        hilbert_norm: model.hilbert_norm(),
    })
}
