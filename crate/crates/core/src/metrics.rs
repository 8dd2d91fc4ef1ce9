//! Training metrics rows and their CSV form.

use std::collections::VecDeque;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::losses::Sample;

pub const TRAIN_METRICS_HEADER: [&str; 5] = ["t", "train_loss", "test_error", "model_order", "elapsed_ms"];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    /// Running mean of the last [`LOSS_WINDOW`] instantaneous losses.
    pub train_loss: f64,
    pub test_error: f64,
    pub model_order: usize,
    pub elapsed_ms: f64,
}

pub const LOSS_WINDOW: usize = 100;

/// Periodic evaluation during a training run.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation<'a> {
    pub period: usize,
    pub test: &'a [Sample],
}

#[derive(Clone, Debug, Default)]
pub(crate) struct LossWindow {
    values: VecDeque<f64>,
}

impl LossWindow {
    pub(crate) fn push(&mut self, v: f64) {
        if self.values.len() == LOSS_WINDOW {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    pub(crate) fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

pub fn write_metrics(rows: &[MetricsRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAIN_METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.train_loss.to_string(),
            r.test_error.to_string(),
            r.model_order.to_string(),
            format!("{:.3}", r.elapsed_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(input: impl Read) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != TRAIN_METRICS_HEADER {
        return Err(Error::parse("metrics header", format!("{header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let f = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|e| Error::parse(format!("metrics row {}", i + 1), format!("{e}")))
        };
        let u = |k: usize| -> Result<usize> {
            rec[k].parse().map_err(|e| Error::parse(format!("metrics row {}", i + 1), format!("{e}")))
        };
        rows.push(MetricsRow { t: u(0)?, train_loss: f(1)?, test_error: f(2)?, model_order: u(3)?, elapsed_ms: f(4)? });
    }
    Ok(rows)
}
