//! Multi-seed experiment runs with per-seed artifacts and a summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig};
use crate::colk;
use crate::datagen::{self, split, subsample};
use crate::error::{Error, Result};
use crate::losses::{self, Sample};
use crate::metrics::{write_metrics, Evaluation, MetricsRow};
use crate::polk;
use crate::rkhs::{io::save_model, RkhsFunction};

/// Training and test samples shared by every seed of an experiment.
#[derive(Clone, Debug)]
pub struct DataPool {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl DataPool {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let d = &config.data;
        if let (Some(train), Some(test)) = (&d.train_file, &d.test_file) {
            return Ok(DataPool { train: datagen::load_csv(train)?, test: datagen::load_csv(test)? });
        }
        let spec =
            config.dataset.as_ref().ok_or_else(|| Error::Config("need a [dataset] section or data files".into()))?;
        let (train, test) = split(spec.stream(d.data_seed)?, d.n_total, d.test_fraction, d.data_seed)?;
        Ok(DataPool { train, test })
    }

    /// The training stream of one run: a seeded subset, reshuffled on every pass.
    pub fn training_stream(&self, config: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
        let k = config.data.train_size.unwrap_or(self.train.len());
        let subset = subsample(&self.train, k, seed)?;
        let mut out = Vec::with_capacity(k * config.data.passes);
        for pass in 0..config.data.passes as u64 {
            out.extend(datagen::shuffled(&subset, seed.wrapping_mul(0x9e37_79b9).wrapping_add(pass)));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub test_error: f64,
    pub model_order: usize,
    pub metrics: Vec<MetricsRow>,
    pub model: RkhsFunction,
}

/// Trains one run on `train`, evaluating on `test` every `eval_period` steps.
pub fn train_run(config: &ExperimentConfig, train: Vec<Sample>, test: &[Sample], seed: u64) -> Result<RunOutcome> {
    let eval = Some(Evaluation { period: config.eval_period, test });
    let (model, metrics) = match config.algorithm {
        Algorithm::Polk => {
            let (state, rows) = polk::run_stream(&config.polk_config()?, train, eval)?;
            (state.f, rows)
        }
        Algorithm::Colk => {
            let (state, rows) = colk::run_stream(&config.colk_config()?, train, eval)?;
            (state.f, rows)
        }
    };
    let test_error = if test.is_empty() { f64::NAN } else { losses::test_error(&model, test, &config.loss_model()?)? };
    Ok(RunOutcome { seed, test_error, model_order: model.model_order(), metrics, model })
}

/// Mean and unbiased standard deviation; the deviation is NaN for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub runs: Vec<(u64, f64, usize)>,
    pub test_error: (f64, f64),
    pub model_order: (f64, f64),
    pub files: Vec<PathBuf>,
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_seed{seed}.csv"))
}

pub fn model_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("model_seed{seed}.txt"))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.csv")
}

pub fn runs_path(dir: &Path) -> PathBuf {
    dir.join("runs.csv")
}

fn write_file(
    path: &Path,
    created: &Mutex<Vec<PathBuf>>,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let file = File::create(path)?;
    created.lock().expect("lock poisoned").push(path.to_path_buf());
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Runs every seed (in parallel), writing per-seed metrics and models and a
/// summary. On failure every file written so far is removed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let dir = &config.output_dir;
    let dir_existed = dir.exists();
    fs::create_dir_all(dir)?;
    let created = Mutex::new(Vec::new());
    let result = run_inner(config, dir, &created);
    let files = created.into_inner().expect("lock poisoned");
    match result {
        Ok(mut summary) => {
            summary.files = files;
            Ok(summary)
        }
        Err(e) => {
            for f in &files {
                let _ = fs::remove_file(f);
            }
            if !dir_existed {
                let _ = fs::remove_dir(dir);
            }
            Err(e)
        }
    }
}

fn run_inner(config: &ExperimentConfig, dir: &Path, created: &Mutex<Vec<PathBuf>>) -> Result<ExperimentSummary> {
    let pool = DataPool::load(config)?;
    let outcomes = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let train = pool.training_stream(config, seed)?;
            let run = train_run(config, train, &pool.test, seed)?;
            write_file(&metrics_path(dir, seed), created, |w| write_metrics(&run.metrics, w))?;
            write_file(&model_path(dir, seed), created, |w| crate::rkhs::io::write_model(&run.model, w))?;
            Ok((seed, run.test_error, run.model_order))
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = outcomes.iter().map(|r| r.1).collect();
    let orders: Vec<f64> = outcomes.iter().map(|r| r.2 as f64).collect();
    let summary = ExperimentSummary {
        test_error: mean_std(&errors),
        model_order: mean_std(&orders),
        runs: outcomes,
        files: Vec::new(),
    };
    write_file(&summary_path(dir), created, |w| write_summary(&summary, w))?;
    write_file(&runs_path(dir), created, |w| write_runs(&summary, w))?;
    Ok(summary)
}

pub fn write_summary(summary: &ExperimentSummary, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "mean", "std", "runs"])?;
    let n = summary.runs.len().to_string();
    for (name, (m, s)) in [("test_error", summary.test_error), ("model_order", summary.model_order)] {
        w.write_record([name.to_string(), m.to_string(), s.to_string(), n.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Final test error and model order of every seed.
pub fn write_runs(summary: &ExperimentSummary, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "test_error", "model_order"])?;
    for (seed, err, order) in &summary.runs {
        w.write_record([seed.to_string(), err.to_string(), order.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Saves a model trained outside [`run_experiment`].
pub fn save_run_model(run: &RunOutcome, path: &Path) -> Result<()> {
    save_model(&run.model, path)
}
