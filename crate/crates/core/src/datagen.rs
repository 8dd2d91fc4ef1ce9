//! Seeded synthetic data: a multi-class Gaussian mixture and a 1-D
//! regression target with occasional heavy noise.
//!
//! Every sample is a pure function of `(spec, seed, index)`: sample `i` is
//! drawn from ChaCha8 seeded with `seed` on stream `i`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureSpec {
    pub classes: usize,
    pub modes_per_class: usize,
    /// Mode centers grouped by class: class `c` owns
    /// `centers[c * modes_per_class .. (c + 1) * modes_per_class]`.
    pub centers: Vec<Vec<f64>>,
    /// Per-coordinate standard deviation around each center.
    pub scale: f64,
    pub priors: Vec<f64>,
}

impl Default for MixtureSpec {
    /// Five classes with three modes each on a 5 x 3 grid over `[-3, 3]^2`.
    /// Grid cell `(i, j)` belongs to class `(i + 2j) mod 5`, so every class
    /// has one mode per grid row and no two neighbours share a class.
    fn default() -> Self {
        let (classes, per) = (5usize, 3usize);
        let mut centers = vec![Vec::new(); classes * per];
        let mut filled = vec![0usize; classes];
        for j in 0..per {
            for i in 0..classes {
                let c = (i + 2 * j) % classes;
                let x = -3.0 + 6.0 * i as f64 / (classes - 1) as f64;
                let y = -3.0 + 6.0 * j as f64 / (per - 1) as f64;
                centers[c * per + filled[c]] = vec![x, y];
                filled[c] += 1;
            }
        }
        MixtureSpec { classes, modes_per_class: per, centers, scale: 0.2, priors: vec![1.0 / classes as f64; classes] }
    }
}

impl MixtureSpec {
    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.modes_per_class == 0 {
            return Err(Error::Config("mixture needs >= 2 classes and >= 1 mode per class".into()));
        }
        if self.centers.len() != self.classes * self.modes_per_class {
            return Err(Error::Config(format!(
                "mixture has {} centers, expected {} classes x {} modes",
                self.centers.len(),
                self.classes,
                self.modes_per_class
            )));
        }
        let p = self.dim();
        if p == 0 || self.centers.iter().any(|c| c.len() != p || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("mixture centers must be finite vectors of one dimension".into()));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::Config("mixture scale must be non-negative".into()));
        }
        if self.priors.len() != self.classes || self.priors.iter().any(|&q| !(q >= 0.0)) {
            return Err(Error::Config("mixture priors must be one non-negative weight per class".into()));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("mixture priors sum to {total}, not 1")));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Sample {
        let u: f64 = rng.random();
        let mut class = self.classes - 1;
        let mut acc = 0.0;
        for (c, &q) in self.priors.iter().enumerate() {
            acc += q;
            if u < acc && q > 0.0 {
                class = c;
                break;
            }
        }
        let mode = class * self.modes_per_class + rng.random_range(0..self.modes_per_class);
        let x = self.centers[mode]
            .iter()
            .map(|&m| {
                let z: f64 = rng.sample(StandardNormal);
                m + self.scale * z
            })
            .collect();
        Sample::new(x, class as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionOutlierSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub noise_std: f64,
    pub outlier_fraction: f64,
    /// Noise standard deviation multiplier for outliers.
    pub outlier_scale: f64,
}

impl Default for RegressionOutlierSpec {
    fn default() -> Self {
        RegressionOutlierSpec { x_lo: -1.0, x_hi: 1.0, noise_std: 0.3, outlier_fraction: 0.05, outlier_scale: 10.0 }
    }
}

/// Noise-free regression target `2x + 3 sin(6x)`.
pub fn regression_target(x: f64) -> f64 {
    2.0 * x + 3.0 * (6.0 * x).sin()
}

impl RegressionOutlierSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_lo.is_finite() && self.x_hi.is_finite() && self.x_lo <= self.x_hi) {
            return Err(Error::Config("regression input range must satisfy x_lo <= x_hi".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config("outlier fraction must lie in [0, 1)".into()));
        }
        if !(self.outlier_scale > 0.0 && self.outlier_scale.is_finite()) {
            return Err(Error::Config("outlier scale must be positive".into()));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Sample {
        let u: f64 = rng.random();
        let x = self.x_lo + (self.x_hi - self.x_lo) * u;
        let outlier = rng.random::<f64>() < self.outlier_fraction;
        let z: f64 = rng.sample(StandardNormal);
        let std = if outlier { self.noise_std * self.outlier_scale } else { self.noise_std };
        Sample::new(vec![x], regression_target(x) + std * z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    GaussianMixtures(MixtureSpec),
    RegressionOutliers(RegressionOutlierSpec),
}

impl DatasetSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian-mixtures" => Ok(DatasetSpec::GaussianMixtures(MixtureSpec::default())),
            "regression-outliers" => Ok(DatasetSpec::RegressionOutliers(RegressionOutlierSpec::default())),
            other => Err(Error::usage(format!(
                "unknown dataset {other:?} (expected gaussian-mixtures or regression-outliers)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::GaussianMixtures(s) => s.validate(),
            DatasetSpec::RegressionOutliers(s) => s.validate(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetSpec::GaussianMixtures(s) => s.dim(),
            DatasetSpec::RegressionOutliers(_) => 1,
        }
    }

    pub fn stream(&self, seed: u64) -> Result<SampleStream> {
        self.validate()?;
        Ok(SampleStream { spec: self.clone(), seed, next: 0 })
    }
}

/// Infinite, seekable sample stream.
#[derive(Clone, Debug)]
pub struct SampleStream {
    spec: DatasetSpec,
    seed: u64,
    next: u64,
}

impl SampleStream {
    pub fn sample_at(&self, index: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        match &self.spec {
            DatasetSpec::GaussianMixtures(s) => s.draw(&mut rng),
            DatasetSpec::RegressionOutliers(s) => s.draw(&mut rng),
        }
    }
}

impl Iterator for SampleStream {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        let s = self.sample_at(self.next);
        self.next += 1;
        Some(s)
    }
}

pub fn gaussian_mixture_stream(spec: &MixtureSpec, seed: u64) -> Result<SampleStream> {
    DatasetSpec::GaussianMixtures(spec.clone()).stream(seed)
}

pub fn regression_outlier_stream(spec: &RegressionOutlierSpec, seed: u64) -> Result<SampleStream> {
    DatasetSpec::RegressionOutliers(spec.clone()).stream(seed)
}

/// Takes the first `n_total` samples and splits them by a seeded shuffle.
/// The test set gets `round(n_total * test_fraction)` samples, clamped so
/// neither side is empty.
pub fn split(
    stream: impl IntoIterator<Item = Sample>,
    n_total: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if n_total < 2 {
        return Err(Error::usage(format!("split needs at least 2 samples, got {n_total}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::usage(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let data: Vec<Sample> = stream.into_iter().take(n_total).collect();
    if data.len() < n_total {
        return Err(Error::usage(format!("stream ended after {} of {n_total} samples", data.len())));
    }
    let n_test = ((n_total as f64 * test_fraction).round() as usize).clamp(1, n_total - 1);
    let mut order: Vec<usize> = (0..n_total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    Ok((pick(train_idx), pick(test_idx)))
}

/// Seeded random subset of `k` samples, in their original order.
pub fn subsample(data: &[Sample], k: usize, seed: u64) -> Result<Vec<Sample>> {
    if k > data.len() {
        return Err(Error::usage(format!("cannot draw {k} of {} samples", data.len())));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| data[i].clone()).collect())
}

/// Seeded permutation of `data`.
pub fn shuffled(data: &[Sample], seed: u64) -> Vec<Sample> {
    let mut out = data.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Writes `x1,...,xp,y` rows using shortest round-trip formatting.
pub fn write_csv(samples: &[Sample], out: impl Write) -> Result<()> {
    let p = samples.first().map_or(0, |s| s.x.len());
    if samples.iter().any(|s| s.x.len() != p) {
        return Err(Error::usage("samples have mixed dimensions"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for s in samples {
        w.write_record(s.x.iter().chain(std::iter::once(&s.y)).map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let p = header.len().saturating_sub(1);
    let expected: Vec<String> = (1..=p).map(|i| format!("x{i}")).chain(["y".to_owned()]).collect();
    if p == 0 || header != expected {
        return Err(Error::parse("data header", format!("expected x1,...,xp,y, got {}", header.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(format!("data row {}", i + 1), e.to_string()))?;
        let (x, y) = vals.split_at(p);
        out.push(Sample::new(x.to_vec(), y[0]));
    }
    Ok(out)
}

pub fn save_csv(samples: &[Sample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(samples, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Vec<Sample>> {
    read_csv(BufReader::new(File::open(path)?))
}
