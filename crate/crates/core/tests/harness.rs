use std::fs;
use std::path::Path;

use parsikern::datagen::{save_csv, DatasetSpec};
use parsikern::harness::experiment::{metrics_path, model_path, runs_path, summary_path, train_run, DataPool};
use parsikern::harness::{evaluate_model, run_experiment, ExperimentConfig};
use parsikern::rkhs::io::load_model;
use parsikern::{Error, KernelSpec, LossModel, RkhsFunction, Sample};

fn config(dir: &Path) -> ExperimentConfig {
    let text = format!(
        r#"
algorithm = "polk"
loss = "hinge"
eval_period = 50
seeds = [0, 1]
output_dir = {dir:?}

[kernel]
family = "gaussian"
bandwidth = 0.6

[polk]
eta = 0.5
lambda = 0.05
parsimony = 0.1

[data]
n_total = 250
test_fraction = 0.2
data_seed = 3

[dataset]
kind = "gaussian-mixtures"
"#
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn experiment_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = config(&out);
    let summary = run_experiment(&cfg).unwrap();
    for seed in [0, 1] {
        let metrics = read_rows(&metrics_path(&out, seed));
        assert_eq!(metrics.len(), 4);
        assert_eq!(metrics.last().unwrap()[0], "200");
        let model = load_model(model_path(&out, seed)).unwrap();
        assert_eq!(model.kernel(), &cfg.kernel);
        let run = summary.runs.iter().find(|r| r.0 == seed).unwrap();
        assert_eq!(run.2, model.model_order());
    }
    let rows = read_rows(&summary_path(&out));
    let errors: Vec<f64> = summary.runs.iter().map(|r| r.1).collect();
    let mean = (errors[0] + errors[1]) / 2.0;
    let std = (errors[0] - errors[1]).abs() / 2f64.sqrt();
    assert_eq!(rows[0][0], "test_error");
    assert!((rows[0][1].parse::<f64>().unwrap() - mean).abs() < 1e-15);
    assert!((rows[0][2].parse::<f64>().unwrap() - std).abs() < 1e-15);
    assert_eq!(rows[0][3], "2");
    assert_eq!(read_rows(&runs_path(&out)).len(), 2);
    assert_eq!(summary.files.len(), 6);
}

#[test]
fn reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_experiment(&config(&a)).unwrap();
    run_experiment(&config(&b)).unwrap();
    for name in ["model_seed0.txt", "model_seed1.txt", "summary.csv", "runs.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let strip = |p: &Path| -> Vec<Vec<String>> {
        read_rows(p)
            .into_iter()
            .map(|mut r| {
                r.pop();
                r
            })
            .collect()
    };
    assert_eq!(strip(&a.join("metrics_seed0.csv")), strip(&b.join("metrics_seed0.csv")));
}

#[test]
fn zero_model_predicts_the_first_class() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let pool = DataPool::load(&cfg).unwrap();
    let zero = RkhsFunction::zero(cfg.kernel, 2, 5);
    let report = evaluate_model(&zero, &pool.test, &LossModel::Hinge { classes: 5 }, Some(&cfg.kernel)).unwrap();
    let oracle = pool.test.iter().filter(|s| s.y != 0.0).count() as f64 / pool.test.len() as f64;
    assert_eq!(report.test_error, oracle);
    assert_eq!(report.model_order, 0);
    let other = KernelSpec::gaussian(0.7).unwrap();
    assert!(matches!(
        evaluate_model(&zero, &pool.test, &LossModel::Hinge { classes: 5 }, Some(&other)),
        Err(Error::KernelMismatch(..))
    ));
}

#[test]
fn small_training_set_is_memorized() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.kernel = KernelSpec::gaussian(0.3).unwrap();
    let polk = cfg.polk.as_mut().unwrap();
    polk.parsimony = 0.0;
    polk.lambda = 1e-4;
    cfg.data.train_size = Some(60);
    cfg.data.passes = 10;
    let pool = DataPool::load(&cfg).unwrap();
    let stream = pool.training_stream(&cfg, 0).unwrap();
    assert_eq!(stream.len(), 600);
    let seen: Vec<Sample> = stream[..60].to_vec();
    let run = train_run(&cfg, stream, &seen, 0).unwrap();
    assert!(run.test_error <= 0.02, "training error {}", run.test_error);
}

#[test]
fn empty_data_files_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let train = tmp.path().join("train.csv");
    let test = tmp.path().join("test.csv");
    fs::write(&train, "x1,x2,y\n").unwrap();
    let some: Vec<Sample> = DatasetSpec::from_name("gaussian-mixtures").unwrap().stream(0).unwrap().take(5).collect();
    save_csv(&some, &test).unwrap();
    let mut cfg = config(&tmp.path().join("out"));
    cfg.data.train_file = Some(train);
    cfg.data.test_file = Some(test);
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn failed_runs_leave_no_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir_all(summary_path(&out)).unwrap();
    let err = run_experiment(&config(&out)).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err}");
    for seed in [0, 1] {
        assert!(!metrics_path(&out, seed).exists());
        assert!(!model_path(&out, seed).exists());
    }
    assert!(out.exists());
}
