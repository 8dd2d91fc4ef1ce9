use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use parsikern::datagen::{save_csv, split, DatasetSpec};
use parsikern::decentralized::{run_network_every, write_network_metrics, Mode, NetworkGraph};
use parsikern::harness::experiment::{train_run, DataPool};
use parsikern::harness::{
    evaluate_model, load_config, load_simulation_config, read_config, run_experiment, Algorithm, ExperimentConfig,
};
use parsikern::losses::{LossKind, LossModel};
use parsikern::metrics::write_metrics;
use parsikern::rkhs::io::{load_model, save_model};
use parsikern::{komp_compress, CompressionBudget, Error, Result};

#[derive(Parser)]
#[command(name = "parsikern", version, about = "Budgeted online kernel learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic data set as CSV.
    GenData(GenData),
    /// Train one model on a CSV stream.
    Train(Train),
    /// Compress a saved model to a Hilbert-norm budget.
    Compress(Compress),
    /// Score a saved model on a CSV data set.
    Evaluate(Evaluate),
    /// Simulate a network of agents.
    Simulate(Simulate),
    /// Run every seed of an experiment config and summarize.
    Experiment(Experiment),
}

#[derive(Args)]
struct GenData {
    /// gaussian-mixtures or regression-outliers
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Hold out this fraction of the samples; requires --test-out.
    #[arg(long, requires = "test_out")]
    test_fraction: Option<f64>,
    #[arg(long, requires = "test_fraction")]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    mu_risk: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Highest central moment in the dispersion measure.
    #[arg(long)]
    pmax: Option<u32>,
    #[arg(long)]
    semideviation: bool,
}

#[derive(Args)]
struct Compress {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epsilon: f64,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// square, hinge or logistic; defaults to square for one output and
    /// hinge otherwise.
    #[arg(long)]
    loss: Option<LossKind>,
    /// Experiment config whose kernel and loss the model must match.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Simulate {
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    metrics: PathBuf,
}

#[derive(Args)]
struct Experiment {
    #[arg(long)]
    config: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn gen_data(a: GenData) -> Result<()> {
    let spec = DatasetSpec::from_name(&a.dataset)?;
    let stream = spec.stream(a.seed)?;
    match (a.test_fraction, a.test_out) {
        (Some(q), Some(test_out)) => {
            let (train, test) = split(stream, a.n, q, a.seed)?;
            save_csv(&train, &a.out)?;
            save_csv(&test, &test_out)?;
            println!("wrote {} training and {} test samples", train.len(), test.len());
        }
        _ => {
            let data: Vec<_> = stream.take(a.n).collect();
            save_csv(&data, &a.out)?;
            println!("wrote {} samples", data.len());
        }
    }
    Ok(())
}

fn train_config(a: &Train) -> Result<ExperimentConfig> {
    let mut config = read_config(&a.config)?;
    if let Some(algo) = a.algo {
        config.algorithm = algo;
    }
    config.data.train_file = Some(a.data.clone());
    config.data.test_file = Some(a.test.clone());
    config.seeds = vec![a.seed];
    let colk_flags = a.mu_risk.is_some() || a.beta.is_some() || a.pmax.is_some() || a.semideviation;
    if colk_flags {
        let colk = config.colk.as_mut().ok_or_else(|| Error::Config("COLK flags need a [colk] section".into()))?;
        if let Some(mu) = a.mu_risk {
            colk.mu_risk = mu;
        }
        if let Some(beta) = a.beta {
            colk.beta = beta;
        }
        if let Some(p) = a.pmax {
            colk.max_moment = p;
        }
        colk.semideviation |= a.semideviation;
    }
    config.validate()?;
    Ok(config)
}

fn train(a: Train) -> Result<()> {
    let config = train_config(&a)?;
    let pool = DataPool::load(&config)?;
    let stream = pool.training_stream(&config, a.seed)?;
    let run = train_run(&config, stream, &pool.test, a.seed)?;
    if let Some(path) = &a.metrics {
        let mut w = create(path)?;
        write_metrics(&run.metrics, &mut w)?;
        w.flush()?;
    }
    if let Some(path) = &a.model_out {
        save_model(&run.model, path)?;
    }
    println!("test_error {}", run.test_error);
    println!("model_order {}", run.model_order);
    Ok(())
}

fn compress(a: Compress) -> Result<()> {
    let f = load_model(&a.model)?;
    let (out, report) = komp_compress(&f, CompressionBudget::new(a.epsilon)?)?;
    save_model(&out, &a.out)?;
    println!("model_order {} -> {}", f.model_order(), report.final_model_order);
    println!("error {}", report.final_error);
    Ok(())
}

fn evaluate(a: Evaluate) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = parsikern::datagen::load_csv(&a.data)?;
    let config = a.config.as_deref().map(read_config).transpose()?;
    let loss = match (&config, a.loss) {
        (Some(c), None) => c.loss_model()?,
        (_, Some(kind)) => LossModel::from_kind(kind, model.outputs())?,
        (None, None) if model.outputs() == 1 => LossModel::Square,
        (None, None) => LossModel::Hinge { classes: model.outputs() },
    };
    let report = evaluate_model(&model, &data, &loss, config.as_ref().map(|c| &c.kernel))?;
    println!("{report}");
    Ok(())
}

fn simulate(a: Simulate) -> Result<()> {
    let sim = load_simulation_config(&a.config)?;
    let graph = NetworkGraph::load(&a.graph)?;
    let config = sim.network_config(a.mode)?;
    let (net, rows) = run_network_every(&graph, &config, &sim.dataset, a.rounds, a.seed, sim.record_period)?;
    let mut w = create(&a.metrics)?;
    write_network_metrics(&rows, &mut w)?;
    w.flush()?;
    if let Some(last) = rows.last() {
        println!("rounds {}", net.round);
        println!("avg_loss {}", last.avg_loss);
        println!("disagreement {}", last.disagreement);
        println!("cum_violation {}", last.cum_violation);
    }
    Ok(())
}

fn experiment(a: Experiment) -> Result<()> {
    let config = load_config(&a.config)?;
    let summary = run_experiment(&config)?;
    for (seed, err, order) in &summary.runs {
        println!("seed {seed}: test_error {err} model_order {order}");
    }
    let ((em, es), (om, os)) = (summary.test_error, summary.model_order);
    println!("test_error {em} +- {es}");
    println!("model_order {om} +- {os}");
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("PARSIKERN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("PARSIKERN_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Compress(a) => compress(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
