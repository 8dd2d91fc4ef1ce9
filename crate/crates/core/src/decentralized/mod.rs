//! Networked kernel learners coupled through their evaluations at each
//! other's samples, either by a quadratic consensus penalty or by proximity
//! constraints with dual variables.
//!
//! Rounds are synchronous: every agent reads only the functions as they were
//! at the start of the round, and all traffic goes through an explicit
//! message ledger.

mod graph;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{DatasetSpec, SampleStream};
use crate::error::{check_dim, Error, Result};
use crate::komp::{komp_compress_warm, CompressionBudget, WarmStart};
use crate::losses::{self, LossModel, Sample};
use crate::polk::{PolkConfig, PolkState};
use crate::rkhs::{KernelSpec, RkhsFunction};

pub use graph::NetworkGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Consensus,
    PrimalDual,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consensus" => Ok(Mode::Consensus),
            "primal-dual" => Ok(Mode::PrimalDual),
            other => Err(Error::usage(format!("unknown mode {other:?} (expected consensus or primal-dual)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Consensus => "consensus",
            Mode::PrimalDual => "primal-dual",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub mode: Mode,
    pub eta: f64,
    pub lambda: f64,
    /// Consensus penalty coefficient `c`.
    pub penalty: f64,
    /// Dual regularization `delta`.
    pub delta: f64,
    /// Constraint tolerance `gamma`, shared by every directed constraint.
    pub gamma: f64,
    /// KOMP budget per agent and round.
    pub budget: f64,
    pub loss: LossModel,
    pub kernel: KernelSpec,
    /// Size of the probe set used for metrics.
    pub probes: usize,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.loss.validate()?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config("eta must be positive".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if self.eta * self.lambda >= 1.0 {
            return Err(Error::Config(format!(
                "Regularization Condition violated: eta * lambda = {} must be < 1",
                self.eta * self.lambda
            )));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::Config("penalty c must be non-negative".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config("delta must be positive".into()));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Config("gamma must be finite".into()));
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(Error::Config("budget must be non-negative".into()));
        }
        if self.probes == 0 {
            return Err(Error::Config("probe set must be non-empty".into()));
        }
        Ok(())
    }
}

/// Dual variables of the directed constraints, in [`NetworkGraph::directed`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub constraints: Vec<(usize, usize)>,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: f64,
}

impl DualState {
    pub fn new(graph: &NetworkGraph, gamma: f64, delta: f64) -> Self {
        let constraints = graph.directed();
        let n = constraints.len();
        DualState { constraints, mu: vec![0.0; n], gamma: vec![gamma; n], delta }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.constraints.iter().position(|&c| c == (i, j)).map(|k| self.mu[k])
    }
}

/// `[max(0, 1 - delta eta^2) mu + eta (h - gamma)]_+`.
pub fn dual_update(mu: f64, h: f64, gamma: f64, delta: f64, eta: f64) -> f64 {
    let contraction = (1.0 - delta * eta * eta).max(0.0);
    (contraction * mu + eta * (h - gamma)).max(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Query { from: usize, to: usize, x: Vec<f64> },
    Reply { from: usize, to: usize, value: Vec<f64> },
    Dual { from: usize, to: usize, mu: f64 },
}

/// Append-only ledger of one round's traffic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundMessages {
    pub messages: Vec<Message>,
}

impl RoundMessages {
    pub fn queries(&self) -> usize {
        self.messages.iter().filter(|m| matches!(m, Message::Query { .. })).count()
    }

    pub fn replies(&self) -> usize {
        self.messages.iter().filter(|m| matches!(m, Message::Reply { .. })).count()
    }

    pub fn duals(&self) -> usize {
        self.messages.iter().filter(|m| matches!(m, Message::Dual { .. })).count()
    }

    /// Reply carrying `f_from(x_to)`.
    fn reply(&self, from: usize, to: usize) -> &[f64] {
        self.messages
            .iter()
            .find_map(|m| match m {
                Message::Reply { from: f, to: t, value } if *f == from && *t == to => Some(value.as_slice()),
                _ => None,
            })
            .expect("every directed edge gets a reply")
    }
}

#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub messages: RoundMessages,
    /// `sum over directed constraints of (h_ij - gamma_ij)_+` this round.
    pub violation: f64,
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Query/reply exchange on pre-round functions; returns each agent's own prediction.
fn exchange(
    agents: &[RkhsFunction],
    graph: &NetworkGraph,
    samples: &[Sample],
    ledger: &mut RoundMessages,
) -> Result<Vec<Vec<f64>>> {
    check_dim(graph.nodes(), agents.len())?;
    check_dim(graph.nodes(), samples.len())?;
    let own = agents.iter().zip(samples).map(|(f, s)| f.evaluate(&s.x)).collect::<Result<Vec<_>>>()?;
    for (i, j) in graph.directed() {
        ledger.messages.push(Message::Query { from: i, to: j, x: samples[i].x.clone() });
    }
    let n = ledger.messages.len();
    for k in 0..n {
        if let Message::Query { from, to, x } = &ledger.messages[k] {
            let value = agents[*to].evaluate(x)?;
            ledger.messages.push(Message::Reply { from: *to, to: *from, value });
        }
    }
    Ok(own)
}

fn local_update(
    f: &RkhsFunction,
    warm: &mut Option<WarmStart>,
    sample: &Sample,
    coef: &[f64],
    config: &NetworkConfig,
) -> Result<RkhsFunction> {
    let mut next = f.clone();
    next.scale(1.0 - config.eta * config.lambda);
    let row: Vec<f64> = coef.iter().map(|c| -config.eta * c).collect();
    next.push_atom(&sample.x, &row)?;
    if next.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("non-finite agent weights".into()));
    }
    let (out, _, w) = komp_compress_warm(&next, CompressionBudget::new(config.budget)?, warm.as_ref())?;
    *warm = w;
    Ok(out)
}

fn round_violation(graph: &NetworkGraph, own: &[Vec<f64>], ledger: &RoundMessages, gamma: &[f64]) -> f64 {
    graph.directed().iter().zip(gamma).map(|(&(i, j), g)| (sq_diff(&own[i], ledger.reply(j, i)) - g).max(0.0)).sum()
}

/// Consensus-penalty round with agents updated in index order.
pub fn consensus_round(
    agents: &mut [RkhsFunction],
    graph: &NetworkGraph,
    config: &NetworkConfig,
    samples: &[Sample],
) -> Result<RoundOutcome> {
    let order: Vec<usize> = (0..agents.len()).collect();
    consensus_round_ordered(agents, graph, config, samples, &order)
}

/// Consensus-penalty round with agents updated in `order`; the result does
/// not depend on `order`.
pub fn consensus_round_ordered(
    agents: &mut [RkhsFunction],
    graph: &NetworkGraph,
    config: &NetworkConfig,
    samples: &[Sample],
    order: &[usize],
) -> Result<RoundOutcome> {
    let mut warm = vec![None; agents.len()];
    consensus_inner(agents, &mut warm, graph, config, samples, order)
}

fn consensus_inner(
    agents: &mut [RkhsFunction],
    warm: &mut [Option<WarmStart>],
    graph: &NetworkGraph,
    config: &NetworkConfig,
    samples: &[Sample],
    order: &[usize],
) -> Result<RoundOutcome> {
    let mut ledger = RoundMessages::default();
    let own = exchange(agents, graph, samples, &mut ledger)?;
    let snapshot = agents.to_vec();
    for &i in order {
        let mut coef = config.loss.derivative(&own[i], samples[i].y)?;
        for &j in graph.neighbors(i) {
            for (c, (a, b)) in coef.iter_mut().zip(own[i].iter().zip(ledger.reply(j, i))) {
                *c += config.penalty * (a - b);
            }
        }
        agents[i] = local_update(&snapshot[i], &mut warm[i], &samples[i], &coef, config)?;
    }
    let gamma = vec![config.gamma; graph.directed().len()];
    let violation = round_violation(graph, &own, &ledger, &gamma);
    Ok(RoundOutcome { messages: ledger, violation })
}

/// Primal-dual round with agents updated in index order.
pub fn primal_dual_round(
    agents: &mut [RkhsFunction],
    duals: &mut DualState,
    graph: &NetworkGraph,
    config: &NetworkConfig,
    samples: &[Sample],
) -> Result<RoundOutcome> {
    let order: Vec<usize> = (0..agents.len()).collect();
    primal_dual_round_ordered(agents, duals, graph, config, samples, &order)
}

pub fn primal_dual_round_ordered(
    agents: &mut [RkhsFunction],
    duals: &mut DualState,
    graph: &NetworkGraph,
    config: &NetworkConfig,
    samples: &[Sample],
    order: &[usize],
) -> Result<RoundOutcome> {
    let mut warm = vec![None; agents.len()];
    primal_dual_inner(agents, &mut warm, duals, graph, config, samples, order)
}

fn primal_dual_inner(
    agents: &mut [RkhsFunction],
    warm: &mut [Option<WarmStart>],
    duals: &mut DualState,
    graph: &NetworkGraph,
    config: &NetworkConfig,
    samples: &[Sample],
    order: &[usize],
) -> Result<RoundOutcome> {
    check_dim(graph.directed().len(), duals.mu.len())?;
    let mut ledger = RoundMessages::default();
    let own = exchange(agents, graph, samples, &mut ledger)?;
    for (&(i, j), &mu) in duals.constraints.iter().zip(&duals.mu) {
        ledger.messages.push(Message::Dual { from: i, to: j, mu });
    }
    let snapshot = agents.to_vec();
    let pre_mu = duals.mu.clone();
    for &i in order {
        let mut coef = config.loss.derivative(&own[i], samples[i].y)?;
        for (k, &(a, j)) in duals.constraints.iter().enumerate() {
            if a != i {
                continue;
            }
            for (c, (u, v)) in coef.iter_mut().zip(own[i].iter().zip(ledger.reply(j, i))) {
                *c += pre_mu[k] * 2.0 * (u - v);
            }
        }
        agents[i] = local_update(&snapshot[i], &mut warm[i], &samples[i], &coef, config)?;
    }
    for (k, &(i, j)) in duals.constraints.iter().enumerate() {
        let h = sq_diff(&own[i], ledger.reply(j, i));
        duals.mu[k] = dual_update(pre_mu[k], h, duals.gamma[k], duals.delta, config.eta);
    }
    let violation = round_violation(graph, &own, &ledger, &duals.gamma);
    Ok(RoundOutcome { messages: ledger, violation })
}

pub const NETWORK_METRICS_HEADER: [&str; 5] = ["round", "avg_loss", "disagreement", "cum_violation", "avg_model_order"];

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkRow {
    pub round: usize,
    pub avg_loss: f64,
    pub disagreement: f64,
    pub cum_violation: f64,
    pub avg_model_order: f64,
}

/// Mean probe loss per agent, averaged over agents.
pub fn average_loss(agents: &[RkhsFunction], probes: &[Sample], loss: &LossModel) -> Result<f64> {
    let mut total = 0.0;
    for f in agents {
        let l = losses::losses(f, probes, loss)?;
        total += l.iter().sum::<f64>() / l.len() as f64;
    }
    Ok(total / agents.len() as f64)
}

/// `sum over edges of mean over probes |f_i(x) - f_j(x)|^2`.
pub fn disagreement(agents: &[RkhsFunction], graph: &NetworkGraph, probes: &[Sample]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::usage("probe set is empty"));
    }
    let evals = agents
        .iter()
        .map(|f| probes.iter().map(|p| f.evaluate(&p.x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for &(i, j) in graph.edges() {
        let s: f64 = evals[i].iter().zip(&evals[j]).map(|(a, b)| sq_diff(a, b)).sum();
        total += s / probes.len() as f64;
    }
    Ok(total)
}

/// `S(f) = sum_i (mean probe loss of f_i + (lambda/2)|f_i|^2)`.
pub fn penalty_objective(agents: &[RkhsFunction], probes: &[Sample], config: &NetworkConfig) -> Result<f64> {
    agents.iter().map(|f| losses::regularized_risk(f, probes, &config.loss, config.lambda)).sum()
}

pub fn network_metrics(
    round: usize,
    agents: &[RkhsFunction],
    graph: &NetworkGraph,
    probes: &[Sample],
    config: &NetworkConfig,
    cum_violation: f64,
) -> Result<NetworkRow> {
    if probes.is_empty() {
        return Err(Error::usage("probe set is empty"));
    }
    Ok(NetworkRow {
        round,
        avg_loss: average_loss(agents, probes, &config.loss)?,
        disagreement: disagreement(agents, graph, probes)?,
        cum_violation,
        avg_model_order: agents.iter().map(|f| f.model_order() as f64).sum::<f64>() / agents.len() as f64,
    })
}

/// A network of agents with their local data streams.
#[derive(Clone, Debug)]
pub struct Network {
    pub graph: NetworkGraph,
    pub config: NetworkConfig,
    pub agents: Vec<RkhsFunction>,
    pub duals: DualState,
    pub round: usize,
    pub cum_violation: f64,
    stream: SampleStream,
    warm: Vec<Option<WarmStart>>,
}

impl Network {
    pub fn new(graph: NetworkGraph, config: NetworkConfig, data: &DatasetSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let stream = data.stream(seed)?;
        let agents = vec![RkhsFunction::zero(config.kernel, data.dim(), config.loss.outputs()); graph.nodes()];
        let duals = DualState::new(&graph, config.gamma, config.delta);
        let warm = vec![None; graph.nodes()];
        Ok(Network { graph, config, agents, duals, round: 0, cum_violation: 0.0, stream, warm })
    }

    /// Local samples of round `t`: agent `i` draws stream index `t V + i`.
    pub fn samples_for(&self, t: usize) -> Vec<Sample> {
        let v = self.graph.nodes();
        (0..v).map(|i| self.stream.sample_at((t * v + i) as u64)).collect()
    }

    pub fn step(&mut self) -> Result<RoundOutcome> {
        let samples = self.samples_for(self.round);
        let order: Vec<usize> = (0..self.agents.len()).collect();
        let (agents, warm) = (&mut self.agents, &mut self.warm);
        let out = match self.config.mode {
            Mode::Consensus => consensus_inner(agents, warm, &self.graph, &self.config, &samples, &order)?,
            Mode::PrimalDual => {
                primal_dual_inner(agents, warm, &mut self.duals, &self.graph, &self.config, &samples, &order)?
            }
        };
        self.round += 1;
        self.cum_violation += out.violation;
        Ok(out)
    }
}

/// Probe samples, drawn from a stream independent of every agent's.
pub fn probe_set(data: &DatasetSpec, seed: u64, n: usize) -> Result<Vec<Sample>> {
    Ok(data.stream(seed ^ PROBE_SEED_MASK)?.take(n).collect())
}

const PROBE_SEED_MASK: u64 = 0x5851_f42d_4c95_7f2d;

/// Runs `rounds` synchronous rounds and records metrics after each one.
pub fn run_network(
    graph: &NetworkGraph,
    config: &NetworkConfig,
    data: &DatasetSpec,
    rounds: usize,
    seed: u64,
) -> Result<(Network, Vec<NetworkRow>)> {
    run_network_every(graph, config, data, rounds, seed, 1)
}

/// Like [`run_network`], recording every `period` rounds and after the last.
pub fn run_network_every(
    graph: &NetworkGraph,
    config: &NetworkConfig,
    data: &DatasetSpec,
    rounds: usize,
    seed: u64,
    period: usize,
) -> Result<(Network, Vec<NetworkRow>)> {
    if rounds == 0 {
        return Err(Error::usage("need at least one round"));
    }
    let probes = probe_set(data, seed, config.probes)?;
    let mut net = Network::new(graph.clone(), config.clone(), data, seed)?;
    let mut rows = Vec::new();
    let period = period.max(1);
    for _ in 0..rounds {
        net.step()?;
        if net.round % period == 0 || net.round == rounds {
            rows.push(network_metrics(net.round, &net.agents, graph, &probes, config, net.cum_violation)?);
        }
    }
    Ok((net, rows))
}

/// Centralized reference: POLK on the pooled stream of all agents, one
/// sample per step, with the network's step size, regularizer and budget.
pub fn centralized_reference(
    config: &NetworkConfig,
    data: &DatasetSpec,
    seed: u64,
    steps: usize,
) -> Result<RkhsFunction> {
    let polk = PolkConfig {
        eta: config.eta,
        lambda: config.lambda,
        schedule: crate::polk::Schedule::Constant,
        parsimony: config.budget / config.eta,
        budget_exponent: 1.0,
        loss: config.loss,
        kernel: config.kernel,
    };
    polk.validate()?;
    let mut state = PolkState::new(&polk, data.dim());
    for s in data.stream(seed)?.take(steps) {
        state.step(&polk, &s)?;
    }
    Ok(state.f)
}

pub fn write_network_metrics(rows: &[NetworkRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NETWORK_METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.avg_loss.to_string(),
            r.disagreement.to_string(),
            r.cum_violation.to_string(),
            r.avg_model_order.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_network_metrics(input: impl Read) -> Result<Vec<NetworkRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != NETWORK_METRICS_HEADER {
        return Err(Error::parse("network metrics header", header.join(",")));
    }
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let loc = || format!("network metrics row {}", n + 1);
        let f = |k: usize| rec[k].parse::<f64>().map_err(|e| Error::parse(loc(), e.to_string()));
        rows.push(NetworkRow {
            round: rec[0].parse().map_err(|e: std::num::ParseIntError| Error::parse(loc(), e.to_string()))?,
            avg_loss: f(1)?,
            disagreement: f(2)?,
            cum_violation: f(3)?,
            avg_model_order: f(4)?,
        });
    }
    Ok(rows)
}
