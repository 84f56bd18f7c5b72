//! Greedy group selection drivers.
//!
//! Both drivers pick the first node by estimating pseudoinverse diagonals from
//! forests rooted at the highest-degree node, then add the node with the
//! largest estimated marginal gain each round. `schur_cfcm` additionally roots
//! forests at a fixed set of high-degree nodes and recovers their entries
//! through a small dense Schur complement.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::engine::{run_delta, run_first_node, RoundSpec};
use crate::error::{CfcmError, Result};
use crate::estimators::GainEstimates;
use crate::exact;
use crate::graph::{diameter, max_degree_after_removal, DiameterMode, Graph, NodeSet};
use crate::projector::{JlProjector, ProjectorMode, DEFAULT_MAX_SKETCH_DIM};
use crate::schur::{peel_prefix, select_root_set};
use crate::stats::{sample_budget, BudgetKind, DEFAULT_R_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Forest,
    Schur,
    Exact,
    Degree,
    TopCfcc,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Forest => "forest",
            Algorithm::Schur => "schur",
            Algorithm::Exact => "exact",
            Algorithm::Degree => "degree",
            Algorithm::TopCfcc => "topcfcc",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = CfcmError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "forest" | "forestcfcm" => Algorithm::Forest,
            "schur" | "schurcfcm" => Algorithm::Schur,
            "exact" => Algorithm::Exact,
            "degree" => Algorithm::Degree,
            "topcfcc" | "top-cfcc" => Algorithm::TopCfcc,
            other => return Err(CfcmError::invalid(format!("unknown algorithm {other:?}"))),
        })
    }
}

/// How the extra Schur roots are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SchurRoots {
    /// Peel high-degree nodes until the set size balances the remaining
    /// maximum degree.
    #[default]
    Auto,
    /// The first `N` nodes of the peeling order.
    Count(usize),
    /// A given node set.
    Explicit(NodeSet),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the machine's parallelism.
    pub workers: usize,
    /// Per-round cap on sampled forests.
    pub r_max: u64,
    pub algorithm: Algorithm,
    pub schur_roots: SchurRoots,
    pub projector: ProjectorMode,
    pub max_sketch_dim: usize,
    pub diameter: DiameterMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 1,
            eps: 0.2,
            seed: 0,
            workers: 0,
            r_max: DEFAULT_R_MAX,
            algorithm: Algorithm::Schur,
            schur_roots: SchurRoots::Auto,
            projector: ProjectorMode::Auto,
            max_sketch_dim: DEFAULT_MAX_SKETCH_DIM,
            diameter: DiameterMode::default(),
        }
    }
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, k: usize, eps: f64, seed: u64) -> Self {
        RunConfig {
            algorithm,
            k,
            eps,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if self.k == 0 || self.k >= graph.n() {
            return Err(CfcmError::invalid(format!(
                "k={} must satisfy 1 <= k < n={}",
                self.k,
                graph.n()
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(CfcmError::invalid(format!("eps={} must lie in (0,1)", self.eps)));
        }
        if self.r_max == 0 {
            return Err(CfcmError::invalid("r_max must be positive"));
        }
        if !graph.is_connected() {
            return Err(CfcmError::Disconnected);
        }
        Ok(())
    }

    fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Seed for round `round`, derived from the master seed.
    fn round_seed(&self, round: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(round);
        rng.next_u64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub node: usize,
    /// Forests sampled in this iteration.
    pub samples: u64,
    /// The selection score: estimated gain, or a diagonal for the first pick.
    pub score: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub iterations: Vec<IterationRecord>,
}

impl SelectionTrace {
    pub fn nodes(&self) -> Vec<usize> {
        self.iterations.iter().map(|r| r.node).collect()
    }

    pub fn set(&self, n: usize) -> NodeSet {
        NodeSet::new(self.nodes(), n).expect("trace nodes are valid ids")
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn total_samples(&self) -> u64 {
        self.iterations.iter().map(|r| r.samples).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.iterations.iter().map(|r| r.seconds).sum()
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CfcmError::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Node of maximum degree, lowest id on ties.
pub fn max_degree_node(graph: &Graph) -> usize {
    (0..graph.n())
        .max_by_key(|&u| (graph.degree(u), std::cmp::Reverse(u)))
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstNode {
    pub node: usize,
    pub samples: u64,
    /// Estimated pseudoinverse diagonal minus a shared constant, per node.
    pub scores: Vec<f64>,
    /// Estimate of that constant, so `scores[u] + offset` estimates `L^+_uu`.
    pub offset: f64,
}

fn first_node_phase(graph: &Graph, config: &RunConfig, tau: usize) -> Result<FirstNode> {
    let root = max_degree_node(graph);
    let budget = sample_budget(
        BudgetKind::FirstNode,
        config.eps,
        tau,
        graph.degree(root),
        graph.n(),
        config.r_max,
    )?;
    let rs = RoundSpec {
        graph,
        s: NodeSet::single(root),
        t: NodeSet::empty(),
        eps: config.eps,
        seed: config.round_seed(0),
        budget,
        projector: None,
        workers: config.worker_count(),
    };
    let out = with_pool(rs.workers, || run_first_node(&rs))??;
    let node = exact::best_index(out.x.iter().copied(), false).unwrap();
    Ok(FirstNode {
        node,
        samples: out.samples,
        scores: out.x,
        offset: out.offset,
    })
}

/// Estimated argmin of the pseudoinverse diagonal.
pub fn select_first_node(graph: &Graph, config: &RunConfig) -> Result<FirstNode> {
    validate_basic(graph, config)?;
    let tau = diameter(graph, config.diameter)?;
    first_node_phase(graph, config, tau)
}

fn validate_basic(graph: &Graph, config: &RunConfig) -> Result<()> {
    let mut c = config.clone();
    c.k = 1;
    c.validate(graph)
}

fn delta_round(graph: &Graph, s: &NodeSet, t: &NodeSet, config: &RunConfig, tau: usize) -> Result<GainEstimates> {
    let n = graph.n();
    let (kind, dmax) = if t.is_empty() {
        (BudgetKind::ForestDelta, max_degree_after_removal(graph, s))
    } else {
        (BudgetKind::SchurDelta, max_degree_after_removal(graph, &s.union(t)))
    };
    let budget = sample_budget(kind, config.eps, tau, dmax, n, config.r_max)?;
    let round = s.len() as u64;
    let seed = config.round_seed(round);
    let candidates: Vec<usize> = (0..n).filter(|&u| !s.contains(u)).collect();
    let mut prng = ChaCha8Rng::seed_from_u64(seed);
    prng.set_stream(u64::MAX);
    let projector = JlProjector::for_round(
        config.projector,
        &candidates,
        n,
        config.eps,
        config.max_sketch_dim,
        &mut prng,
    )?;
    let rs = RoundSpec {
        graph,
        s: s.clone(),
        t: t.clone(),
        eps: config.eps,
        seed,
        budget,
        projector: Some(projector),
        workers: config.worker_count(),
    };
    with_pool(rs.workers, || run_delta(&rs))?
}

/// Estimated marginal gains of every node outside `s`, from forests rooted at `s`.
pub fn forest_delta(graph: &Graph, s: &NodeSet, config: &RunConfig) -> Result<GainEstimates> {
    validate_basic(graph, config)?;
    let tau = diameter(graph, config.diameter)?;
    delta_round(graph, s, &NodeSet::empty(), config, tau)
}

/// As `forest_delta`, with forests rooted at `s + t` and `t` eliminated
/// through a Schur complement. Nodes of `t` inside `s` are ignored.
pub fn schur_delta(graph: &Graph, s: &NodeSet, t: &NodeSet, config: &RunConfig) -> Result<GainEstimates> {
    validate_basic(graph, config)?;
    let tau = diameter(graph, config.diameter)?;
    delta_round(graph, s, &t.difference(s), config, tau)
}

fn greedy(graph: &Graph, config: &RunConfig, t: Option<NodeSet>) -> Result<SelectionTrace> {
    config.validate(graph)?;
    let start = Instant::now();
    let tau = diameter(graph, config.diameter)?;
    let first = first_node_phase(graph, config, tau)?;
    let mut trace = SelectionTrace::default();
    trace.iterations.push(IterationRecord {
        node: first.node,
        samples: first.samples,
        score: first.scores[first.node],
        seconds: start.elapsed().as_secs_f64(),
    });
    let mut s = NodeSet::single(first.node);
    while s.len() < config.k {
        let start = Instant::now();
        let t_i = t.as_ref().map_or_else(NodeSet::empty, |t| t.difference(&s));
        let est = delta_round(graph, &s, &t_i, config, tau)?;
        let best = est.argmax().ok_or_else(|| CfcmError::invalid("no candidates left"))?;
        trace.iterations.push(IterationRecord {
            node: best.node,
            samples: est.samples,
            score: best.gain,
            seconds: start.elapsed().as_secs_f64(),
        });
        s.insert(best.node);
    }
    Ok(trace)
}

/// Greedy maximization with forests rooted at the current group.
pub fn forest_cfcm(graph: &Graph, config: &RunConfig) -> Result<SelectionTrace> {
    greedy(graph, config, None)
}

/// The Schur root set a configuration resolves to.
pub fn resolve_schur_roots(graph: &Graph, roots: &SchurRoots) -> Result<NodeSet> {
    Ok(match roots {
        SchurRoots::Auto => select_root_set(graph),
        SchurRoots::Count(c) => peel_prefix(graph, *c),
        SchurRoots::Explicit(t) => {
            for x in t.iter() {
                graph.check_node(x)?;
            }
            t.clone()
        }
    })
}

/// Greedy maximization with Schur-complement elimination of a root set.
pub fn schur_cfcm(graph: &Graph, config: &RunConfig) -> Result<SelectionTrace> {
    config.validate(graph)?;
    let t = resolve_schur_roots(graph, &config.schur_roots)?;
    greedy(graph, config, Some(t))
}

/// Runs the configured algorithm.
pub fn maximize(graph: &Graph, config: &RunConfig) -> Result<SelectionTrace> {
    match config.algorithm {
        Algorithm::Forest => forest_cfcm(graph, config),
        Algorithm::Schur => schur_cfcm(graph, config),
        Algorithm::Exact => {
            config.validate(graph)?;
            exact::greedy_exact(graph, config.k)
        }
        Algorithm::Degree => {
            config.validate(graph)?;
            timed_set(baselines::degree_baseline(graph, config.k)?)
        }
        Algorithm::TopCfcc => {
            config.validate(graph)?;
            let start = Instant::now();
            let mode = if graph.n() <= exact::DENSE_LIMIT {
                baselines::TopCfccMode::Exact
            } else {
                baselines::TopCfccMode::Estimated(config.clone())
            };
            let set = baselines::top_cfcc_baseline(graph, config.k, &mode)?;
            let mut trace = timed_set(set)?;
            if let Some(last) = trace.iterations.last_mut() {
                last.seconds = start.elapsed().as_secs_f64();
            }
            Ok(trace)
        }
    }
}

fn timed_set(nodes: Vec<usize>) -> Result<SelectionTrace> {
    Ok(SelectionTrace {
        iterations: nodes
            .into_iter()
            .map(|node| IterationRecord {
                node,
                samples: 0,
                score: 0.0,
                seconds: 0.0,
            })
            .collect(),
    })
}
