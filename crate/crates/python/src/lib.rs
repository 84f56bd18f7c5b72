//! Python bindings for the cfcm library.
//!
//! Nodes are dense ids `0..n`; `Graph.label` and `Graph.node_of` translate
//! to and from the labels in the input file.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cfcm::baselines::{self, TopCfccMode};
use cfcm::exact;
use cfcm::forest::{uniformity_test, SourceOrder};
use cfcm::graph::{self as core_graph, LoadOptions};
use cfcm::{Algorithm, CfcmError, NodeSet, RunConfig, SchurRoots};

fn to_py(e: CfcmError) -> PyErr {
    match e {
        CfcmError::InvalidArgument(_) | CfcmError::NodeOutOfRange { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Undirected simple graph.
#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: cfcm::Graph,
}

#[pymethods]
impl PyGraph {
    /// Builds a graph from `(label, label)` pairs; loops and duplicates are dropped.
    #[staticmethod]
    fn from_edges(edges: Vec<(u64, u64)>) -> PyResult<Self> {
        let inner = cfcm::Graph::from_edges(edges).map_err(to_py)?;
        Ok(PyGraph { inner })
    }

    /// Reads an edge list and keeps its largest connected component.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let g = core_graph::load_edge_list(path, LoadOptions::default()).map_err(to_py)?;
        Ok(PyGraph {
            inner: core_graph::largest_connected_component(&g),
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn degree(&self, u: usize) -> PyResult<usize> {
        self.inner.check_node(u).map_err(to_py)?;
        Ok(self.inner.degree(u))
    }

    fn neighbors(&self, u: usize) -> PyResult<Vec<usize>> {
        self.inner.check_node(u).map_err(to_py)?;
        Ok(self.inner.neighbors(u).to_vec())
    }

    fn label(&self, u: usize) -> PyResult<u64> {
        self.inner.check_node(u).map_err(to_py)?;
        Ok(self.inner.label(u))
    }

    fn node_of(&self, label: u64) -> Option<usize> {
        self.inner.node_of(label)
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn largest_component(&self) -> Self {
        PyGraph {
            inner: core_graph::largest_connected_component(&self.inner),
        }
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// Result of a greedy run: one entry per iteration.
#[pyclass(name = "Selection", frozen, get_all)]
struct PySelection {
    nodes: Vec<usize>,
    samples: Vec<u64>,
    scores: Vec<f64>,
    seconds: Vec<f64>,
}

#[pymethods]
impl PySelection {
    fn __len__(&self) -> usize {
        self.nodes.len()
    }

    fn __repr__(&self) -> String {
        format!("Selection(nodes={:?})", self.nodes)
    }
}

fn node_set(graph: &cfcm::Graph, nodes: Vec<usize>) -> PyResult<NodeSet> {
    NodeSet::new(nodes, graph.n()).map_err(to_py)
}

/// Selects `k` nodes with `algo` in {forest, schur, exact, degree, topcfcc}.
#[pyfunction]
#[pyo3(signature = (graph, k, algo="schur", eps=0.2, seed=0, threads=0, r_max=None, schur_roots=None))]
#[allow(clippy::too_many_arguments)]
fn maximize(
    py: Python<'_>,
    graph: &PyGraph,
    k: usize,
    algo: &str,
    eps: f64,
    seed: u64,
    threads: usize,
    r_max: Option<u64>,
    schur_roots: Option<usize>,
) -> PyResult<PySelection> {
    let algo: Algorithm = algo.parse().map_err(to_py)?;
    let mut config = RunConfig::new(algo, k, eps, seed);
    config.workers = threads;
    if let Some(r) = r_max {
        config.r_max = r;
    }
    if let Some(c) = schur_roots {
        config.schur_roots = SchurRoots::Count(c);
    }
    let g = &graph.inner;
    let trace = py.detach(|| cfcm::maximize(g, &config)).map_err(to_py)?;
    Ok(PySelection {
        nodes: trace.nodes(),
        samples: trace.iterations.iter().map(|r| r.samples).collect(),
        scores: trace.iterations.iter().map(|r| r.score).collect(),
        seconds: trace.iterations.iter().map(|r| r.seconds).collect(),
    })
}

/// `n / Tr(L_S^-1)` computed densely.
#[pyfunction]
fn group_cfcc(graph: &PyGraph, nodes: Vec<usize>) -> PyResult<f64> {
    let s = node_set(&graph.inner, nodes)?;
    Ok(exact::group_cfcc(&graph.inner, &s).map_err(to_py)?.1)
}

/// Hutchinson and conjugate-gradient estimate: `(cfcc, standard error)`.
#[pyfunction]
#[pyo3(signature = (graph, nodes, probes=512, tol=1e-8, seed=0))]
fn cfcc_iterative(graph: &PyGraph, nodes: Vec<usize>, probes: usize, tol: f64, seed: u64) -> PyResult<(f64, f64)> {
    let s = node_set(&graph.inner, nodes)?;
    let it = exact::cfcc_iterative(&graph.inner, &s, probes, tol, seed).map_err(to_py)?;
    Ok((it.cfcc, it.cfcc_std_error))
}

#[pyfunction]
fn greedy_exact(graph: &PyGraph, k: usize) -> PyResult<Vec<usize>> {
    Ok(exact::greedy_exact(&graph.inner, k).map_err(to_py)?.nodes())
}

/// Best `k`-subset and its CFCC, by enumeration.
#[pyfunction]
fn exhaustive_optimum(graph: &PyGraph, k: usize) -> PyResult<(Vec<usize>, f64)> {
    let (set, cfcc) = exact::exhaustive_optimum(&graph.inner, k).map_err(to_py)?;
    Ok((set.as_slice().to_vec(), cfcc))
}

#[pyfunction]
fn degree_baseline(graph: &PyGraph, k: usize) -> PyResult<Vec<usize>> {
    baselines::degree_baseline(&graph.inner, k).map_err(to_py)
}

#[pyfunction]
fn top_cfcc_baseline(graph: &PyGraph, k: usize) -> PyResult<Vec<usize>> {
    baselines::top_cfcc_baseline(&graph.inner, k, &TopCfccMode::Exact).map_err(to_py)
}

/// Number of spanning forests rooted at `roots`.
#[pyfunction]
fn forest_count(graph: &PyGraph, roots: Vec<usize>) -> PyResult<u128> {
    let r = node_set(&graph.inner, roots)?;
    exact::forest_count(&graph.inner, &r).map_err(to_py)
}

/// Chi-square uniformity test of the sampler: `(forests, chi_square, dof, p_value)`.
#[pyfunction]
#[pyo3(signature = (graph, roots, samples=100_000, seed=0))]
fn sampler_check(graph: &PyGraph, roots: Vec<usize>, samples: u64, seed: u64) -> PyResult<(usize, f64, usize, f64)> {
    let r = node_set(&graph.inner, roots)?;
    let t = uniformity_test(&graph.inner, &r, samples, seed, SourceOrder::Ascending).map_err(to_py)?;
    Ok((t.forests, t.chi_square, t.dof, t.p_value))
}

#[pymodule]
pub fn cfcm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PySelection>()?;
    m.add_function(wrap_pyfunction!(maximize, m)?)?;
    m.add_function(wrap_pyfunction!(group_cfcc, m)?)?;
    m.add_function(wrap_pyfunction!(cfcc_iterative, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_exact, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(degree_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(top_cfcc_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(forest_count, m)?)?;
    m.add_function(wrap_pyfunction!(sampler_check, m)?)?;
    Ok(())
}
