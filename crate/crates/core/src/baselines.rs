//! Ranking heuristics: top degree and top single-node CFCC.

use crate::error::{CfcmError, Result};
use crate::exact;
use crate::graph::Graph;
use crate::greedy::{select_first_node, RunConfig};

fn check_k(graph: &Graph, k: usize) -> Result<()> {
    if k == 0 || k >= graph.n() {
        return Err(CfcmError::invalid(format!(
            "k={k} must satisfy 1 <= k < n={}",
            graph.n()
        )));
    }
    Ok(())
}

/// The `k` highest-degree nodes in rank order, lowest id first on ties.
pub fn degree_baseline(graph: &Graph, k: usize) -> Result<Vec<usize>> {
    check_k(graph, k)?;
    let mut ids: Vec<usize> = (0..graph.n()).collect();
    ids.sort_by_key(|&u| (std::cmp::Reverse(graph.degree(u)), u));
    ids.truncate(k);
    Ok(ids)
}

#[derive(Debug, Clone)]
pub enum TopCfccMode {
    /// Dense pseudoinverse diagonal.
    Exact,
    /// Forest estimates of the diagonal (up to a shared constant), using the
    /// configuration's accuracy, seed and sample cap.
    Estimated(RunConfig),
}

/// The `k` nodes of largest single-node CFCC, i.e. smallest pseudoinverse
/// diagonal, in rank order with lowest id first on ties.
pub fn top_cfcc_baseline(graph: &Graph, k: usize, mode: &TopCfccMode) -> Result<Vec<usize>> {
    check_k(graph, k)?;
    let scores: Vec<f64> = match mode {
        TopCfccMode::Exact => {
            let lp = exact::pseudoinverse(graph)?;
            (0..graph.n()).map(|u| lp[(u, u)]).collect()
        }
        TopCfccMode::Estimated(config) => select_first_node(graph, config)?.scores,
    };
    // quantize so that values equal up to rounding noise tie exactly
    let key = |u: usize| (scores[u] * 1e10).round() as i64;
    let mut ids: Vec<usize> = (0..graph.n()).collect();
    ids.sort_by_key(|&u| (key(u), u));
    ids.truncate(k);
    Ok(ids)
}
