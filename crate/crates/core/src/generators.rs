//! Small deterministic graph families used by tests, benchmarks and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{from_dense_edges, Graph};

pub fn path(n: usize) -> Result<Graph> {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    from_dense_edges(n, &edges)
}

pub fn cycle(n: usize) -> Result<Graph> {
    let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    if n > 2 {
        edges.push((n - 1, 0));
    }
    from_dense_edges(n, &edges)
}

/// Star with center 0 and `leaves` leaves.
pub fn star(leaves: usize) -> Result<Graph> {
    let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
    from_dense_edges(leaves + 1, &edges)
}

pub fn complete(n: usize) -> Result<Graph> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            edges.push((u, v));
        }
    }
    from_dense_edges(n, &edges)
}

/// Preferential attachment: each new node links to `m` distinct earlier nodes
/// chosen proportionally to degree. The seed graph is a clique on `m + 1` nodes.
pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Graph> {
    let m = m.max(1);
    let core = (m + 1).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(n * m);
    // each endpoint appears once per incident edge, so uniform draws are degree-biased
    let mut endpoints = Vec::with_capacity(2 * n * m);
    for u in 0..core {
        for v in u + 1..core {
            edges.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    let mut picked = Vec::with_capacity(m);
    for u in core..n {
        picked.clear();
        while picked.len() < m {
            let v = endpoints[rng.random_range(0..endpoints.len())];
            if !picked.contains(&v) {
                picked.push(v);
            }
        }
        for &v in &picked {
            edges.push((v, u));
            endpoints.extend([u, v]);
        }
    }
    from_dense_edges(n, &edges)
}

/// A random recursive tree (each node attaches to a uniform earlier node) plus each remaining
/// pair independently with probability `p`. Always connected.
pub fn random_connected(n: usize, p: f64, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 1..n {
        edges.push((rng.random_range(0..u), u));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p.clamp(0.0, 1.0)) {
                edges.push((u, v));
            }
        }
    }
    from_dense_edges(n, &edges)
}
