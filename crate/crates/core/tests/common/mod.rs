//! Fixtures and small-graph helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use cfcm::estimators::Sketch;
use cfcm::exact::{grounded_inverse, laplacian};
use cfcm::graph::{from_dense_edges, load_edge_list, LoadOptions};
use cfcm::projector::JlProjector;
use cfcm::schur::{assemble_schur, combine_blocks, dense_schur_complement, exact_rooted_probabilities};
use cfcm::{generators, Graph, NodeSet};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn fixture(name: &str) -> Graph {
    load_edge_list(data_path(&format!("{name}.txt")), LoadOptions::default()).expect("fixture loads")
}

/// Path to the Euroroads edge list if `CFCM_EUROROADS` points at one.
pub fn euroroads_path() -> Option<PathBuf> {
    std::env::var_os("CFCM_EUROROADS")
        .map(PathBuf::from)
        .filter(|p| p.exists())
}

fn pair_index(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            pairs.push((u, v));
        }
    }
    pairs
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn connected(n: usize, mask: u32, pairs: &[(usize, usize)]) -> bool {
    let mut seen = 1u32;
    let mut grew = true;
    while grew {
        grew = false;
        for (i, &(u, v)) in pairs.iter().enumerate() {
            if mask >> i & 1 == 1 && (seen >> u & 1) != (seen >> v & 1) {
                seen |= 1 << u | 1 << v;
                grew = true;
            }
        }
    }
    seen == (1u32 << n) - 1
}

/// One representative of every connected graph on `n` nodes up to
/// isomorphism, with `n >= 2`.
pub fn connected_graphs(n: usize) -> Vec<Graph> {
    let pairs = pair_index(n);
    let mut id = vec![vec![0usize; n]; n];
    for (i, &(u, v)) in pairs.iter().enumerate() {
        id[u][v] = i;
        id[v][u] = i;
    }
    let perms = permutations(n);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for mask in 1u32..1 << pairs.len() {
        if !connected(n, mask, &pairs) {
            continue;
        }
        let canon = perms
            .iter()
            .map(|p| {
                pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .fold(0u32, |acc, (_, &(u, v))| acc | 1 << id[p[u]][p[v]])
            })
            .min()
            .unwrap();
        if seen.insert(canon) {
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            out.push(from_dense_edges(n, &edges).unwrap());
        }
    }
    out
}

/// `Sc(L onto keep)` of the full Laplacian, indexed by `keep` in order.
fn full_schur(g: &Graph, keep: &[usize]) -> DMatrix<f64> {
    let l = laplacian(g).unwrap();
    let rest: Vec<usize> = (0..g.n()).filter(|u| !keep.contains(u)).collect();
    let pick = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |a, b| l[(r[a], c[b])]);
    let (kk, kr, rr) = (pick(keep, keep), pick(keep, &rest), pick(&rest, &rest));
    kk - &kr * rr.try_inverse().unwrap() * kr.transpose()
}

pub fn random_schur_instance(seed: u64) -> (Graph, NodeSet, NodeSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8 + (seed as usize * 7) % 43;
    let g = generators::random_connected(n, 0.08 + (seed % 5) as f64 * 0.05, seed).unwrap();
    let ns = 1 + seed as usize % 3;
    let nt = 1 + seed as usize % 5;
    let ids = sample(&mut rng, n, ns + nt).into_vec();
    let s = NodeSet::new(ids[..ns].iter().copied(), n).unwrap();
    let t = NodeSet::new(ids[ns..].iter().copied(), n).unwrap();
    (g, s, t)
}

/// Max deviation of the assembled block (exact F) from the dense complement.
pub fn assembly_error(g: &Graph, s: &NodeSet, t: &NodeSet) -> f64 {
    let f = exact_rooted_probabilities(g, s, t).unwrap();
    let block = assemble_schur(g, &f, s, t).unwrap();
    (&block.m - dense_schur_complement(g, s, t).unwrap()).amax()
}

/// Eliminating down to `S + T` and then grounding `S` gives `Sc(L_S onto T)`.
pub fn two_stage_error(g: &Graph, s: &NodeSet, t: &NodeSet) -> f64 {
    let keep: Vec<usize> = s.union(t).iter().collect();
    let big = full_schur(g, &keep);
    let ti: Vec<usize> = t.iter().map(|x| keep.iter().position(|&k| k == x).unwrap()).collect();
    let sub = DMatrix::from_fn(ti.len(), ti.len(), |a, b| big[(ti[a], ti[b])]);
    (sub - dense_schur_complement(g, s, t).unwrap()).amax()
}

/// Max deviation of `combine_blocks` with exact inputs from `L_S^-1`.
pub fn block_error(g: &Graph, s: &NodeSet, t: &NodeSet) -> f64 {
    let n = g.n();
    let candidates: Vec<usize> = (0..n).filter(|u| !s.contains(*u)).collect();
    let proj = JlProjector::identity(&candidates, n).unwrap();
    let (full, kept) = grounded_inverse(g, s).unwrap();
    let (uu, ukept) = grounded_inverse(g, &s.union(t)).unwrap();

    let mut z_u = vec![0.0; n];
    let mut y_u = Sketch::zeros(n, proj.w());
    for (a, &u) in ukept.iter().enumerate() {
        z_u[u] = uu[(a, a)];
        for (b, &v) in ukept.iter().enumerate() {
            let j = candidates.binary_search(&v).unwrap();
            y_u.column_mut(u)[j] = uu[(b, a)];
        }
    }
    let f = exact_rooted_probabilities(g, s, t).unwrap();
    let mut block = assemble_schur(g, &f, s, t).unwrap();
    block.invert().unwrap();
    let c = combine_blocks(&z_u, &y_u, &f, &block, &proj, s).unwrap();
    let mut err: f64 = 0.0;
    for (a, &u) in kept.iter().enumerate() {
        err = err.max((c.z[u] - full[(a, a)]).abs());
        for (b, &v) in kept.iter().enumerate() {
            let j = candidates.binary_search(&v).unwrap();
            err = err.max((c.y.column(u)[j] - full[(b, a)]).abs());
        }
    }
    err
}
