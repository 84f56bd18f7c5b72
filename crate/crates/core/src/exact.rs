//! Dense and iterative ground truth: pseudoinverse, grounded traces, exact
//! gains, exhaustive optimum, forest counts and a CG/Hutchinson evaluator.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CfcmError, Result};
use crate::forest::RandomStream;
use crate::graph::{Graph, NodeSet, NONE};
use crate::greedy::{IterationRecord, SelectionTrace};

/// Largest graph the dense routines accept.
pub const DENSE_LIMIT: usize = 5000;
/// Largest number of subsets `exhaustive_optimum` will enumerate.
pub const ENUMERATION_CAP: u128 = 10_000_000;
/// Relative tolerance under which two objective values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn check_dense(graph: &Graph) -> Result<()> {
    if graph.n() > DENSE_LIMIT {
        return Err(CfcmError::TooLarge {
            what: "dense computation (use the iterative evaluator)",
            size: graph.n() as u128,
            limit: DENSE_LIMIT as u128,
        });
    }
    Ok(())
}

pub fn laplacian(graph: &Graph) -> Result<DMatrix<f64>> {
    check_dense(graph)?;
    let n = graph.n();
    let mut l = DMatrix::zeros(n, n);
    for u in 0..n {
        l[(u, u)] = graph.degree(u) as f64;
        for &v in graph.neighbors(u) {
            l[(u, v)] = -1.0;
        }
    }
    Ok(l)
}

/// `L` with the rows and columns of `removed` deleted, plus the surviving
/// node of each remaining index.
pub fn grounded_laplacian(graph: &Graph, removed: &NodeSet) -> Result<(DMatrix<f64>, Vec<usize>)> {
    check_dense(graph)?;
    let n = graph.n();
    let kept: Vec<usize> = (0..n).filter(|&u| !removed.contains(u)).collect();
    let mut index = vec![NONE; n];
    for (i, &u) in kept.iter().enumerate() {
        index[u] = i;
    }
    let mut l = DMatrix::zeros(kept.len(), kept.len());
    for (i, &u) in kept.iter().enumerate() {
        l[(i, i)] = graph.degree(u) as f64;
        for &v in graph.neighbors(u) {
            if index[v] != NONE {
                l[(i, index[v])] = -1.0;
            }
        }
    }
    Ok((l, kept))
}

/// Inverse of a symmetric positive definite matrix through Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| CfcmError::Singular(format!("{}x{} matrix", m.nrows(), m.ncols())))
}

/// `L_S^-1` and the node of each index.
pub fn grounded_inverse(graph: &Graph, removed: &NodeSet) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if removed.is_empty() {
        return Err(CfcmError::invalid("grounded inverse needs a non-empty node set"));
    }
    let (l, kept) = grounded_laplacian(graph, removed)?;
    Ok((spd_inverse(&l)?, kept))
}

/// `L^+ = (L + J/n)^-1 - J/n`.
pub fn pseudoinverse(graph: &Graph) -> Result<DMatrix<f64>> {
    let n = graph.n();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let shifted = laplacian(graph)? + &j;
    Ok(spd_inverse(&shifted)? - j)
}

/// `(Tr(L_S^-1), n / Tr(L_S^-1))`.
pub fn group_cfcc(graph: &Graph, set: &NodeSet) -> Result<(f64, f64)> {
    for u in set.iter() {
        graph.check_node(u)?;
    }
    if set.len() == graph.n() {
        return Err(CfcmError::invalid("group covers every node"));
    }
    let (inv, _) = grounded_inverse(graph, set)?;
    let trace = inv.trace();
    Ok((trace, graph.n() as f64 / trace))
}

/// The marginal gain of adding `u` to `S`, computed two independent ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactGain {
    /// `Tr(L_S^-1) - Tr(L_{S+u}^-1)`.
    pub trace_difference: f64,
    /// `(L_S^-2)_uu / (L_S^-1)_uu`.
    pub ratio: f64,
}

pub fn exact_gain(graph: &Graph, set: &NodeSet, u: usize) -> Result<ExactGain> {
    graph.check_node(u)?;
    if set.contains(u) {
        return Err(CfcmError::invalid(format!("node {u} already in the group")));
    }
    let (inv, kept) = grounded_inverse(graph, set)?;
    let i = kept.binary_search(&u).expect("u is kept");
    let col = inv.column(i);
    let ratio = col.dot(&col) / inv[(i, i)];
    let mut bigger = set.clone();
    bigger.insert(u);
    let after = if bigger.len() == graph.n() {
        0.0
    } else {
        grounded_inverse(graph, &bigger)?.0.trace()
    };
    Ok(ExactGain {
        trace_difference: inv.trace() - after,
        ratio,
    })
}

/// Index of the best value, preferring earlier indices within the tie tolerance.
pub(crate) fn best_index(values: impl IntoIterator<Item = f64>, maximize: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let better = match best {
            None => true,
            Some((_, b)) => {
                let tol = TIE_TOLERANCE * b.abs().max(1e-300);
                if maximize {
                    v > b + tol
                } else {
                    v < b - tol
                }
            }
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Lexicographic successor of a `k`-combination of `0..n` whose first
/// element stays fixed; false when exhausted.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 1 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// The `k`-subset with the largest CFCC, lexicographically smallest on ties.
pub fn exhaustive_optimum(graph: &Graph, k: usize) -> Result<(NodeSet, f64)> {
    exhaustive_optimum_with_cap(graph, k, ENUMERATION_CAP)
}

pub fn exhaustive_optimum_with_cap(graph: &Graph, k: usize, cap: u128) -> Result<(NodeSet, f64)> {
    let n = graph.n();
    check_dense(graph)?;
    if k == 0 || k >= n {
        return Err(CfcmError::invalid(format!("k={k} must satisfy 1 <= k < n={n}")));
    }
    let count = binomial(n, k).unwrap_or(u128::MAX);
    if count > cap {
        return Err(CfcmError::TooLarge {
            what: "subset enumeration",
            size: count,
            limit: cap,
        });
    }
    // one block per first element, scanned in lexicographic order
    type Best = Option<(Vec<usize>, f64)>;
    let blocks: Vec<Result<Best>> = (0..=n - k)
        .into_par_iter()
        .map(|first| {
            let mut c: Vec<usize> = (first..first + k).collect();
            let mut best: Best = None;
            loop {
                let set = NodeSet::new(c.iter().copied(), n)?;
                let (_, cfcc) = group_cfcc(graph, &set)?;
                let replace = match &best {
                    None => true,
                    Some((_, b)) => cfcc > b + TIE_TOLERANCE * b.abs(),
                };
                if replace {
                    best = Some((c.clone(), cfcc));
                }
                if !next_combination(&mut c, n) {
                    break;
                }
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for block in blocks {
        if let Some((c, v)) = block? {
            let replace = match &best {
                None => true,
                Some((_, b)) => v > b + TIE_TOLERANCE * b.abs(),
            };
            if replace {
                best = Some((c, v));
            }
        }
    }
    let (c, v) = best.expect("at least one subset");
    Ok((NodeSet::new(c, n)?, v))
}

/// Deterministic greedy using exact quantities: the smallest pseudoinverse
/// diagonal first, then the largest exact marginal gain each round.
pub fn greedy_exact(graph: &Graph, k: usize) -> Result<SelectionTrace> {
    let n = graph.n();
    if k == 0 || k >= n {
        return Err(CfcmError::invalid(format!("k={k} must satisfy 1 <= k < n={n}")));
    }
    let mut trace = SelectionTrace::default();
    let start = Instant::now();
    let lp = pseudoinverse(graph)?;
    let first = best_index((0..n).map(|u| lp[(u, u)]), false).unwrap();
    trace.iterations.push(IterationRecord {
        node: first,
        samples: 0,
        score: lp[(first, first)],
        seconds: start.elapsed().as_secs_f64(),
    });
    let mut set = NodeSet::single(first);
    while set.len() < k {
        let start = Instant::now();
        let (inv, kept) = grounded_inverse(graph, &set)?;
        let gains: Vec<f64> = (0..kept.len())
            .map(|i| {
                let col = inv.column(i);
                col.dot(&col) / inv[(i, i)]
            })
            .collect();
        let i = best_index(gains.iter().copied(), true).unwrap();
        set.insert(kept[i]);
        trace.iterations.push(IterationRecord {
            node: kept[i],
            samples: 0,
            score: gains[i],
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(trace)
}

/// Number of spanning forests rooted at `roots`, `det(L_S)`, by fraction-free
/// elimination in 128-bit integers.
pub fn forest_count(graph: &Graph, roots: &NodeSet) -> Result<u128> {
    let n = graph.n();
    let kept: Vec<usize> = (0..n).filter(|&u| !roots.contains(u)).collect();
    let m = kept.len();
    if m == 0 {
        return Ok(1);
    }
    if m > 200 {
        return Err(CfcmError::TooLarge {
            what: "exact forest count",
            size: m as u128,
            limit: 200,
        });
    }
    let mut a = vec![vec![0i128; m]; m];
    for (i, &u) in kept.iter().enumerate() {
        a[i][i] = graph.degree(u) as i128;
        for (j, &v) in kept.iter().enumerate() {
            if i != j && graph.has_edge(u, v) {
                a[i][j] = -1;
            }
        }
    }
    let overflow = || CfcmError::TooLarge {
        what: "forest count magnitude",
        size: u128::MAX,
        limit: i128::MAX as u128,
    };
    let mut prev: i128 = 1;
    let mut sign: i128 = 1;
    for p in 0..m {
        if a[p][p] == 0 {
            let Some(r) = (p + 1..m).find(|&r| a[r][p] != 0) else {
                return Ok(0);
            };
            a.swap(p, r);
            sign = -sign;
        }
        for i in p + 1..m {
            for j in p + 1..m {
                let x = a[i][j]
                    .checked_mul(a[p][p])
                    .and_then(|x| a[i][p].checked_mul(a[p][j]).and_then(|y| x.checked_sub(y)))
                    .ok_or_else(overflow)?;
                a[i][j] = x / prev;
            }
            a[i][p] = 0;
        }
        prev = a[p][p];
    }
    let det = sign * a[m - 1][m - 1];
    u128::try_from(det).map_err(|_| CfcmError::Singular("negative forest count".into()))
}

/// Natural log of the forest count, for graphs beyond exact integer range.
pub fn log_forest_count(graph: &Graph, roots: &NodeSet) -> Result<f64> {
    let (l, _) = grounded_laplacian(graph, roots)?;
    let chol = l
        .cholesky()
        .ok_or_else(|| CfcmError::Singular("grounded Laplacian".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Single-node CFCC `n / (Tr L^+ + n L^+_uu)` for every node.
pub fn single_node_cfcc(graph: &Graph) -> Result<Vec<f64>> {
    let lp = pseudoinverse(graph)?;
    let n = graph.n() as f64;
    let tr = lp.trace();
    Ok((0..graph.n()).map(|u| n / (tr + n * lp[(u, u)])).collect())
}

/// Effective resistance between `i` and `j` from a pseudoinverse.
pub fn resistance(lpinv: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    lpinv[(i, i)] + lpinv[(j, j)] - 2.0 * lpinv[(i, j)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeCfcc {
    pub trace: f64,
    pub cfcc: f64,
    /// Standard error of `trace` across probes.
    pub trace_std_error: f64,
    /// Delta-method standard error of `cfcc`.
    pub cfcc_std_error: f64,
    pub probes: usize,
}

/// Matrix-free `y = L_S x` over the kept nodes.
struct GroundedOperator<'g> {
    graph: &'g Graph,
    kept: Vec<usize>,
    index: Vec<usize>,
}

impl GroundedOperator<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, &u) in self.kept.iter().enumerate() {
            let mut acc = self.graph.degree(u) as f64 * x[i];
            for &v in self.graph.neighbors(u) {
                let j = self.index[v];
                if j != NONE {
                    acc -= x[j];
                }
            }
            y[i] = acc;
        }
    }
}

/// Solves `L_S x = b` by conjugate gradients to relative residual `tol`.
fn conjugate_gradient(op: &GroundedOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let m = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; m];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; m];
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        op.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..m {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(CfcmError::NoConvergence {
            iterations: max_iter,
            residual: rr.sqrt() / bnorm,
        })
    }
}

/// Hutchinson estimate of `Tr(L_S^-1)` with `probes` Rademacher vectors,
/// each solved by conjugate gradients. Scales to graphs beyond the dense limit.
pub fn cfcc_iterative(graph: &Graph, set: &NodeSet, probes: usize, tol: f64, seed: u64) -> Result<IterativeCfcc> {
    use rand::Rng;
    if set.is_empty() {
        return Err(CfcmError::invalid("group must be non-empty"));
    }
    if probes == 0 {
        return Err(CfcmError::invalid("need at least one probe"));
    }
    let n = graph.n();
    let kept: Vec<usize> = (0..n).filter(|&u| !set.contains(u)).collect();
    let mut index = vec![NONE; n];
    for (i, &u) in kept.iter().enumerate() {
        index[u] = i;
    }
    let op = GroundedOperator { graph, kept, index };
    let m = op.kept.len();
    let max_iter = (10 * m).max(1000);
    let samples: Vec<f64> = (0..probes)
        .into_par_iter()
        .map(|p| {
            let mut rng = RandomStream::new(seed, p as u64).rng();
            let z: Vec<f64> = (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let x = conjugate_gradient(&op, &z, tol, max_iter)?;
            Ok(z.iter().zip(&x).map(|(a, b)| a * b).sum())
        })
        .collect::<Result<_>>()?;
    let mut stats = crate::stats::RunningStats::default();
    samples.iter().for_each(|&s| stats.push(s));
    let trace = stats.mean();
    let se = (stats.sample_variance() / probes as f64).sqrt();
    let cfcc = n as f64 / trace;
    Ok(IterativeCfcc {
        trace,
        cfcc,
        trace_std_error: se,
        cfcc_std_error: cfcc * se / trace,
        probes,
    })
}

/// Dense solve helper used by tests: `L_S^-1 b`.
pub fn grounded_solve(graph: &Graph, set: &NodeSet, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (l, _) = grounded_laplacian(graph, set)?;
    l.cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| CfcmError::Singular("grounded Laplacian".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;
    use approx::assert_relative_eq;

    fn set(ids: &[usize], n: usize) -> NodeSet {
        NodeSet::new(ids.iter().copied(), n).unwrap()
    }

    #[test]
    fn p3_pseudoinverse_diagonal() {
        let lp = pseudoinverse(&generators::path(3).unwrap()).unwrap();
        let expect = [5.0 / 9.0, 2.0 / 9.0, 5.0 / 9.0];
        for u in 0..3 {
            assert_relative_eq!(lp[(u, u)], expect[u], epsilon = 1e-12);
            assert!(lp.row(u).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn k3_pseudoinverse_diagonal() {
        let lp = pseudoinverse(&generators::complete(3).unwrap()).unwrap();
        for u in 0..3 {
            assert_relative_eq!(lp[(u, u)], 2.0 / 9.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn group_cfcc_examples() {
        let p3 = generators::path(3).unwrap();
        let (t, c) = group_cfcc(&p3, &set(&[1], 3)).unwrap();
        assert_relative_eq!(t, 2.0, epsilon = 1e-12);
        assert_relative_eq!(c, 1.5, epsilon = 1e-12);
        let k3 = generators::complete(3).unwrap();
        let (t, c) = group_cfcc(&k3, &set(&[0], 3)).unwrap();
        assert_relative_eq!(t, 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(c, 9.0 / 4.0, epsilon = 1e-12);
        let p4 = generators::path(4).unwrap();
        let (t, _) = group_cfcc(&p4, &set(&[0, 1, 2], 4)).unwrap();
        assert_relative_eq!(t, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_gain_examples() {
        let k3 = generators::complete(3).unwrap();
        let g = exact_gain(&k3, &set(&[0], 3), 1).unwrap();
        assert_relative_eq!(g.ratio, 5.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(g.trace_difference, 5.0 / 6.0, epsilon = 1e-12);
        let p3 = generators::path(3).unwrap();
        let g = exact_gain(&p3, &set(&[0], 3), 1).unwrap();
        assert_relative_eq!(g.ratio, 2.0, epsilon = 1e-12);
        // removing u leaves the last node alone: gain is its whole contribution
        let g = exact_gain(&p3, &set(&[0, 1], 3), 2).unwrap();
        assert_relative_eq!(g.trace_difference, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exhaustive_examples() {
        let (s, c) = exhaustive_optimum(&generators::path(3).unwrap(), 1).unwrap();
        assert_eq!(s.as_slice(), &[1]);
        assert_relative_eq!(c, 1.5, epsilon = 1e-12);
        let (s, c) = exhaustive_optimum(&generators::path(4).unwrap(), 2).unwrap();
        assert_eq!(s.as_slice(), &[0, 3]);
        assert_relative_eq!(c, 3.0, epsilon = 1e-12);
        let (s, c) = exhaustive_optimum(&generators::complete(3).unwrap(), 1).unwrap();
        assert_eq!(s.as_slice(), &[0]);
        assert_relative_eq!(c, 2.25, epsilon = 1e-12);
    }

    #[test]
    fn exhaustive_cap_is_enforced() {
        let g = generators::path(30).unwrap();
        assert!(matches!(
            exhaustive_optimum_with_cap(&g, 10, 1000),
            Err(CfcmError::TooLarge { .. })
        ));
    }

    #[test]
    fn greedy_examples() {
        let p4 = generators::path(4).unwrap();
        let t = greedy_exact(&p4, 2).unwrap();
        assert_eq!(t.nodes(), vec![1, 3]);
        assert_relative_eq!(t.iterations[1].score, 2.5, epsilon = 1e-12);
        let (_, c) = group_cfcc(&p4, &t.set(4)).unwrap();
        assert_relative_eq!(c, 8.0 / 3.0, epsilon = 1e-12);
        assert_eq!(greedy_exact(&generators::path(3).unwrap(), 1).unwrap().nodes(), vec![1]);
        assert_eq!(
            greedy_exact(&generators::complete(3).unwrap(), 2).unwrap().nodes(),
            vec![0, 1]
        );
    }

    #[test]
    fn greedy_to_n_minus_one() {
        let g = generators::star(4).unwrap();
        let t = greedy_exact(&g, 4).unwrap();
        let s = t.set(5);
        let survivor = (0..5).find(|&u| !s.contains(u)).unwrap();
        let (tr, _) = group_cfcc(&g, &s).unwrap();
        assert_relative_eq!(tr, 1.0 / g.degree(survivor) as f64, epsilon = 1e-12);
    }

    #[test]
    fn forest_count_examples() {
        assert_eq!(
            forest_count(&generators::complete(3).unwrap(), &set(&[0], 3)).unwrap(),
            3
        );
        assert_eq!(forest_count(&generators::path(3).unwrap(), &set(&[1], 3)).unwrap(), 1);
        assert_eq!(forest_count(&generators::star(3).unwrap(), &set(&[0], 4)).unwrap(), 1);
        // Cayley: K5 has 125 spanning trees
        let k5 = generators::complete(5).unwrap();
        assert_eq!(forest_count(&k5, &set(&[0], 5)).unwrap(), 125);
        assert_relative_eq!(
            log_forest_count(&k5, &set(&[0], 5)).unwrap(),
            125f64.ln(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn iterative_matches_dense() {
        let p3 = generators::path(3).unwrap();
        let r = cfcc_iterative(&p3, &set(&[1], 3), 3, 1e-12, 0).unwrap();
        assert_relative_eq!(r.cfcc, 1.5, epsilon = 1e-12);
        let g = generators::random_connected(40, 0.1, 1).unwrap();
        let s = set(&[0], 40);
        let (t, _) = group_cfcc(&g, &s).unwrap();
        let r = cfcc_iterative(&g, &s, 2000, 1e-10, 3).unwrap();
        assert!(
            (r.trace - t).abs() < 4.0 * r.trace_std_error + 1e-9,
            "{} vs {t}",
            r.trace
        );
    }

    #[test]
    fn resistance_matches_grounded_inverse() {
        let g = generators::random_connected(15, 0.2, 9).unwrap();
        let lp = pseudoinverse(&g).unwrap();
        for i in 0..15 {
            let (inv, kept) = grounded_inverse(&g, &set(&[i], 15)).unwrap();
            for (jj, &j) in kept.iter().enumerate() {
                assert_relative_eq!(resistance(&lp, i, j), inv[(jj, jj)], epsilon = 1e-10);
            }
        }
    }
}
