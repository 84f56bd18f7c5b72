//! Schur-complement elimination onto a small root set `T`.
//!
//! Forests are rooted at `S + T`. The probability that `u` hangs below
//! `t in T` is entry `(u, t)` of `F = -L_UU^-1 L_UT`, which is all that is
//! needed to assemble the Schur complement of `L_S` onto `T` and to lift the
//! `U` block estimates back to the full grounded inverse.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use crate::error::{CfcmError, Result};
use crate::estimators::Sketch;
use crate::exact;
use crate::forest::SpanningForest;
use crate::graph::{Graph, NodeSet, NONE};
use crate::projector::JlProjector;

type DegreeHeap = BinaryHeap<(usize, Reverse<usize>)>;

fn heap_max(heap: &mut DegreeHeap, degree: &[usize], removed: &[bool]) -> Option<(usize, usize)> {
    while let Some(&(d, Reverse(u))) = heap.peek() {
        if removed[u] || d != degree[u] {
            heap.pop();
        } else {
            return Some((d, u));
        }
    }
    None
}

/// Repeatedly removes the current maximum-degree node (lowest id on ties).
/// Returns each peeled node with the maximum degree left after removing it,
/// and the initial maximum degree. Stops once `stop(peeled, dmax)` holds.
fn peel(graph: &Graph, mut stop: impl FnMut(usize, usize) -> bool) -> (Vec<(usize, usize)>, usize) {
    let n = graph.n();
    let mut degree = graph.degrees();
    let mut removed = vec![false; n];
    let mut heap: DegreeHeap = (0..n).map(|u| (degree[u], Reverse(u))).collect();
    let d0 = heap_max(&mut heap, &degree, &removed).map_or(0, |(d, _)| d);
    let mut out = Vec::new();
    if stop(0, d0) {
        return (out, d0);
    }
    while let Some((_, u)) = heap_max(&mut heap, &degree, &removed) {
        removed[u] = true;
        for &v in graph.neighbors(u) {
            if !removed[v] {
                degree[v] -= 1;
                heap.push((degree[v], Reverse(v)));
            }
        }
        let d = heap_max(&mut heap, &degree, &removed).map_or(0, |(d, _)| d);
        out.push((u, d));
        if stop(out.len(), d) {
            break;
        }
    }
    (out, d0)
}

/// Peels the current maximum-degree node (lowest id on ties) and keeps the
/// prefix whose size is closest to the maximum degree left behind; ties go
/// to the smaller prefix.
pub fn select_root_set(graph: &Graph) -> NodeSet {
    let (peeled, d0) = peel(graph, |t, d| t > d);
    let mut best = (d0, 0usize);
    for (i, &(_, d)) in peeled.iter().enumerate() {
        let t = i + 1;
        if t.abs_diff(d) < best.0 {
            best = (t.abs_diff(d), t);
        }
    }
    NodeSet::new(peeled[..best.1].iter().map(|p| p.0), graph.n()).expect("peeled ids are valid")
}

/// The first `count` nodes of the peeling order.
pub fn peel_prefix(graph: &Graph, count: usize) -> NodeSet {
    let (peeled, _) = peel(graph, |t, _| t >= count);
    NodeSet::new(peeled.into_iter().map(|p| p.0), graph.n()).expect("peeled ids are valid")
}

/// How often each `U` node's tree is rooted at each node of `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedCounts {
    s: NodeSet,
    t: NodeSet,
    t_index: Vec<usize>,
    total: u64,
    /// Row-major `n x |T|`; rows of `S` and `T` stay zero.
    counts: Vec<u64>,
}

impl RootedCounts {
    pub fn new(n: usize, s: &NodeSet, t: &NodeSet) -> Result<Self> {
        if t.iter().any(|x| s.contains(x)) {
            return Err(CfcmError::invalid("T must be disjoint from S"));
        }
        let mut t_index = vec![NONE; n];
        for (i, x) in t.iter().enumerate() {
            if x >= n {
                return Err(CfcmError::NodeOutOfRange { node: x, n });
            }
            t_index[x] = i;
        }
        Ok(RootedCounts {
            s: s.clone(),
            t: t.clone(),
            t_index,
            total: 0,
            counts: vec![0; n * t.len()],
        })
    }

    pub fn t(&self) -> &NodeSet {
        &self.t
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Position of `x` in `T`.
    pub fn t_index(&self, x: usize) -> Option<usize> {
        match self.t_index.get(x) {
            Some(&i) if i != NONE => Some(i),
            _ => None,
        }
    }

    pub fn count(&self, u: usize, ti: usize) -> u64 {
        self.counts[u * self.t.len() + ti]
    }

    /// Folds in one forest. `labels` must be the forest's root labels.
    pub fn track_labels(&mut self, forest: &SpanningForest, labels: &[usize]) -> Result<()> {
        let k = self.t.len();
        if self.s.iter().chain(self.t.iter()).any(|r| !forest.is_root(r))
            || forest.order().len() + self.s.len() + k != forest.n()
        {
            return Err(CfcmError::RootMismatch);
        }
        for &u in forest.order() {
            let ti = self.t_index[labels[u]];
            if ti != NONE {
                self.counts[u * k + ti] += 1;
            }
        }
        self.total += 1;
        Ok(())
    }

    pub fn track_roots(&mut self, forest: &SpanningForest) -> Result<()> {
        let labels = forest.root_labels();
        self.track_labels(forest, &labels)
    }

    pub fn merge(&mut self, other: &RootedCounts) -> Result<()> {
        if self.s != other.s || self.t != other.t || self.counts.len() != other.counts.len() {
            return Err(CfcmError::RootMismatch);
        }
        self.total += other.total;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `n x |T|` matrix of empirical rooted probabilities.
    pub fn probabilities(&self) -> DMatrix<f64> {
        let k = self.t.len();
        let n = self.counts.len().checked_div(k).unwrap_or(self.t_index.len());
        let t = self.total.max(1) as f64;
        DMatrix::from_fn(n, k, |u, i| self.counts[u * k + i] as f64 / t)
    }
}

/// Exact rooted probabilities `F = -L_UU^-1 L_UT`, embedded as an `n x |T|`
/// matrix with zero rows outside `U`.
pub fn exact_rooted_probabilities(graph: &Graph, s: &NodeSet, t: &NodeSet) -> Result<DMatrix<f64>> {
    let n = graph.n();
    let removed = s.union(t);
    let mut f = DMatrix::zeros(n, t.len());
    if removed.len() == n {
        return Ok(f);
    }
    let (inv, kept) = exact::grounded_inverse(graph, &removed)?;
    for (ti, x) in t.iter().enumerate() {
        // column -L_UT e_t is the indicator of U-neighbors of t
        for (a, &u) in kept.iter().enumerate() {
            let mut acc = 0.0;
            for &v in graph.neighbors(x) {
                if let Ok(b) = kept.binary_search(&v) {
                    acc += inv[(a, b)];
                }
            }
            f[(u, ti)] = acc;
        }
    }
    Ok(f)
}

/// Assembled Schur complement over `T` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurBlock {
    pub t: NodeSet,
    pub m: DMatrix<f64>,
    pub m_inv: Option<DMatrix<f64>>,
}

/// `M_ij = L_ij - sum over U-neighbors u of i of F(u, j)`, then symmetrized.
pub fn assemble_schur(graph: &Graph, f: &DMatrix<f64>, s: &NodeSet, t: &NodeSet) -> Result<SchurBlock> {
    let k = t.len();
    if f.ncols() != k || f.nrows() != graph.n() {
        return Err(CfcmError::DimensionMismatch(format!(
            "rooted probabilities are {}x{}, expected {}x{k}",
            f.nrows(),
            f.ncols(),
            graph.n()
        )));
    }
    let nodes = t.as_slice();
    let mut m = DMatrix::zeros(k, k);
    for (a, &i) in nodes.iter().enumerate() {
        m[(a, a)] = graph.degree(i) as f64;
        for &v in graph.neighbors(i) {
            if let Some(b) = t.index_of(v) {
                m[(a, b)] -= 1.0;
            } else if !s.contains(v) {
                for b in 0..k {
                    m[(a, b)] -= f[(v, b)];
                }
            }
        }
    }
    // Symmetrizing alone can break diagonal dominance, so the diagonal is
    // rebuilt as the off-diagonal mass plus each row's leak into S. The leak
    // is nonnegative, which keeps the block positive semidefinite, and with
    // exact probabilities this reproduces the block unchanged.
    let leak: Vec<f64> = (0..k).map(|a| m.row(a).sum().max(0.0)).collect();
    let mut sym = (&m + m.transpose()) * 0.5;
    for a in 0..k {
        let off: f64 = (0..k).filter(|&b| b != a).map(|b| -sym[(a, b)]).sum();
        sym[(a, a)] = off + leak[a];
    }
    Ok(SchurBlock {
        t: t.clone(),
        m: sym,
        m_inv: None,
    })
}

/// Cholesky inverse; fails on singular or indefinite input.
pub fn invert_schur(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(CfcmError::DimensionMismatch("Schur block is not square".into()));
    }
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let inv = exact::spd_inverse(m)?;
    let resid = (m * &inv - DMatrix::identity(m.nrows(), m.nrows())).amax();
    if !resid.is_finite() || resid > 1e-8 {
        return Err(CfcmError::Singular(format!("Schur inverse residual {resid:e}")));
    }
    Ok(inv)
}

impl SchurBlock {
    pub fn invert(&mut self) -> Result<&DMatrix<f64>> {
        let inv = invert_schur(&self.m)?;
        Ok(self.m_inv.insert(inv))
    }
}

/// Full grounded-inverse estimates over `V \ S`, lifted from the `U` block.
#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    /// Diagonal estimates; zero on `S`.
    pub z: Vec<f64>,
    pub y: Sketch,
    /// `(W F + Q) M^-1`, `w x |T|`.
    pub lift: DMatrix<f64>,
    /// `F M^-1`, `n x |T|`, with zero rows outside `U`.
    pub f_minv: DMatrix<f64>,
}

/// Lifts `U` block estimates to all of `V \ S`:
/// `z_u += F_u M^-1 F_u^T`, `y_u += lift F_u^T` on `U`, and
/// `z_t = (M^-1)_tt`, `y_t = lift e_t` on `T`.
pub fn combine_blocks(
    z_u: &[f64],
    y_u: &Sketch,
    f: &DMatrix<f64>,
    block: &SchurBlock,
    projector: &JlProjector,
    s: &NodeSet,
) -> Result<Combined> {
    let n = z_u.len();
    let t = &block.t;
    let k = t.len();
    let w = projector.w();
    if y_u.w() != w || f.nrows() != n || f.ncols() != k {
        return Err(CfcmError::DimensionMismatch("combine_blocks inputs disagree".into()));
    }
    let mut z = z_u.to_vec();
    let mut y = y_u.clone();
    if k == 0 {
        return Ok(Combined {
            z,
            y,
            lift: DMatrix::zeros(w, 0),
            f_minv: DMatrix::zeros(n, 0),
        });
    }
    let m_inv = block
        .m_inv
        .as_ref()
        .ok_or_else(|| CfcmError::invalid("Schur block has not been inverted"))?;
    if m_inv.nrows() != k {
        return Err(CfcmError::DimensionMismatch("Schur inverse size".into()));
    }
    let mut fu = f.clone();
    for u in (0..n).filter(|&u| s.contains(u) || t.contains(u)) {
        fu.row_mut(u).fill(0.0);
    }

    // B = W F + Q, with W as a dense w x n matrix (zero columns off the candidates)
    let mut wmat = DMatrix::zeros(w, n);
    for u in projector.candidates() {
        wmat.column_mut(*u).copy_from_slice(&projector.column(*u));
    }
    let mut b = &wmat * &fu;
    for (ti, x) in t.iter().enumerate() {
        let mut col = b.column_mut(ti);
        col += wmat.column(x);
    }
    let lift = &b * m_inv;
    let f_minv = &fu * m_inv;

    for (u, zu) in z.iter_mut().enumerate().take(n) {
        *zu += fu.row(u).dot(&f_minv.row(u));
    }
    if w > 0 {
        y.as_matrix_mut().gemm(1.0, &lift, &fu.transpose(), 1.0);
    }
    for (ti, x) in t.iter().enumerate() {
        z[x] = m_inv[(ti, ti)];
        y.column_mut(x).copy_from_slice(lift.column(ti).as_slice());
    }
    Ok(Combined { z, y, lift, f_minv })
}

/// Dense `Sc(L_S onto T)` for tests and diagnostics.
pub fn dense_schur_complement(graph: &Graph, s: &NodeSet, t: &NodeSet) -> Result<DMatrix<f64>> {
    let (l, kept) = exact::grounded_laplacian(graph, s)?;
    let ti: Vec<usize> = t.iter().map(|x| kept.binary_search(&x).unwrap()).collect();
    let ui: Vec<usize> = (0..kept.len()).filter(|i| !t.contains(kept[*i])).collect();
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |a, b| l[(rows[a], cols[b])]);
    let ltt = pick(&ti, &ti);
    if ui.is_empty() {
        return Ok(ltt);
    }
    let luu_inv = exact::spd_inverse(&pick(&ui, &ui))?;
    let ltu = pick(&ti, &ui);
    Ok(&ltt - &ltu * luu_inv * ltu.transpose())
}
