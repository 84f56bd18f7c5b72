//! Forest tallies and the unbiased estimators built from them.
//!
//! For forests rooted at `S`, `P(parent(u) = b) - P(parent(b) = u)` equals
//! `(L_S^-1)_uu - (L_S^-1)_bb` on every edge, so diagonal entries follow by
//! telescoping along any path from `S`. The same argument with subtree sums
//! weighted by a projector row yields sketched columns of `L_S^-1`.

use nalgebra::{DMatrixView, DMatrixViewMut};

use crate::error::{CfcmError, Result};
use crate::forest::SpanningForest;
use crate::graph::{BfsStructure, Graph, NodeSet, NONE};
use crate::projector::JlProjector;

/// Per-directed-edge tallies across forests rooted at one node set. Slot
/// indices follow the graph's adjacency layout; tallies are kept for a chosen
/// subset of slots (all of them by default).
#[derive(Debug, Clone)]
pub struct EdgeCounters {
    roots: NodeSet,
    w: usize,
    total: u64,
    /// Row of each slot, or `NONE` when the slot is not kept.
    row_of: Vec<usize>,
    /// `(slot, tail node)` of each kept row, in row order.
    kept: Vec<(usize, usize)>,
    count: Vec<u64>,
    ones_agg: Vec<u64>,
    /// Row-major `rows x w`.
    agg: Vec<i64>,
    // scratch from the last accumulated forest
    sub_ones: Vec<u64>,
    /// Subtree sketches of the last forest; entries are bounded by `n`.
    sub_w: Vec<i32>,
}

impl PartialEq for EdgeCounters {
    fn eq(&self, other: &Self) -> bool {
        self.roots == other.roots
            && self.w == other.w
            && self.total == other.total
            && self.kept == other.kept
            && self.count == other.count
            && self.ones_agg == other.ones_agg
            && self.agg == other.agg
    }
}

impl EdgeCounters {
    /// Counters on every slot for forests rooted at `roots`, with `w` sketch rows.
    pub fn new(graph: &Graph, roots: &NodeSet, w: usize) -> Self {
        Self::with_slots(graph, roots, w, 0..graph.slot_count())
    }

    /// Counters on `slots` only. Estimating along a BFS tree needs just its
    /// edges, which keeps memory at `O(n w)` instead of `O(m w)`; listing
    /// slots by tail node keeps the per-forest update sequential.
    pub fn with_slots(graph: &Graph, roots: &NodeSet, w: usize, slots: impl IntoIterator<Item = usize>) -> Self {
        assert!(graph.n() <= i32::MAX as usize, "subtree sketches are stored as i32");
        let count = graph.slot_count();
        let mut tail = vec![0; count];
        for u in 0..graph.n() {
            let o = graph.slot_offset(u);
            tail[o..o + graph.degree(u)].fill(u);
        }
        let mut row_of = vec![NONE; count];
        let mut kept = Vec::new();
        for slot in slots {
            if row_of[slot] == NONE {
                row_of[slot] = kept.len();
                kept.push((slot, tail[slot]));
            }
        }
        let rows = kept.len();
        EdgeCounters {
            roots: roots.clone(),
            w,
            total: 0,
            row_of,
            kept,
            count: vec![0; rows],
            ones_agg: vec![0; rows],
            agg: vec![0; rows * w],
            sub_ones: vec![0; graph.n()],
            sub_w: vec![0; graph.n() * w],
        }
    }

    pub fn roots(&self) -> &NodeSet {
        &self.roots
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn w(&self) -> usize {
        self.w
    }

    fn row(&self, slot: usize) -> Option<usize> {
        match self.row_of.get(slot) {
            Some(&r) if r != NONE => Some(r),
            _ => None,
        }
    }

    /// Forests using slot `slot` as a parent edge; `None` if not kept.
    pub fn count_slot(&self, slot: usize) -> Option<u64> {
        self.row(slot).map(|r| self.count[r])
    }

    /// Summed subtree sizes below slot `slot`; `None` if not kept.
    pub fn ones_slot(&self, slot: usize) -> Option<u64> {
        self.row(slot).map(|r| self.ones_agg[r])
    }

    /// Integer sketch aggregates of slot `slot`, before projector scaling;
    /// `None` if not kept.
    pub fn agg_slot(&self, slot: usize) -> Option<&[i64]> {
        self.row(slot).map(|r| &self.agg[r * self.w..(r + 1) * self.w])
    }

    /// Count on the directed edge `a -> b`; `None` if it is not a kept edge.
    pub fn count(&self, graph: &Graph, a: usize, b: usize) -> Option<u64> {
        self.count_slot(graph.slot(a, b)?)
    }

    pub fn ones_agg(&self, graph: &Graph, a: usize, b: usize) -> Option<u64> {
        self.ones_slot(graph.slot(a, b)?)
    }

    /// Adds one forest: subtree sums are carried upward in the forest's
    /// child-before-parent order, then each kept slot used by the forest is
    /// credited in row order.
    pub fn accumulate_forest(&mut self, forest: &SpanningForest, projector: Option<&JlProjector>) -> Result<()> {
        let n = forest.n();
        if n != self.sub_ones.len() {
            return Err(CfcmError::DimensionMismatch(format!(
                "forest over {n} nodes, counters over {}",
                self.sub_ones.len()
            )));
        }
        if forest.order().len() + self.roots.len() != n || self.roots.iter().any(|r| !forest.is_root(r)) {
            return Err(CfcmError::RootMismatch);
        }
        let w = self.w;
        if let Some(p) = projector {
            if p.w() != w {
                return Err(CfcmError::DimensionMismatch(format!(
                    "projector width {} but counters hold {w} rows",
                    p.w()
                )));
            }
        } else if w != 0 {
            return Err(CfcmError::DimensionMismatch(
                "counters hold sketch rows but no projector given".into(),
            ));
        }

        for u in 0..n {
            self.sub_ones[u] = !forest.is_root(u) as u64;
        }
        if w > 0 {
            self.sub_w.fill(0);
            let p = projector.expect("checked above");
            for u in (0..n).filter(|&u| !forest.is_root(u)) {
                p.add_column(u, &mut self.sub_w[u * w..(u + 1) * w]);
            }
        }
        let parent = forest.raw_parent();
        for &u in forest.order() {
            let p = parent[u];
            if forest.is_root(p) {
                continue;
            }
            self.sub_ones[p] += self.sub_ones[u];
            if w > 0 {
                // entries stay within n, so wrapping adds are exact and vectorize
                let (src, dst) = row_pair(&mut self.sub_w, u, p, w);
                for (d, &s) in dst.iter_mut().zip(src.iter()) {
                    *d = d.wrapping_add(s);
                }
            }
        }
        for (row, &(slot, tail)) in self.kept.iter().enumerate() {
            if forest.parent_slot(tail) != Some(slot) {
                continue;
            }
            self.count[row] += 1;
            self.ones_agg[row] += self.sub_ones[tail];
            let src = &self.sub_w[tail * w..(tail + 1) * w];
            for (a, &s) in self.agg[row * w..(row + 1) * w].iter_mut().zip(src) {
                *a = a.wrapping_add(s as i64);
            }
        }
        self.total += 1;
        Ok(())
    }

    /// Subtree sizes in the most recently accumulated forest (0 for roots).
    pub fn last_subtree_sizes(&self) -> &[u64] {
        &self.sub_ones
    }

    /// Integer subtree sketch of `u` in the most recently accumulated forest.
    pub fn last_subtree_sketch(&self, u: usize) -> &[i32] {
        &self.sub_w[u * self.w..(u + 1) * self.w]
    }

    /// Adds another counter set over the same roots and slots.
    pub fn merge(&mut self, other: &EdgeCounters) -> Result<()> {
        if self.roots != other.roots {
            return Err(CfcmError::RootMismatch);
        }
        if self.w != other.w || self.kept != other.kept {
            return Err(CfcmError::DimensionMismatch("counter shapes differ".into()));
        }
        self.total += other.total;
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a += b;
        }
        for (a, b) in self.ones_agg.iter_mut().zip(&other.ones_agg) {
            *a += b;
        }
        for (a, b) in self.agg.iter_mut().zip(&other.agg) {
            *a += b;
        }
        Ok(())
    }
}

fn check_bfs(counters: &EdgeCounters, bfs: &BfsStructure) -> Result<()> {
    if counters.roots() != bfs.roots() {
        return Err(CfcmError::RootMismatch);
    }
    Ok(())
}

/// Runs `value[u] = value[b] + edge(row u->b, row b->u)` over BFS order.
fn telescope(
    counters: &EdgeCounters,
    graph: &Graph,
    bfs: &BfsStructure,
    edge: impl Fn(usize, usize) -> f64,
) -> Result<Vec<f64>> {
    check_bfs(counters, bfs)?;
    let mut out = vec![0.0; graph.n()];
    for &u in bfs.order() {
        if let Some(b) = bfs.parent(u) {
            let (up, down) = tree_rows(counters, graph, u, b)?;
            out[u] = out[b] + edge(up, down);
        }
    }
    Ok(out)
}

fn tree_rows(counters: &EdgeCounters, graph: &Graph, u: usize, b: usize) -> Result<(usize, usize)> {
    let missing = || CfcmError::invalid(format!("no tallies kept on BFS edge {u}-{b}"));
    let up = graph.slot(u, b).and_then(|s| counters.row(s)).ok_or_else(missing)?;
    let down = graph.slot(b, u).and_then(|s| counters.row(s)).ok_or_else(missing)?;
    Ok((up, down))
}

/// Unbiased estimates of `(L_S^-1)_uu` for every node (zero on roots).
pub fn estimate_diagonals(counters: &EdgeCounters, graph: &Graph, bfs: &BfsStructure) -> Result<Vec<f64>> {
    let t = counters.total.max(1) as f64;
    telescope(counters, graph, bfs, |up, down| {
        (counters.count[up] as f64 - counters.count[down] as f64) / t
    })
}

/// Unbiased estimates of the row sums `(L_S^-1 1)_u` (zero on roots).
pub fn estimate_row_sums(counters: &EdgeCounters, graph: &Graph, bfs: &BfsStructure) -> Result<Vec<f64>> {
    let t = counters.total.max(1) as f64;
    telescope(counters, graph, bfs, |up, down| {
        (counters.ones_agg[up] as f64 - counters.ones_agg[down] as f64) / t
    })
}

/// Dense per-node sketch columns: `column(u)` estimates `W L_S^-1 e_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    w: usize,
    data: Vec<f64>,
}

impl Sketch {
    pub fn zeros(n: usize, w: usize) -> Self {
        Sketch {
            w,
            data: vec![0.0; n * w],
        }
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn column(&self, u: usize) -> &[f64] {
        &self.data[u * self.w..(u + 1) * self.w]
    }

    pub fn column_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.data[u * self.w..(u + 1) * self.w]
    }

    /// The sketch as a `w x n` matrix whose columns are nodes.
    pub fn as_matrix(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.w, self.data.len().checked_div(self.w).unwrap_or(0))
    }

    pub fn as_matrix_mut(&mut self) -> DMatrixViewMut<'_, f64> {
        let cols = self.data.len().checked_div(self.w).unwrap_or(0);
        DMatrixViewMut::from_slice(&mut self.data, self.w, cols)
    }

    pub fn norm_sq(&self, u: usize) -> f64 {
        self.column(u).iter().map(|x| x * x).sum()
    }
}

/// Sketched columns of `L_S^-1` through the projector's rows.
pub fn estimate_projected_rows(
    counters: &EdgeCounters,
    graph: &Graph,
    bfs: &BfsStructure,
    projector: &JlProjector,
) -> Result<Sketch> {
    check_bfs(counters, bfs)?;
    let w = counters.w;
    if projector.w() != w {
        return Err(CfcmError::DimensionMismatch(format!(
            "projector width {} but counters hold {w} rows",
            projector.w()
        )));
    }
    let mut sketch = Sketch::zeros(graph.n(), w);
    let f = projector.scale() / counters.total.max(1) as f64;
    for &u in bfs.order() {
        let Some(b) = bfs.parent(u) else { continue };
        let (up, down) = tree_rows(counters, graph, u, b)?;
        for j in 0..w {
            let d = (counters.agg[up * w + j] - counters.agg[down * w + j]) as f64 * f;
            sketch.data[u * w + j] = sketch.data[b * w + j] + d;
        }
    }
    Ok(sketch)
}

/// Pseudoinverse diagonals up to a shared constant, from forests rooted at a
/// single node `s`: `x_u = z_u - (2/n) (L_s^-1 1)_u`, with `x_s = 0`.
pub fn estimate_pseudo_diagonals(counters: &EdgeCounters, graph: &Graph, bfs: &BfsStructure) -> Result<Vec<f64>> {
    if counters.roots().len() != 1 {
        return Err(CfcmError::invalid("pseudoinverse diagonals need a single root"));
    }
    let z = estimate_diagonals(counters, graph, bfs)?;
    let ones = estimate_row_sums(counters, graph, bfs)?;
    let n = graph.n() as f64;
    Ok(z.iter().zip(&ones).map(|(z, o)| z - 2.0 / n * o).collect())
}

/// Estimated marginal gain of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    pub node: usize,
    /// Diagonal entry `(L_S^-1)_uu`.
    pub z: f64,
    /// Sketch of column `u` of `L_S^-1`.
    pub y: Vec<f64>,
    /// `||y||^2 / z`.
    pub gain: f64,
    /// Relative confidence half-width of `gain` (infinite if never checked).
    pub rel_halfwidth: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GainEstimates {
    pub entries: Vec<GainEstimate>,
    /// Forests used.
    pub samples: u64,
}

impl GainEstimates {
    pub fn get(&self, node: usize) -> Option<&GainEstimate> {
        self.entries.iter().find(|e| e.node == node)
    }

    /// Largest gain, lowest node id on ties.
    pub fn argmax(&self) -> Option<&GainEstimate> {
        self.entries
            .iter()
            .fold(None, |best: Option<&GainEstimate>, e| match best {
                Some(b) if b.gain > e.gain || (b.gain == e.gain && b.node < e.node) => Some(b),
                _ => Some(e),
            })
    }
}

/// Rows `src` and `dst != src` of a row-major buffer of width `w`.
fn row_pair(buf: &mut [i32], src: usize, dst: usize, w: usize) -> (&[i32], &mut [i32]) {
    if src < dst {
        let (lo, hi) = buf.split_at_mut(dst * w);
        (&lo[src * w..(src + 1) * w], &mut hi[..w])
    } else {
        let (lo, hi) = buf.split_at_mut(src * w);
        (&hi[..w], &mut lo[dst * w..(dst + 1) * w])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{sample_forest, ForestSampler, RandomStream};
    use crate::generators;
    use crate::graph::bfs_structure;

    fn p3_counters(w_ones: bool) -> (Graph, EdgeCounters, BfsStructure, JlProjector) {
        let g = generators::path(3).unwrap();
        let s = NodeSet::single(0);
        let proj = if w_ones {
            JlProjector::from_signs(&[1, 2], 3, 1, vec![1, 1], 1.0).unwrap()
        } else {
            JlProjector::identity(&[1, 2], 3).unwrap()
        };
        let mut c = EdgeCounters::new(&g, &s, proj.w());
        let f = sample_forest(&g, &s, RandomStream::new(0, 0)).unwrap();
        c.accumulate_forest(&f, Some(&proj)).unwrap();
        let bfs = bfs_structure(&g, &s).unwrap();
        (g, c, bfs, proj)
    }

    #[test]
    fn p3_subtree_sums() {
        let (g, c, _, _) = p3_counters(false);
        assert_eq!(c.ones_agg(&g, 1, 0), Some(2));
        assert_eq!(c.ones_agg(&g, 2, 1), Some(1));
        assert_eq!(c.count(&g, 1, 0), Some(1));
        assert_eq!(c.count(&g, 2, 1), Some(1));
        assert_eq!(c.total(), 1);
    }

    #[test]
    fn p3_diagonals_are_exact() {
        let (g, c, bfs, _) = p3_counters(false);
        let z = estimate_diagonals(&c, &g, &bfs).unwrap();
        assert_eq!(z, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn p3_identity_sketch_column() {
        let (g, c, bfs, p) = p3_counters(false);
        let y = estimate_projected_rows(&c, &g, &bfs, &p).unwrap();
        assert_eq!(y.column(2), &[1.0, 2.0]);
        assert_eq!(y.norm_sq(2), 5.0);
        assert_eq!(y.column(1), &[1.0, 1.0]);
    }

    #[test]
    fn p3_all_ones_row_gives_column_sums() {
        let (g, c, bfs, p) = p3_counters(true);
        let y = estimate_projected_rows(&c, &g, &bfs, &p).unwrap();
        assert_eq!((y.column(1)[0], y.column(2)[0]), (2.0, 3.0));
    }

    #[test]
    fn p3_center_pseudo_diagonals() {
        let g = generators::path(3).unwrap();
        let s = NodeSet::single(1);
        let mut c = EdgeCounters::new(&g, &s, 0);
        let f = sample_forest(&g, &s, RandomStream::new(0, 0)).unwrap();
        c.accumulate_forest(&f, None).unwrap();
        let bfs = bfs_structure(&g, &s).unwrap();
        let x = estimate_pseudo_diagonals(&c, &g, &bfs).unwrap();
        let expect = [1.0 / 3.0, 0.0, 1.0 / 3.0];
        for (a, b) in x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn star_leaves_have_singleton_subtrees() {
        let g = generators::star(5).unwrap();
        let s = NodeSet::single(0);
        let mut c = EdgeCounters::new(&g, &s, 0);
        c.accumulate_forest(&sample_forest(&g, &s, RandomStream::new(2, 0)).unwrap(), None)
            .unwrap();
        for leaf in 1..6 {
            assert_eq!(c.count(&g, leaf, 0), Some(1));
            assert_eq!(c.ones_agg(&g, leaf, 0), Some(1));
        }
    }

    #[test]
    fn counters_are_additive() {
        let g = generators::random_connected(20, 0.2, 3).unwrap();
        let s = NodeSet::new([0, 5], 20).unwrap();
        let cands: Vec<usize> = (0..20).filter(|u| !s.contains(*u)).collect();
        let p = JlProjector::identity(&cands, 20).unwrap();
        let mut sampler = ForestSampler::new(&g, &s).unwrap();
        let mut all = EdgeCounters::new(&g, &s, p.w());
        let mut a = EdgeCounters::new(&g, &s, p.w());
        let mut b = EdgeCounters::new(&g, &s, p.w());
        for i in 0..10 {
            let f = sampler.sample(RandomStream::new(1, i)).unwrap();
            all.accumulate_forest(&f, Some(&p)).unwrap();
            if i % 3 == 0 { &mut a } else { &mut b }
                .accumulate_forest(&f, Some(&p))
                .unwrap();
        }
        a.merge(&b).unwrap();
        assert_eq!(a, all);
        assert_eq!(all.total(), 10);
    }

    #[test]
    fn rejects_mismatched_roots() {
        let g = generators::path(3).unwrap();
        let mut c = EdgeCounters::new(&g, &NodeSet::single(0), 0);
        let f = sample_forest(&g, &NodeSet::single(1), RandomStream::new(0, 0)).unwrap();
        assert!(matches!(c.accumulate_forest(&f, None), Err(CfcmError::RootMismatch)));
    }

    #[test]
    fn every_non_root_has_one_parent_per_forest() {
        let g = generators::random_connected(25, 0.15, 8).unwrap();
        let s = NodeSet::single(3);
        let mut c = EdgeCounters::new(&g, &s, 0);
        let mut sampler = ForestSampler::new(&g, &s).unwrap();
        for i in 0..50 {
            c.accumulate_forest(&sampler.sample(RandomStream::new(4, i)).unwrap(), None)
                .unwrap();
        }
        for u in 0..25 {
            let out: u64 = g.neighbors(u).iter().map(|&v| c.count(&g, u, v).unwrap()).sum();
            assert_eq!(out, if u == 3 { 0 } else { 50 });
            for &v in g.neighbors(u) {
                assert!(c.ones_agg(&g, u, v) >= c.count(&g, u, v));
            }
        }
    }
}
