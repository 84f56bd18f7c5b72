//! Doubling-batch sampling rounds with empirical Bernstein early stopping.
//!
//! A round samples forests in batches of 2, 4, 8, ... until every candidate
//! estimate is tight enough or the sample budget is spent. Forest `i` of a
//! round always comes from stream `(round_seed, i)` and every tally is an
//! exact integer (or fixed-point) sum, so results do not depend on how the
//! batch is split across workers.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{CfcmError, Result};
use crate::estimators::{
    estimate_diagonals, estimate_projected_rows, estimate_row_sums, EdgeCounters, GainEstimate, GainEstimates, Sketch,
};
use crate::forest::{ForestSampler, RandomStream, SpanningForest};
use crate::graph::{bfs_structure, BfsStructure, Graph, NodeSet, NONE};
use crate::projector::JlProjector;
use crate::schur::{assemble_schur, combine_blocks, invert_schur, RootedCounts};
use crate::stats::{bernstein_halfwidth, FixedMoments};

pub(crate) struct RoundSpec<'a> {
    pub graph: &'a Graph,
    /// Grounded set; a single node in the first-node phase.
    pub s: NodeSet,
    /// Extra Schur roots, disjoint from `s`.
    pub t: NodeSet,
    pub eps: f64,
    pub seed: u64,
    pub budget: u64,
    /// `None` selects the single-root pseudoinverse phase.
    pub projector: Option<JlProjector>,
    pub workers: usize,
}

struct Ctx<'a> {
    graph: &'a Graph,
    s: NodeSet,
    t: NodeSet,
    roots: NodeSet,
    bfs: BfsStructure,
    /// Both directions of every BFS tree edge.
    tree_slots: Vec<usize>,
    is_root: Vec<bool>,
    t_index: Vec<usize>,
    projector: Option<JlProjector>,
    seed: u64,
}

impl Ctx<'_> {
    fn w(&self) -> usize {
        self.projector.as_ref().map_or(0, |p| p.w())
    }

    fn first_node(&self) -> bool {
        self.projector.is_none()
    }

    fn k(&self) -> usize {
        self.t.len()
    }
}

/// Reference values from earlier batches used to linearize the gain.
struct Refs {
    ybar: Sketch,
    inv_norm: Vec<f64>,
    /// `(M^-1 F_u^T)_t` stored `|T| x n` (node index fastest), so a pass
    /// over nodes in id order reads each row sequentially.
    g: Vec<f64>,
    /// Lift matrix, `w x |T|`.
    lift: DMatrix<f64>,
    minv: DMatrix<f64>,
    /// A-priori range of each node's linearized stream.
    lin_sup: Vec<f64>,
}

struct Accum {
    edges: EdgeCounters,
    rooted: Option<RootedCounts>,
    /// Cumulative per-forest diagonal increments.
    z: Vec<FixedMoments>,
    /// Batch-local linearized diagonal stream (Schur rounds).
    lin: Vec<FixedMoments>,
    /// Batch-local numerator stream.
    num: Vec<FixedMoments>,
}

impl Accum {
    fn new(ctx: &Ctx, with_refs: bool) -> Result<Self> {
        let n = ctx.graph.n();
        let rooted = if ctx.k() > 0 {
            Some(RootedCounts::new(n, &ctx.s, &ctx.t)?)
        } else {
            None
        };
        let batch = if with_refs { n } else { 0 };
        Ok(Accum {
            edges: EdgeCounters::with_slots(ctx.graph, &ctx.roots, ctx.w(), ctx.tree_slots.iter().copied()),
            rooted,
            z: vec![FixedMoments::default(); n],
            lin: vec![FixedMoments::default(); if ctx.k() > 0 { batch } else { 0 }],
            num: vec![FixedMoments::default(); batch],
        })
    }

    fn merge(&mut self, other: &Accum) -> Result<()> {
        self.edges.merge(&other.edges)?;
        if let (Some(a), Some(b)) = (self.rooted.as_mut(), other.rooted.as_ref()) {
            a.merge(b)?;
        }
        for (a, b) in self.z.iter_mut().zip(&other.z) {
            a.merge(b);
        }
        if self.lin.len() < other.lin.len() {
            self.lin.resize(other.lin.len(), FixedMoments::default());
        }
        for (a, b) in self.lin.iter_mut().zip(&other.lin) {
            a.merge(b);
        }
        if self.num.len() < other.num.len() {
            self.num.resize(other.num.len(), FixedMoments::default());
        }
        for (a, b) in self.num.iter_mut().zip(&other.num) {
            a.merge(b);
        }
        Ok(())
    }
}

/// Per-worker scratch sized to the graph.
struct Scratch<'g> {
    sampler: ForestSampler<'g>,
    forest: SpanningForest,
    xinc: Vec<i64>,
    oinc: Vec<i64>,
    yf: Vec<i64>,
    labels: Vec<usize>,
    gsel: Vec<f64>,
    ccount: Vec<u32>,
    pairs: Vec<(usize, usize, u32)>,
}

fn run_chunk(ctx: &Ctx, range: Range<u64>, refs: Option<&Refs>) -> Result<Accum> {
    let g = ctx.graph;
    let n = g.n();
    let w = ctx.w();
    let k = ctx.k();
    let mut acc = Accum::new(ctx, refs.is_some())?;
    let mut sc = Scratch {
        sampler: ForestSampler::new(g, &ctx.roots)?,
        forest: SpanningForest::default(),
        xinc: vec![0; n],
        oinc: vec![0; n],
        yf: vec![0; if refs.is_some() { n * w } else { 0 }],
        labels: Vec::new(),
        gsel: vec![0.0; if refs.is_some() && k > 0 { n } else { 0 }],
        ccount: vec![0; k],
        pairs: Vec::new(),
    };
    let two_over_n = 2.0 / n as f64;
    for index in range {
        let mut rng = RandomStream::new(ctx.seed, index).rng();
        sc.sampler.sample_into(&mut rng, &mut sc.forest)?;
        let forest = &sc.forest;
        acc.edges.accumulate_forest(forest, ctx.projector.as_ref())?;
        if let Some(rc) = acc.rooted.as_mut() {
            forest.root_labels_into(&mut sc.labels);
            rc.track_labels(forest, &sc.labels)?;
        }
        let parent = forest.raw_parent();
        let sub = acc.edges.last_subtree_sizes();

        for &u in ctx.bfs.order() {
            let Some(b) = ctx.bfs.parent(u) else {
                sc.xinc[u] = 0;
                sc.oinc[u] = 0;
                if refs.is_some() {
                    sc.yf[u * w..(u + 1) * w].fill(0);
                }
                continue;
            };
            let up = parent[u] == b;
            let down = parent[b] == u;
            sc.xinc[u] = sc.xinc[b] + up as i64 - down as i64;
            if ctx.first_node() {
                let mut o = sc.oinc[b];
                if up {
                    o += sub[u] as i64;
                }
                if down {
                    o -= sub[b] as i64;
                }
                sc.oinc[u] = o;
                acc.z[u].push(sc.xinc[u] as f64 - two_over_n * o as f64);
                continue;
            }
            acc.z[u].push(sc.xinc[u] as f64);
            if refs.is_none() {
                continue;
            }
            sc.yf.copy_within(b * w..(b + 1) * w, u * w);
            let yu = &mut sc.yf[u * w..(u + 1) * w];
            // |y| is at most depth * n, far from i64 limits
            if up {
                for (y, &s) in yu.iter_mut().zip(acc.edges.last_subtree_sketch(u)) {
                    *y = y.wrapping_add(s as i64);
                }
            }
            if down {
                for (y, &s) in yu.iter_mut().zip(acc.edges.last_subtree_sketch(b)) {
                    *y = y.wrapping_sub(s as i64);
                }
            }
        }

        let Some(r) = refs else { continue };
        let scale = ctx.projector.as_ref().unwrap().scale();
        if k > 0 {
            // a tight gather pass lets the scattered loads overlap
            for u in 0..n {
                let ti = ctx.t_index[sc.labels[u]];
                sc.gsel[u] = if ti == NONE || ctx.is_root[u] {
                    0.0
                } else {
                    r.g[ti * n + u]
                };
            }
        }
        // pushes are order-independent, so walk nodes by id for locality
        for u in (0..n).filter(|&u| !ctx.is_root[u]) {
            let yu = &sc.yf[u * w..(u + 1) * w];
            let dot: f64 = r.ybar.column(u).iter().zip(yu).map(|(a, &b)| a * b as f64).sum();
            let mut p = scale * dot;
            let mut lin = sc.xinc[u] as f64;
            if k > 0 {
                let ti = ctx.t_index[sc.labels[u]];
                if ti != NONE {
                    let ybar = r.ybar.column(u);
                    p += r.lift.column(ti).iter().zip(ybar).map(|(l, y)| l * y).sum::<f64>();
                    lin += 2.0 * sc.gsel[u];
                }
                acc.lin[u].push(lin);
            }
            acc.num[u].push(p * r.inv_norm[u]);
        }
        if k > 0 {
            // per-forest counts C(i, t') of U-neighbors of i in T rooted at t',
            // kept as distinct (i, t', count) triples
            sc.pairs.clear();
            for (a, i) in ctx.t.iter().enumerate() {
                let start = sc.pairs.len();
                for &u in g.neighbors(i) {
                    if ctx.is_root[u] {
                        continue;
                    }
                    let c = ctx.t_index[sc.labels[u]];
                    if c == NONE {
                        continue;
                    }
                    if sc.ccount[c] == 0 {
                        sc.pairs.push((a, c, 0));
                    }
                    sc.ccount[c] += 1;
                }
                for p in &mut sc.pairs[start..] {
                    p.2 = std::mem::take(&mut sc.ccount[p.1]);
                }
            }
            for (b, t) in ctx.t.iter().enumerate() {
                let col = r.minv.column(b);
                let q: f64 = sc
                    .pairs
                    .iter()
                    .map(|&(a, c, m)| m as f64 * col[a] * col[c])
                    .sum::<f64>();
                acc.lin[t].push(q / col[b]);
            }
        }
    }
    Ok(acc)
}

/// Samples forests `start..start+size` split over `workers` contiguous chunks.
fn run_batch(ctx: &Ctx, start: u64, size: u64, workers: usize, refs: Option<&Refs>) -> Result<Accum> {
    let workers = (workers.max(1) as u64).min(size.max(1));
    let chunks: Vec<Range<u64>> = (0..workers)
        .map(|i| start + size * i / workers..start + size * (i + 1) / workers)
        .collect();
    let parts: Vec<Accum> = chunks
        .into_par_iter()
        .map(|r| run_chunk(ctx, r, refs))
        .collect::<Result<_>>()?;
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one chunk");
    for p in it {
        acc.merge(&p)?;
    }
    Ok(acc)
}

fn batch_count(budget: u64) -> u32 {
    // batches of 2, 4, 8, ... cover 2^(b+1) - 2 forests after b batches
    let mut b = 0;
    let mut covered = 0u64;
    while covered < budget {
        b += 1;
        covered = covered.saturating_add(1u64 << b.min(62));
    }
    b.max(1)
}

fn build_ctx<'a>(rs: &RoundSpec<'a>) -> Result<Ctx<'a>> {
    let g = rs.graph;
    let n = g.n();
    if rs.s.is_empty() {
        return Err(CfcmError::invalid("grounded set must be non-empty"));
    }
    if rs.t.iter().any(|x| rs.s.contains(x)) {
        return Err(CfcmError::invalid("Schur roots must be disjoint from the group"));
    }
    let roots = rs.s.union(&rs.t);
    if roots.len() >= n {
        return Err(CfcmError::invalid("no candidate nodes remain"));
    }
    let bfs = bfs_structure(g, &roots)?;
    let mut t_index = vec![NONE; n];
    for (i, x) in rs.t.iter().enumerate() {
        t_index[x] = i;
    }
    let tree_slots = (0..n)
        .filter_map(|u| bfs.parent(u).map(|b| (u, b)))
        .flat_map(|(u, b)| [g.slot(u, b), g.slot(b, u)])
        .flatten()
        .collect();
    Ok(Ctx {
        graph: g,
        s: rs.s.clone(),
        t: rs.t.clone(),
        is_root: roots.mask(n),
        roots,
        bfs,
        tree_slots,
        t_index,
        projector: rs.projector.clone(),
        seed: rs.seed,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct FirstNodeOutcome {
    /// Pseudoinverse diagonals minus a shared constant; zero at the root.
    pub x: Vec<f64>,
    /// Estimate of that shared constant.
    pub offset: f64,
    pub samples: u64,
}

pub(crate) fn run_first_node(rs: &RoundSpec) -> Result<FirstNodeOutcome> {
    if rs.s.len() != 1 || !rs.t.is_empty() || rs.projector.is_some() {
        return Err(CfcmError::invalid("first-node phase uses a single root and no sketch"));
    }
    let ctx = build_ctx(rs)?;
    let g = ctx.graph;
    let n = g.n();
    let root = rs.s.as_slice()[0];
    let batches = batch_count(rs.budget);
    let delta = 1.0 / (3.0 * n as f64 * batches as f64);
    let mut master = Accum::new(&ctx, false)?;
    let mut b = 0u32;
    loop {
        b += 1;
        let total = master.edges.total();
        let size = (1u64 << b.min(62)).min(rs.budget - total);
        let part = run_batch(&ctx, total, size, rs.workers, None)?;
        master.merge(&part)?;
        let z = estimate_diagonals(&master.edges, g, &ctx.bfs)?;
        let ones = estimate_row_sums(&master.edges, g, &ctx.bfs)?;
        let x: Vec<f64> = z.iter().zip(&ones).map(|(z, o)| z - 2.0 / n as f64 * o).collect();
        let offset = ones.iter().sum::<f64>() / (n as f64 * n as f64);
        let done = master.edges.total() >= rs.budget;
        let tight = b >= 2
            && (0..n).filter(|&u| u != root).all(|u| {
                let d = ctx.bfs.depth(u) as f64;
                let m = &master.z[u];
                let hw =
                    bernstein_halfwidth(m.count(), m.variance(), 3.0 * (2.0 * d - 1.0), delta).unwrap_or(f64::INFINITY);
                hw <= rs.eps * (x[u] + offset - hw)
            });
        if done || tight {
            return Ok(FirstNodeOutcome {
                x,
                offset,
                samples: master.edges.total(),
            });
        }
    }
}

struct Estimates {
    z: Vec<f64>,
    y: Sketch,
    /// Schur parts: `F M^-1`, `M^-1` and the lift matrix.
    schur: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
}

fn estimate(ctx: &Ctx, acc: &Accum) -> Result<Estimates> {
    let g = ctx.graph;
    let proj = ctx.projector.as_ref().unwrap();
    let z = estimate_diagonals(&acc.edges, g, &ctx.bfs)?;
    let y = estimate_projected_rows(&acc.edges, g, &ctx.bfs, proj)?;
    let Some(rc) = acc.rooted.as_ref() else {
        return Ok(Estimates { z, y, schur: None });
    };
    let f = rc.probabilities();
    let mut block = assemble_schur(g, &f, &ctx.s, &ctx.t)?;
    let minv = invert_schur(&block.m)?;
    block.m_inv = Some(minv.clone());
    let c = combine_blocks(&z, &y, &f, &block, proj, &ctx.s)?;
    Ok(Estimates {
        z: c.z,
        y: c.y,
        schur: Some((c.f_minv, minv, c.lift)),
    })
}

fn make_refs(ctx: &Ctx, e: &Estimates) -> Refs {
    let n = ctx.graph.n();
    let k = ctx.k();
    let inv_norm = (0..n)
        .map(|u| {
            let s = e.y.norm_sq(u);
            if s > 0.0 {
                1.0 / s
            } else {
                0.0
            }
        })
        .collect();
    let mut g = vec![0.0; n * k];
    let mut lin_sup = vec![0.0; n];
    let (minv, lift) = match &e.schur {
        Some((f_minv, minv, lift)) => {
            let pairs: usize = ctx
                .t
                .iter()
                .map(|i| ctx.graph.neighbors(i).iter().filter(|&&u| !ctx.is_root[u]).count())
                .sum();
            for (b, t) in ctx.t.iter().enumerate() {
                let peak = (0..k).map(|a| minv[(a, b)] * minv[(a, b)]).fold(0.0, f64::max);
                lin_sup[t] = pairs as f64 * peak / minv[(b, b)];
            }
            for ti in 0..k {
                g[ti * n..(ti + 1) * n].copy_from_slice(f_minv.column(ti).as_slice());
            }
            for u in (0..n).filter(|&u| !ctx.is_root[u]) {
                let peak = f_minv.row(u).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                lin_sup[u] = 2.0 * ctx.bfs.depth(u) as f64 - 1.0 + 2.0 * peak;
            }
            (minv.clone(), lift.clone())
        }
        None => (DMatrix::zeros(0, 0), DMatrix::zeros(ctx.w(), 0)),
    };
    Refs {
        ybar: e.y.clone(),
        inv_norm,
        g,
        lift,
        minv,
        lin_sup,
    }
}

/// Relative half-width of every candidate's gain; `None` when unavailable.
fn gain_halfwidths(ctx: &Ctx, acc: &Accum, e: &Estimates, refs: &Refs, delta: f64) -> Vec<f64> {
    let n = ctx.graph.n();
    let bern = |m: &FixedMoments, sup: f64| {
        if m.count() < 2 {
            return f64::INFINITY;
        }
        bernstein_halfwidth(m.count(), m.variance(), sup, delta).unwrap_or(f64::INFINITY)
    };
    (0..n)
        .map(|u| {
            if ctx.s.contains(u) {
                return f64::NAN;
            }
            if e.z[u] <= 0.0 || e.y.norm_sq(u) <= 0.0 || acc.num.is_empty() {
                return f64::INFINITY;
            }
            let (rel_z, rel_num) = if ctx.t_index[u] != NONE {
                let r = bern(&acc.lin[u], acc.lin[u].range().max(refs.lin_sup[u]));
                (r, 2.0 * r)
            } else {
                let hz = if ctx.k() > 0 {
                    bern(&acc.lin[u], acc.lin[u].range().max(refs.lin_sup[u]))
                } else {
                    let d = ctx.bfs.depth(u) as f64;
                    bern(&acc.z[u], 2.0 * d - 1.0)
                };
                let num = &acc.num[u];
                (hz / e.z[u], 2.0 * bern(num, num.range().max(num.max_abs())))
            };
            rel_z + rel_num
        })
        .collect()
}

pub(crate) fn run_delta(rs: &RoundSpec) -> Result<GainEstimates> {
    let proj = rs
        .projector
        .as_ref()
        .ok_or_else(|| CfcmError::invalid("gain rounds need a projector"))?;
    let ctx = build_ctx(rs)?;
    let g = ctx.graph;
    let n = g.n();
    for u in 0..n {
        if ctx.s.contains(u) != proj.col(u).is_none() {
            return Err(CfcmError::DimensionMismatch(
                "projector columns must be exactly the nodes outside the group".into(),
            ));
        }
    }
    let batches = batch_count(rs.budget);
    let delta = 1.0 / (3.0 * n as f64 * batches as f64);
    let bound = rs.eps / (1.0 + rs.eps);

    let mut master = Accum::new(&ctx, false)?;
    let mut refs: Option<Refs> = None;
    // a sampled Schur block can stay singular at small budgets; sampling then
    // continues past the budget up to a fixed multiple of it
    let mut limit = rs.budget;
    let hard_limit = rs.budget.saturating_mul(8);
    let mut b = 0u32;
    loop {
        b += 1;
        let total = master.edges.total();
        let size = (1u64 << b.min(62)).min(limit - total);
        let part = run_batch(&ctx, total, size, rs.workers, refs.as_ref())?;
        // batch-local streams restart with each batch
        master.lin.clear();
        master.num.clear();
        master.merge(&part)?;
        let done = master.edges.total() >= limit;
        let est = match estimate(&ctx, &master) {
            Ok(e) => e,
            Err(CfcmError::Singular(_)) if !done || limit < hard_limit => {
                if done {
                    limit = (limit * 2).min(hard_limit);
                }
                refs = None;
                continue;
            }
            Err(e) => return Err(e),
        };
        let hw = match refs.as_ref() {
            Some(r) => gain_halfwidths(&ctx, &master, &est, r, delta),
            None => vec![f64::INFINITY; n],
        };
        let tight = refs.is_some() && (0..n).filter(|&u| !ctx.s.contains(u)).all(|u| hw[u] <= bound);
        if done || tight {
            let entries = (0..n)
                .filter(|&u| !ctx.s.contains(u))
                .map(|u| {
                    let y = est.y.column(u).to_vec();
                    let norm: f64 = y.iter().map(|v| v * v).sum();
                    GainEstimate {
                        node: u,
                        z: est.z[u],
                        gain: if est.z[u] > 0.0 { norm / est.z[u] } else { 0.0 },
                        y,
                        rel_halfwidth: hw[u],
                    }
                })
                .collect();
            return Ok(GainEstimates {
                entries,
                samples: master.edges.total(),
            });
        }
        refs = Some(make_refs(&ctx, &est));
    }
}
