//! Uniform rooted spanning forests via loop-erased random walks (Wilson).
//!
//! Besides the parent map, the sampler emits an order over non-root nodes in
//! which every node precedes its parent. Subtree sums can then be carried
//! upward in a single pass.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{CfcmError, Result};
use crate::graph::{Graph, NodeSet, NONE};

/// Guard against pathological walks; unreachable on connected graphs in practice.
pub const WALK_STEP_LIMIT: u64 = 10_000_000_000;

/// Identifies one forest: a master seed plus the forest's sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    pub seed: u64,
    pub index: u64,
}

impl RandomStream {
    pub fn new(seed: u64, index: u64) -> Self {
        RandomStream { seed, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpanningForest {
    parent: Vec<usize>,
    parent_slot: Vec<usize>,
    order: Vec<usize>,
}

impl SpanningForest {
    pub fn parent(&self, u: usize) -> Option<usize> {
        match self.parent[u] {
            NONE => None,
            p => Some(p),
        }
    }

    /// Adjacency slot of the edge `u -> parent(u)`.
    pub fn parent_slot(&self, u: usize) -> Option<usize> {
        match self.parent_slot[u] {
            NONE => None,
            s => Some(s),
        }
    }

    /// Non-root nodes, each before its parent.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    pub fn is_root(&self, u: usize) -> bool {
        self.parent[u] == NONE
    }

    /// The root of the tree containing each node, computed parents-first.
    pub fn root_labels(&self) -> Vec<usize> {
        let mut root = Vec::new();
        self.root_labels_into(&mut root);
        root
    }

    /// [`SpanningForest::root_labels`] into a reusable buffer.
    pub fn root_labels_into(&self, root: &mut Vec<usize>) {
        root.clear();
        root.extend(0..self.n());
        for &u in self.order.iter().rev() {
            root[u] = root[self.parent[u]];
        }
    }

    pub(crate) fn raw_parent(&self) -> &[usize] {
        &self.parent
    }
}

/// Order in which walk sources are processed. Wilson's theorem makes the
/// distribution independent of this choice; `Descending` exists for tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceOrder {
    #[default]
    Ascending,
    Descending,
}

/// Reusable sampler holding per-node scratch buffers for one root set.
pub struct ForestSampler<'g> {
    graph: &'g Graph,
    is_root: Vec<bool>,
    in_forest: Vec<bool>,
    next: Vec<usize>,
    next_slot: Vec<usize>,
    chain: Vec<usize>,
    source_order: SourceOrder,
}

impl<'g> ForestSampler<'g> {
    pub fn new(graph: &'g Graph, roots: &NodeSet) -> Result<Self> {
        if roots.is_empty() {
            return Err(CfcmError::invalid("forest sampling needs at least one root"));
        }
        for r in roots.iter() {
            graph.check_node(r)?;
        }
        let n = graph.n();
        Ok(ForestSampler {
            graph,
            is_root: roots.mask(n),
            in_forest: vec![false; n],
            next: vec![NONE; n],
            next_slot: vec![NONE; n],
            chain: Vec::new(),
            source_order: SourceOrder::Ascending,
        })
    }

    pub fn with_source_order(mut self, order: SourceOrder) -> Self {
        self.source_order = order;
        self
    }

    pub fn sample(&mut self, stream: RandomStream) -> Result<SpanningForest> {
        let mut forest = SpanningForest::default();
        self.sample_into(&mut stream.rng(), &mut forest)?;
        Ok(forest)
    }

    /// Samples into `forest`, reusing its allocations.
    pub fn sample_into<R: Rng>(&mut self, rng: &mut R, forest: &mut SpanningForest) -> Result<()> {
        let g = self.graph;
        let n = g.n();
        self.in_forest.copy_from_slice(&self.is_root);
        forest.parent.clear();
        forest.parent.resize(n, NONE);
        forest.parent_slot.clear();
        forest.parent_slot.resize(n, NONE);
        forest.order.clear();

        let mut steps: u64 = 0;
        for k in 0..n {
            let source = match self.source_order {
                SourceOrder::Ascending => k,
                SourceOrder::Descending => n - 1 - k,
            };
            // walk until hitting the current forest; revisits overwrite next[]
            let mut u = source;
            while !self.in_forest[u] {
                let deg = g.degree(u);
                if deg == 0 {
                    return Err(CfcmError::Disconnected);
                }
                let i = rng.random_range(0..deg);
                let slot = g.slot_offset(u) + i;
                self.next[u] = g.neighbors(u)[i];
                self.next_slot[u] = slot;
                u = self.next[u];
                steps += 1;
                if steps > WALK_STEP_LIMIT {
                    return Err(CfcmError::WalkLimit(WALK_STEP_LIMIT));
                }
            }
            // retrace the loop-erased path and graft it
            self.chain.clear();
            let mut u = source;
            while !self.in_forest[u] {
                self.in_forest[u] = true;
                forest.parent[u] = self.next[u];
                forest.parent_slot[u] = self.next_slot[u];
                self.chain.push(u);
                u = self.next[u];
            }
            forest.order.extend(self.chain.iter().rev());
        }
        forest.order.reverse();
        Ok(())
    }
}

/// Samples one forest rooted at `roots` from the given stream.
pub fn sample_forest(graph: &Graph, roots: &NodeSet, stream: RandomStream) -> Result<SpanningForest> {
    ForestSampler::new(graph, roots)?.sample(stream)
}

/// Largest graph accepted by [`enumerate_forests`].
pub const ENUMERATION_NODE_LIMIT: usize = 12;

/// Every spanning forest rooted at `roots`, as parent vectors (`NONE` on
/// roots), found by trying all neighbor choices for the non-root nodes.
pub fn enumerate_forests(graph: &Graph, roots: &NodeSet, cap: usize) -> Result<Vec<Vec<usize>>> {
    let n = graph.n();
    if n > ENUMERATION_NODE_LIMIT {
        return Err(CfcmError::TooLarge {
            what: "forest enumeration graph",
            size: n as u128,
            limit: ENUMERATION_NODE_LIMIT as u128,
        });
    }
    if roots.is_empty() {
        return Err(CfcmError::invalid("forest enumeration needs at least one root"));
    }
    for r in roots.iter() {
        graph.check_node(r)?;
    }
    let free: Vec<usize> = (0..n).filter(|&u| !roots.contains(u)).collect();
    let mut choice = vec![0usize; free.len()];
    let mut parent = vec![NONE; n];
    let mut out = Vec::new();
    if free.iter().any(|&u| graph.degree(u) == 0) {
        return Err(CfcmError::Disconnected);
    }
    loop {
        for (i, &u) in free.iter().enumerate() {
            parent[u] = graph.neighbors(u)[choice[i]];
        }
        if reaches_roots(&parent) {
            if out.len() == cap {
                return Err(CfcmError::TooLarge {
                    what: "forest enumeration",
                    size: cap as u128 + 1,
                    limit: cap as u128,
                });
            }
            out.push(parent.clone());
        }
        // odometer over neighbor choices
        let mut i = 0;
        loop {
            if i == free.len() {
                return Ok(out);
            }
            choice[i] += 1;
            if choice[i] < graph.degree(free[i]) {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn reaches_roots(parent: &[usize]) -> bool {
    let n = parent.len();
    (0..n).all(|start| {
        let mut u = start;
        for _ in 0..n {
            if parent[u] == NONE {
                return true;
            }
            u = parent[u];
        }
        false
    })
}

/// Outcome of a chi-square test of sampled forests against the uniform law.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformityTest {
    /// Number of distinct rooted forests.
    pub forests: usize,
    pub samples: u64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Samples `samples` forests from streams `(seed, 0..samples)` and tests the
/// empirical frequencies against the uniform distribution over all rooted
/// forests (enumerated by brute force).
pub fn uniformity_test(
    graph: &Graph,
    roots: &NodeSet,
    samples: u64,
    seed: u64,
    order: SourceOrder,
) -> Result<UniformityTest> {
    let all = enumerate_forests(graph, roots, 1 << 20)?;
    let index: HashMap<&[usize], usize> = all.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let mut counts = vec![0u64; all.len()];
    let mut sampler = ForestSampler::new(graph, roots)?.with_source_order(order);
    let mut forest = SpanningForest::default();
    for i in 0..samples {
        sampler.sample_into(&mut RandomStream::new(seed, i).rng(), &mut forest)?;
        let k = index
            .get(forest.parent.as_slice())
            .ok_or_else(|| CfcmError::invalid("sampled a parent map that is not a rooted forest"))?;
        counts[*k] += 1;
    }
    let expected = samples as f64 / all.len() as f64;
    let chi_square: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = all.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| CfcmError::invalid(e.to_string()))?;
        dist.sf(chi_square)
    };
    Ok(UniformityTest {
        forests: all.len(),
        samples,
        chi_square,
        dof,
        p_value,
    })
}
