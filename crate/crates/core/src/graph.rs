//! Undirected simple graphs in compressed sparse form.
//!
//! Node ids are dense `0..n` and follow the ascending order of the original
//! labels, so the label map is a sorted vector and lookups are binary
//! searches. Adjacency lists are sorted, which makes every directed edge
//! `u -> v` addressable by a single "slot" index into the neighbor array.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{CfcmError, Result};

/// Sentinel for "no node" in dense per-node arrays.
pub(crate) const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    labels: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelfLoopPolicy {
    #[default]
    Drop,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    #[default]
    Collapse,
    Reject,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub self_loops: SelfLoopPolicy,
    pub duplicates: DuplicatePolicy,
}

impl Graph {
    /// Builds a graph from labelled edges, dropping self-loops and collapsing
    /// parallel edges.
    pub fn from_edges<I>(edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        Self::from_edges_with(edges, LoadOptions::default())
    }

    pub fn from_edges_with<I>(edges: I, options: LoadOptions) -> Result<Graph>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let numbered = edges.into_iter().enumerate().map(|(i, e)| (i + 1, e));
        build(numbered, options)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|u| self.degree(u)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|u| self.degree(u)).max().unwrap_or(0)
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    /// Index of the first directed-edge slot owned by `u`.
    pub fn slot_offset(&self, u: usize) -> usize {
        self.offsets[u]
    }

    /// Number of directed-edge slots, `2m`.
    pub fn slot_count(&self) -> usize {
        self.targets.len()
    }

    /// Slot of the directed edge `u -> v`, if the edge exists.
    pub fn slot(&self, u: usize, v: usize) -> Option<usize> {
        self.neighbors(u).binary_search(&v).ok().map(|i| self.offsets[u] + i)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.slot(u, v).is_some()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Original label of dense node `u`.
    pub fn label(&self, u: usize) -> u64 {
        self.labels[u]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    /// Dense id of an original label.
    pub fn node_of(&self, label: u64) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && components(self).iter().all(|&c| c == 0)
    }

    /// Errors with `NodeOutOfRange` unless `u < n`.
    pub fn check_node(&self, u: usize) -> Result<()> {
        if u < self.n() {
            Ok(())
        } else {
            Err(CfcmError::NodeOutOfRange { node: u, n: self.n() })
        }
    }
}

fn build<I>(edges: I, options: LoadOptions) -> Result<Graph>
where
    I: IntoIterator<Item = (usize, (u64, u64))>,
{
    let mut pairs = Vec::new();
    for (line, (a, b)) in edges {
        if a == b {
            match options.self_loops {
                SelfLoopPolicy::Drop => continue,
                SelfLoopPolicy::Reject => {
                    return Err(CfcmError::Parse {
                        line,
                        message: format!("self-loop on {a}"),
                    })
                }
            }
        }
        let key = (a.min(b), a.max(b));
        pairs.push((key, line));
    }
    pairs.sort_unstable();
    if options.duplicates == DuplicatePolicy::Reject {
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(CfcmError::Parse {
                line: w[0].1.max(w[1].1),
                message: format!("duplicate edge {} {}", w[1].0 .0, w[1].0 .1),
            });
        }
    }
    pairs.dedup_by_key(|p| p.0);
    if pairs.is_empty() {
        return Err(CfcmError::EmptyGraph);
    }

    let mut labels: Vec<u64> = pairs.iter().flat_map(|&((a, b), _)| [a, b]).collect();
    labels.sort_unstable();
    labels.dedup();
    let dense: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&((a, b), _)| (labels.binary_search(&a).unwrap(), labels.binary_search(&b).unwrap()))
        .collect();
    Ok(from_dense(labels, &dense))
}

/// Assembles CSR arrays from deduplicated dense edges.
fn from_dense(labels: Vec<u64>, edges: &[(usize, usize)]) -> Graph {
    let n = labels.len();
    let mut degree = vec![0usize; n];
    for &(u, v) in edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for d in &degree {
        offsets.push(offsets.last().unwrap() + d);
    }
    let mut fill = offsets[..n].to_vec();
    let mut targets = vec![0usize; 2 * edges.len()];
    for &(u, v) in edges {
        targets[fill[u]] = v;
        fill[u] += 1;
        targets[fill[v]] = u;
        fill[v] += 1;
    }
    for u in 0..n {
        targets[offsets[u]..offsets[u + 1]].sort_unstable();
    }
    Graph {
        offsets,
        targets,
        labels,
    }
}

/// Reads a whitespace-separated edge list. Lines starting with `#` or `%`
/// are comments; tokens after the first two on a line are ignored.
pub fn load_edge_list(path: impl AsRef<Path>, options: LoadOptions) -> Result<Graph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CfcmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_edge_list(BufReader::new(file), options).map_err(|e| match e {
        CfcmError::Io { source, .. } => CfcmError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_edge_list<R: BufRead>(reader: R, options: LoadOptions) -> Result<Graph> {
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CfcmError::Io {
            path: Default::default(),
            source,
        })?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut endpoint = || -> Result<u64> {
            let tok = tokens.next().ok_or_else(|| CfcmError::Parse {
                line: lineno,
                message: "expected two node labels".into(),
            })?;
            tok.parse::<u64>().map_err(|_| CfcmError::Parse {
                line: lineno,
                message: format!("invalid node label {tok:?}"),
            })
        };
        let a = endpoint()?;
        let b = endpoint()?;
        edges.push((lineno, (a, b)));
    }
    build(edges, options)
}

pub fn parse_edge_list(text: &str, options: LoadOptions) -> Result<Graph> {
    read_edge_list(text.as_bytes(), options)
}

/// Writes the graph as `label label` lines, one per undirected edge.
pub fn write_edge_list<W: Write>(graph: &Graph, mut out: W) -> std::io::Result<()> {
    for (u, v) in graph.edges() {
        writeln!(out, "{} {}", graph.label(u), graph.label(v))?;
    }
    Ok(())
}

/// Component index per node, numbered in order of their smallest node.
fn components(graph: &Graph) -> Vec<usize> {
    let n = graph.n();
    let mut comp = vec![NONE; n];
    let mut queue = VecDeque::new();
    let mut next = 0;
    for start in 0..n {
        if comp[start] != NONE {
            continue;
        }
        comp[start] = next;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in graph.neighbors(u) {
                if comp[v] == NONE {
                    comp[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Induced subgraph on the largest connected component. Ties go to the
/// component holding the smallest original label.
pub fn largest_connected_component(graph: &Graph) -> Graph {
    let comp = components(graph);
    let count = comp.iter().copied().max().map_or(0, |c| c + 1);
    if count <= 1 {
        return graph.clone();
    }
    let mut sizes = vec![0usize; count];
    for &c in &comp {
        sizes[c] += 1;
    }
    // components are numbered by smallest member, so the first maximum wins ties
    let best = (0..count).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });

    let keep: Vec<usize> = (0..graph.n()).filter(|&u| comp[u] == best).collect();
    let mut new_id = vec![NONE; graph.n()];
    for (i, &u) in keep.iter().enumerate() {
        new_id[u] = i;
    }
    let labels = keep.iter().map(|&u| graph.label(u)).collect();
    let edges: Vec<(usize, usize)> = graph
        .edges()
        .filter(|&(u, _)| comp[u] == best)
        .map(|(u, v)| (new_id[u], new_id[v]))
        .collect();
    from_dense(labels, &edges)
}

/// Builds a graph directly from dense ids `0..n` with labels equal to ids.
/// Used by generators and tests.
pub fn from_dense_edges(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
    let mut clean = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        if u >= n || v >= n {
            return Err(CfcmError::NodeOutOfRange { node: u.max(v), n });
        }
        if u != v {
            clean.push((u.min(v), u.max(v)));
        }
    }
    clean.sort_unstable();
    clean.dedup();
    if clean.is_empty() {
        return Err(CfcmError::EmptyGraph);
    }
    Ok(from_dense((0..n as u64).collect(), &clean))
}

/// Ordered set of dense node ids: sorted, without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new<I: IntoIterator<Item = usize>>(ids: I, n: usize) -> Result<NodeSet> {
        let mut v: Vec<usize> = ids.into_iter().collect();
        if let Some(&bad) = v.iter().find(|&&u| u >= n) {
            return Err(CfcmError::NodeOutOfRange { node: bad, n });
        }
        v.sort_unstable();
        v.dedup();
        Ok(NodeSet(v))
    }

    pub fn empty() -> NodeSet {
        NodeSet(Vec::new())
    }

    pub fn single(u: usize) -> NodeSet {
        NodeSet(vec![u])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, u: usize) -> bool {
        self.0.binary_search(&u).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn insert(&mut self, u: usize) {
        if let Err(pos) = self.0.binary_search(&u) {
            self.0.insert(pos, u);
        }
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        let mut v: Vec<usize> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        v.dedup();
        NodeSet(v)
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.iter().filter(|&u| !other.contains(u)).collect())
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for u in self.iter() {
            m[u] = true;
        }
        m
    }

    /// Position of `u` inside the set.
    pub fn index_of(&self, u: usize) -> Option<usize> {
        self.0.binary_search(&u).ok()
    }
}

/// Multi-source BFS layering used to walk estimates outward from a root set.
#[derive(Debug, Clone)]
pub struct BfsStructure {
    order: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    roots: NodeSet,
}

impl BfsStructure {
    /// All nodes, roots first, sorted by (depth, id).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn parent(&self, u: usize) -> Option<usize> {
        match self.parent[u] {
            NONE => None,
            p => Some(p),
        }
    }

    pub fn depth(&self, u: usize) -> usize {
        self.depth[u]
    }

    pub fn roots(&self) -> &NodeSet {
        &self.roots
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }
}

/// BFS distances from a set of sources; unreachable nodes get `NONE`.
fn bfs_distances(graph: &Graph, sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![NONE; graph.n()];
    let mut queue = VecDeque::with_capacity(graph.n());
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u] + 1;
        for &v in graph.neighbors(u) {
            if dist[v] == NONE {
                dist[v] = du;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Multi-source BFS from `roots`. Each non-root's parent is its lowest-id
/// neighbor one level closer to the roots.
pub fn bfs_structure(graph: &Graph, roots: &NodeSet) -> Result<BfsStructure> {
    if roots.is_empty() {
        return Err(CfcmError::invalid("BFS needs at least one root"));
    }
    for r in roots.iter() {
        graph.check_node(r)?;
    }
    let depth = bfs_distances(graph, roots.as_slice());
    if depth.contains(&NONE) {
        return Err(CfcmError::Disconnected);
    }
    let mut parent = vec![NONE; graph.n()];
    for u in 0..graph.n() {
        if depth[u] > 0 {
            // neighbors are sorted, so the first hit is the lowest id
            parent[u] = graph
                .neighbors(u)
                .iter()
                .copied()
                .find(|&v| depth[v] + 1 == depth[u])
                .expect("BFS layer without a parent");
        }
    }
    let mut order: Vec<usize> = (0..graph.n()).collect();
    order.sort_by_key(|&u| (depth[u], u));
    Ok(BfsStructure {
        order,
        parent,
        depth,
        roots: roots.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiameterMode {
    /// Repeated double-sweep BFS; exact on trees.
    DoubleSweep { sweeps: usize },
    /// All-pairs BFS. Limited to graphs with at most `EXACT_DIAMETER_LIMIT` nodes.
    Exact,
}

impl Default for DiameterMode {
    fn default() -> Self {
        DiameterMode::DoubleSweep { sweeps: 4 }
    }
}

pub const EXACT_DIAMETER_LIMIT: usize = 10_000;

/// Eccentricity of `u` together with the farthest node (lowest id on ties).
fn eccentricity(graph: &Graph, u: usize) -> (usize, usize) {
    let dist = bfs_distances(graph, &[u]);
    let mut far = u;
    for v in 0..graph.n() {
        if dist[v] != NONE && dist[v] > dist[far] {
            far = v;
        }
    }
    (dist[far], far)
}

/// Diameter estimate by repeated double sweep (four sweeps) starting from
/// the highest-degree node.
pub fn diameter_estimate(graph: &Graph) -> usize {
    diameter(graph, DiameterMode::default()).expect("double sweep cannot fail")
}

pub fn diameter(graph: &Graph, mode: DiameterMode) -> Result<usize> {
    match mode {
        DiameterMode::Exact => {
            if graph.n() > EXACT_DIAMETER_LIMIT {
                return Err(CfcmError::TooLarge {
                    what: "exact diameter",
                    size: graph.n() as u128,
                    limit: EXACT_DIAMETER_LIMIT as u128,
                });
            }
            Ok((0..graph.n()).map(|u| eccentricity(graph, u).0).max().unwrap_or(0))
        }
        DiameterMode::DoubleSweep { sweeps } => {
            let mut start = (0..graph.n())
                .max_by_key(|&u| (graph.degree(u), std::cmp::Reverse(u)))
                .unwrap_or(0);
            let mut best = 0;
            for _ in 0..sweeps.max(1) {
                let (e0, a) = eccentricity(graph, start);
                let (e1, b) = eccentricity(graph, a);
                best = best.max(e0).max(e1);
                if b == start {
                    break;
                }
                start = b;
            }
            Ok(best)
        }
    }
}

/// `max over u not in removed of |adj(u) \ removed|`.
pub fn max_degree_after_removal(graph: &Graph, removed: &NodeSet) -> usize {
    let mask = removed.mask(graph.n());
    (0..graph.n())
        .filter(|&u| !mask[u])
        .map(|u| graph.neighbors(u).iter().filter(|&&v| !mask[v]).count())
        .max()
        .unwrap_or(0)
}
