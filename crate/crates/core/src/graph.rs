//! Contact networks: construction, loading, downsampling and validation.
//!
//! A [`ContactGraph`] is undirected and weighted. Each weight is the daily
//! probability scaffold for transmission along that contact; calibration
//! later multiplies every weight by one common factor. Node ids are always
//! dense (`0..n_nodes`) so per-agent arrays index directly.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{debug, info};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid graph: {0}")]
    Invariant(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One undirected contact, stored with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

impl Edge {
    pub fn other(&self, node: usize) -> usize {
        if node == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Clone, Debug)]
pub struct ContactGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
    // (neighbor, edge index)
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl ContactGraph {
    /// Builds a graph, rejecting self-loops, duplicates, out-of-range ids and
    /// weights outside `(0, 1]`. Edge order is kept as given.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        let mut seen = HashSet::new();
        let mut stored = Vec::new();
        let mut adjacency = vec![Vec::new(); n_nodes];
        for e in edges {
            let (u, v) = (e.u.min(e.v), e.u.max(e.v));
            if u == v {
                return Err(GraphError::Invariant(format!("self-loop on node {u}")));
            }
            if v >= n_nodes {
                return Err(GraphError::Invariant(format!(
                    "edge ({u}, {v}) references a node outside 0..{n_nodes}"
                )));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(GraphError::Invariant(format!(
                    "edge ({u}, {v}) has weight {} outside (0, 1]",
                    e.weight
                )));
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::Invariant(format!("duplicate edge ({u}, {v})")));
            }
            let idx = stored.len();
            adjacency[u].push((v, idx));
            adjacency[v].push((u, idx));
            stored.push(Edge { u, v, weight: e.weight });
        }
        Ok(Self {
            n_nodes,
            edges: stored,
            adjacency,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[node].iter().map(|&(n, _)| n)
    }

    /// Neighbors paired with the weight of the connecting edge.
    pub fn weighted_neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[node]
            .iter()
            .map(move |&(n, e)| (n, self.edges[e].weight))
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.edges.iter().map(|e| e.weight).reduce(f64::max)
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n_nodes == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.n_nodes as f64
        }
    }

    pub fn degree_histogram(&self) -> DegreeHistogram {
        DegreeHistogram::from_degrees((0..self.n_nodes).map(|i| self.degree(i)))
    }

    /// Copy with every weight multiplied by `factor`; topology is untouched.
    pub fn scaled(&self, factor: f64) -> Result<Self, GraphError> {
        Self::new(
            self.n_nodes,
            self.edges.iter().map(|e| Edge {
                weight: e.weight * factor,
                ..*e
            }),
        )
    }

    /// Re-checks every structural invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        let rebuilt = Self::new(self.n_nodes, self.edges.iter().copied())?;
        let degree_sum: usize = self.adjacency.iter().map(Vec::len).sum();
        if degree_sum != 2 * self.edges.len() || rebuilt.adjacency != self.adjacency {
            return Err(GraphError::Invariant(
                "adjacency disagrees with edge list".into(),
            ));
        }
        Ok(())
    }
}

/// Degree → number of nodes with that degree.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DegreeHistogram(pub BTreeMap<usize, usize>);

impl DegreeHistogram {
    pub fn from_degrees(degrees: impl IntoIterator<Item = usize>) -> Self {
        let mut h = BTreeMap::new();
        for d in degrees {
            *h.entry(d).or_insert(0) += 1;
        }
        Self(h)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn l1_distance(&self, other: &Self) -> usize {
        let keys: HashSet<usize> = self.0.keys().chain(other.0.keys()).copied().collect();
        keys.into_iter()
            .map(|k| {
                let a = self.0.get(&k).copied().unwrap_or(0);
                let b = other.0.get(&k).copied().unwrap_or(0);
                a.abs_diff(b)
            })
            .sum()
    }
}

/// Preferential attachment with `m = round(target_edges / n)` edges per new
/// node, started from `m` unconnected seed nodes. Produces `m·(n − m)` edges.
pub fn generate_barabasi_albert(
    n: usize,
    target_edges: usize,
    seed: u64,
) -> Result<ContactGraph, GraphError> {
    if n < 3 {
        return Err(GraphError::Config(format!(
            "Barabási-Albert needs at least 3 nodes, got {n}"
        )));
    }
    let m = (target_edges as f64 / n as f64).round() as usize;
    if m < 1 || m >= n {
        return Err(GraphError::Config(format!(
            "target of {target_edges} edges on {n} nodes gives attachment parameter {m}; need 1 <= m < n"
        )));
    }
    let mut rng = rng::from_seed(seed);
    let mut edges = Vec::with_capacity(m * (n - m));
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * m * (n - m));
    let mut targets: Vec<usize> = (0..m).collect();
    for source in m..n {
        for &t in &targets {
            edges.push(Edge {
                u: t,
                v: source,
                weight: 1.0,
            });
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat_n(source, m));
        targets.clear();
        while targets.len() < m {
            let pick = repeated[rng.random_range(0..repeated.len())];
            if !targets.contains(&pick) {
                targets.push(pick);
            }
        }
    }
    ContactGraph::new(n, edges)
}

/// `m` distinct edges drawn uniformly without replacement from all
/// `n(n−1)/2` node pairs, listed in lexicographic order.
pub fn generate_uniform_random(n: usize, m: usize, seed: u64) -> Result<ContactGraph, GraphError> {
    let total = n * n.saturating_sub(1) / 2;
    if m > total {
        return Err(GraphError::Config(format!(
            "{m} edges requested but {n} nodes admit at most {total}"
        )));
    }
    let mut rng = rng::from_seed(seed);
    let mut pairs: Vec<(usize, usize)> = index::sample(&mut rng, total, m)
        .into_iter()
        .map(|k| pair_from_index(n, k))
        .collect();
    pairs.sort_unstable();
    ContactGraph::new(
        n,
        pairs.into_iter().map(|(u, v)| Edge { u, v, weight: 1.0 }),
    )
}

// Row-major enumeration of the upper triangle: row u holds n-1-u pairs.
fn pair_from_index(n: usize, k: usize) -> (usize, usize) {
    let offset = |u: usize| u * (2 * n - u - 1) / 2;
    let nf = n as f64;
    let guess = ((2.0 * nf - 1.0) - ((2.0 * nf - 1.0).powi(2) - 8.0 * k as f64).sqrt()) / 2.0;
    let mut u = (guess.max(0.0) as usize).min(n - 2);
    while u > 0 && offset(u) > k {
        u -= 1;
    }
    while offset(u + 1) <= k {
        u += 1;
    }
    (u, u + 1 + (k - offset(u)))
}

/// Per-node labels from an edge-list `[nodes]` block, indexed by dense id.
pub type NodeAttributes = Vec<Option<String>>;

/// Parses the whitespace edge-list format.
///
/// Each data line is `u v weight`. Lines starting with `#` and blank lines
/// are skipped. A line reading `[nodes]` starts an optional trailing block
/// whose lines are `id [label]`; declared ids become nodes even when
/// isolated, and labels are returned separately. Original ids are compacted
/// to `0..n` in ascending order.
pub fn parse_edge_list(text: &str) -> Result<(ContactGraph, NodeAttributes), GraphError> {
    let mut raw_edges: Vec<(u64, u64, f64, usize)> = Vec::new();
    let mut labels: BTreeMap<u64, Option<String>> = BTreeMap::new();
    let mut ids: std::collections::BTreeSet<u64> = Default::default();
    let mut in_nodes = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed == "[nodes]" {
            in_nodes = true;
            continue;
        }
        let parse_err = |msg: String| GraphError::Parse { line: line_no, msg };
        let mut fields = trimmed.split_whitespace();
        let parse_id = |s: Option<&str>, what: &str| -> Result<u64, GraphError> {
            let s = s.ok_or_else(|| parse_err(format!("missing {what}")))?;
            s.parse::<u64>()
                .map_err(|_| parse_err(format!("{what} '{s}' is not a non-negative integer")))
        };
        if in_nodes {
            let id = parse_id(fields.next(), "node id")?;
            let label = fields.collect::<Vec<_>>().join(" ");
            ids.insert(id);
            labels.insert(id, (!label.is_empty()).then_some(label));
            continue;
        }
        let u = parse_id(fields.next(), "source node")?;
        let v = parse_id(fields.next(), "target node")?;
        let w_str = fields
            .next()
            .ok_or_else(|| parse_err("missing weight".into()))?;
        let w: f64 = w_str
            .parse()
            .map_err(|_| parse_err(format!("weight '{w_str}' is not a number")))?;
        if let Some(extra) = fields.next() {
            return Err(parse_err(format!("unexpected trailing field '{extra}'")));
        }
        if !(w > 0.0 && w <= 1.0) {
            return Err(parse_err(format!("weight {w} outside (0, 1]")));
        }
        if u == v {
            return Err(parse_err(format!("self-loop on node {u}")));
        }
        ids.insert(u);
        ids.insert(v);
        raw_edges.push((u, v, w, line_no));
    }
    let dense: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::with_capacity(raw_edges.len());
    for (u, v, weight, line) in raw_edges {
        let (a, b) = (dense[&u], dense[&v]);
        let key = (a.min(b), a.max(b));
        if let Some(first) = seen.insert(key, line) {
            return Err(GraphError::Parse {
                line,
                msg: format!("duplicate edge {u}-{v} (first seen on line {first})"),
            });
        }
        edges.push(Edge { u: a, v: b, weight });
    }
    let attrs = ids
        .iter()
        .map(|id| labels.get(id).cloned().flatten())
        .collect();
    Ok((ContactGraph::new(ids.len(), edges)?, attrs))
}

/// Reads an edge-list file, ignoring any node attribute labels.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<ContactGraph, GraphError> {
    load_edge_list_with_attributes(path).map(|(g, _)| g)
}

pub fn load_edge_list_with_attributes(
    path: impl AsRef<Path>,
) -> Result<(ContactGraph, NodeAttributes), GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_edge_list(&text)
}

/// Serializes `g` in the edge-list format. Isolated nodes are declared in a
/// `[nodes]` block so that reloading preserves the node count.
pub fn format_edge_list(g: &ContactGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} nodes, {} edges", g.n_nodes(), g.n_edges());
    for e in g.edges() {
        let _ = writeln!(out, "{} {} {}", e.u, e.v, e.weight);
    }
    if (0..g.n_nodes()).any(|i| g.degree(i) == 0) {
        out.push_str("[nodes]\n");
        for i in 0..g.n_nodes() {
            let _ = writeln!(out, "{i}");
        }
    }
    out
}

/// Counts edges by the unordered pair of endpoint labels. Unlabelled nodes
/// are skipped.
pub fn mixing_matrix(
    g: &ContactGraph,
    attrs: &NodeAttributes,
) -> BTreeMap<(String, String), usize> {
    let mut counts = BTreeMap::new();
    for e in g.edges() {
        if let (Some(a), Some(b)) = (&attrs[e.u], &attrs[e.v]) {
            let key = if a <= b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Clone, Copy, Debug)]
pub struct RewireOptions {
    /// Maximum shuffle-and-pair passes over the remaining stubs.
    pub max_attempts: usize,
}

impl Default for RewireOptions {
    fn default() -> Self {
        Self { max_attempts: 50 }
    }
}

/// Bookkeeping from [`sample_and_rewire`]. Per-node vectors use the new ids.
#[derive(Clone, Debug, Serialize)]
pub struct RewireReport {
    /// Original id of each retained node.
    pub original_ids: Vec<usize>,
    pub clusters: usize,
    pub internal_degree: Vec<usize>,
    pub stubs: Vec<usize>,
    pub matched_stubs: Vec<usize>,
    pub dropped_stubs: usize,
    /// Histogram of internal + stub degrees, before pairing.
    pub target_histogram: DegreeHistogram,
    pub final_histogram: DegreeHistogram,
    pub histogram_l1: usize,
    /// How stubs were reconnected; recorded in run metadata.
    pub pairing_rule: &'static str,
}

/// A half-edge left dangling when a cluster sample cuts a contact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stub {
    pub node: usize,
    pub weight: f64,
}

/// Result of [`pair_stubs`]: new edges plus whatever could not be placed.
#[derive(Clone, Debug)]
pub struct StubPairing {
    pub edges: Vec<Edge>,
    pub unmatched: Vec<Stub>,
}

/// Configuration-model pairing of `stubs`, rejecting self-loops and any pair
/// already in `existing`. Each pass shuffles the leftovers and pairs them
/// consecutively; after `max_attempts` passes the remainder is dropped. A
/// paired edge takes the mean of its two stub weights.
pub fn pair_stubs<R: Rng + ?Sized>(
    stubs: Vec<Stub>,
    existing: &mut HashSet<(usize, usize)>,
    max_attempts: usize,
    rng: &mut R,
) -> StubPairing {
    let mut remaining = stubs;
    let mut edges = Vec::new();
    for _ in 0..max_attempts {
        if remaining.len() < 2 {
            break;
        }
        remaining.shuffle(rng);
        let mut leftover = Vec::new();
        let mut chunks = remaining.chunks_exact(2);
        for pair in &mut chunks {
            let (a, b) = (pair[0], pair[1]);
            let key = (a.node.min(b.node), a.node.max(b.node));
            if a.node != b.node && existing.insert(key) {
                edges.push(Edge {
                    u: key.0,
                    v: key.1,
                    weight: 0.5 * (a.weight + b.weight),
                });
            } else {
                leftover.extend_from_slice(pair);
            }
        }
        leftover.extend_from_slice(chunks.remainder());
        remaining = leftover;
    }
    StubPairing {
        edges,
        unmatched: remaining,
    }
}

/// Downsamples `g` to `target_n` nodes.
///
/// Clusters are grown breadth-first from uniformly random unselected roots
/// until `target_n` nodes are collected. Edges between selected nodes are
/// kept; every edge leaving the selection becomes a stub on its selected
/// endpoint, and stubs are re-paired with [`pair_stubs`] so each node keeps
/// its original degree where possible.
pub fn sample_and_rewire(
    g: &ContactGraph,
    target_n: usize,
    seed: u64,
    options: RewireOptions,
) -> Result<(ContactGraph, RewireReport), GraphError> {
    if target_n >= g.n_nodes() {
        return Err(GraphError::Config(format!(
            "sampling target {target_n} must be below the source size {}",
            g.n_nodes()
        )));
    }
    let mut rng = rng::from_seed(seed);
    let mut selected = vec![false; g.n_nodes()];
    let mut unselected: Vec<usize> = (0..g.n_nodes()).collect();
    let mut count = 0;
    let mut clusters = 0;
    let mut queue = VecDeque::new();
    while count < target_n {
        // swap_remove keeps root selection O(1); stale entries are skipped
        let root = unselected.swap_remove(rng.random_range(0..unselected.len()));
        if selected[root] {
            continue;
        }
        clusters += 1;
        selected[root] = true;
        count += 1;
        queue.clear();
        queue.push_back(root);
        'bfs: while let Some(node) = queue.pop_front() {
            for nb in g.neighbors(node) {
                if count >= target_n {
                    break 'bfs;
                }
                if !selected[nb] {
                    selected[nb] = true;
                    count += 1;
                    queue.push_back(nb);
                }
            }
        }
    }

    let original_ids: Vec<usize> = (0..g.n_nodes()).filter(|&i| selected[i]).collect();
    let mut new_id = vec![usize::MAX; g.n_nodes()];
    for (new, &old) in original_ids.iter().enumerate() {
        new_id[old] = new;
    }
    let mut internal = Vec::new();
    let mut stubs = Vec::new();
    let mut internal_degree = vec![0; target_n];
    let mut stub_count = vec![0; target_n];
    for e in g.edges() {
        match (selected[e.u], selected[e.v]) {
            (true, true) => {
                let (a, b) = (new_id[e.u], new_id[e.v]);
                internal_degree[a] += 1;
                internal_degree[b] += 1;
                internal.push(Edge {
                    u: a.min(b),
                    v: a.max(b),
                    weight: e.weight,
                });
            }
            (true, false) | (false, true) => {
                let inside = if selected[e.u] { e.u } else { e.v };
                let node = new_id[inside];
                stub_count[node] += 1;
                stubs.push(Stub {
                    node,
                    weight: e.weight,
                });
            }
            (false, false) => {}
        }
    }
    let target_histogram = DegreeHistogram::from_degrees(
        internal_degree
            .iter()
            .zip(&stub_count)
            .map(|(a, b)| a + b),
    );

    let mut existing: HashSet<(usize, usize)> = internal.iter().map(|e| (e.u, e.v)).collect();
    let n_stubs = stubs.len();
    let pairing = pair_stubs(stubs, &mut existing, options.max_attempts, &mut rng);
    let mut matched_stubs = vec![0; target_n];
    for e in &pairing.edges {
        matched_stubs[e.u] += 1;
        matched_stubs[e.v] += 1;
    }
    let dropped = pairing.unmatched.len();
    if dropped > 0 {
        info!("stub pairing dropped {dropped} of {n_stubs} stubs");
    }
    debug!(
        "sampled {target_n} nodes in {clusters} clusters: {} internal edges, {} rewired",
        internal.len(),
        pairing.edges.len()
    );
    internal.extend(pairing.edges);
    let out = ContactGraph::new(target_n, internal)?;
    let final_histogram = out.degree_histogram();
    let histogram_l1 = final_histogram.l1_distance(&target_histogram);
    Ok((
        out,
        RewireReport {
            original_ids,
            clusters,
            internal_degree,
            stubs: stub_count,
            matched_stubs,
            dropped_stubs: dropped,
            target_histogram,
            final_histogram,
            histogram_l1,
            pairing_rule: "uniform_stub_pairing",
        },
    ))
}
