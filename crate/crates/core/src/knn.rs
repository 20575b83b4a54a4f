//! Automatically pruned mutual kNN graph.
//!
//! Every row keeps its `k` nearest finite candidates, with `k` growing like
//! `sqrt(ln n)`. Candidates farther than both a per-row fence and a global
//! fence (`median + 1.5 IQR` of the candidate distances) are dropped, except
//! that a row never ends up empty. An undirected edge survives only when both
//! endpoints retained each other.

use crate::stats::upper_fence;
use crate::transform::TransformState;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("degenerate graph input: need at least 2 points, got {0}")]
    Degenerate(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight table has {got} rows for {expected} points")]
    WeightCount { expected: usize, got: usize },
}

/// Neighbourhood size `max(1, min(ceil(sqrt(ln n)), n - 1))`.
pub fn neighborhood_size(n: usize) -> Result<usize, GraphError> {
    if n <= 1 {
        return Err(GraphError::Degenerate(n));
    }
    let k = (n as f64).ln().sqrt().ceil() as usize;
    Ok(k.min(n - 1).max(1))
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Transformed Euclidean distance plus the nonnegative local-metric penalty
/// derived from averaged per-node feature weights.
pub(crate) fn penalized_distance(
    zp: &[f64],
    zq: &[f64],
    wp: &[f64],
    wq: &[f64],
    gamma: f64,
) -> f64 {
    let base = euclidean(zp, zq);
    let d = zp.len() as f64;
    let mut norm2 = 0.0;
    let mut weighted = 0.0;
    for l in 0..zp.len() {
        let w = 0.5 * (wp[l] + wq[l]);
        norm2 += w * w;
        let diff = zp[l] - zq[l];
        weighted += w * diff * diff;
    }
    let kappa = if norm2 > 0.0 { (1.0 / norm2).clamp(1.0, d.max(1.0)) } else { d.max(1.0) };
    let local = (kappa * weighted).max(0.0).sqrt();
    base + gamma * (local - base).max(0.0)
}

/// Directed candidate distances; the diagonal is `+inf`.
pub fn candidate_distances(
    points: &[Vec<f64>],
    weights: Option<&[Vec<f64>]>,
    gamma: f64,
) -> Result<Vec<Vec<f64>>, GraphError> {
    let n = points.len();
    if n < 2 {
        return Err(GraphError::Degenerate(n));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(GraphError::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(GraphError::WeightCount {
                expected: n,
                got: w.len(),
            });
        }
        if let Some(row) = w.iter().find(|r| r.len() != dim) {
            return Err(GraphError::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    let mut out = vec![vec![f64::INFINITY; n]; n];
    for p in 0..n {
        for q in (p + 1)..n {
            let dist = match weights {
                None => euclidean(&points[p], &points[q]),
                Some(w) => penalized_distance(&points[p], &points[q], &w[p], &w[q], gamma),
            };
            out[p][q] = dist;
            out[q][p] = dist;
        }
    }
    Ok(out)
}

/// Undirected graph over an ordered set of points.
///
/// Local indices `0..len()` address the points in the order they were given;
/// `node_ids` maps them back to the caller's identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    node_ids: Vec<usize>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    retained: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    /// Graph with the given edges (local indices) and no candidate diagnostics.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        let mut list = Vec::new();
        for (a, b) in edges {
            if a == b {
                continue;
            }
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            if !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
                list.push((a, b));
            }
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }
        list.sort_unstable();
        Self {
            node_ids: (0..n).collect(),
            edges: list,
            adjacency,
            retained: vec![Vec::new(); n],
        }
    }

    pub fn with_node_ids(mut self, ids: Vec<usize>) -> Self {
        assert_eq!(ids.len(), self.len(), "node id count must match graph size");
        self.node_ids = ids;
        self
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn node_ids(&self) -> &[usize] {
        &self.node_ids
    }

    /// Unordered edges `(p, q)` with `p < q`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, p: usize) -> &[usize] {
        &self.adjacency[p]
    }

    pub fn has_edge(&self, p: usize, q: usize) -> bool {
        self.adjacency[p].binary_search(&q).is_ok()
    }

    /// Retained directed candidates of row `p` with their distances.
    pub fn retained(&self, p: usize) -> &[(usize, f64)] {
        &self.retained[p]
    }

    pub fn isolated(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.adjacency[p].is_empty()).collect()
    }

    /// Connected-component label per node, numbered by smallest member.
    pub fn connected_components(&self) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &u in &self.adjacency[v] {
                    if label[u] == usize::MAX {
                        label[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.connected_components().iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Build the pruned mutual kNN graph over already transformed points.
pub fn build_mutual_graph_transformed(
    points: &[Vec<f64>],
    weights: Option<&[Vec<f64>]>,
    gamma: f64,
) -> Result<NeighborGraph, GraphError> {
    let n = points.len();
    let k = neighborhood_size(n)?;
    let delta = candidate_distances(points, weights, gamma)?;

    let mut candidates: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for (p, row) in delta.iter().enumerate() {
        let mut finite: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|&(q, d)| q != p && d.is_finite())
            .map(|(q, &d)| (q, d))
            .collect();
        finite.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        finite.truncate(k);
        candidates.push(finite);
    }

    let pooled: Vec<f64> = candidates.iter().flatten().map(|&(_, d)| d).collect();
    let global = upper_fence(&pooled).unwrap_or(f64::INFINITY);

    let mut retained: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for row in &candidates {
        let dists: Vec<f64> = row.iter().map(|&(_, d)| d).collect();
        let local = upper_fence(&dists).unwrap_or(f64::INFINITY);
        let limit = local.min(global);
        let mut kept: Vec<(usize, f64)> = row.iter().copied().filter(|&(_, d)| d <= limit).collect();
        if kept.is_empty() {
            if let Some(&nearest) = row.first() {
                kept.push(nearest);
            }
        }
        retained.push(kept);
    }

    let mut edges = Vec::new();
    for p in 0..n {
        for &(q, _) in &retained[p] {
            if p < q && retained[q].iter().any(|&(r, _)| r == p) {
                edges.push((p, q));
            }
        }
    }
    let mut graph = NeighborGraph::from_edges(n, edges);
    graph.retained = retained;
    Ok(graph)
}

/// Fit-free entry point: transform raw `points` with `transform`, then build the graph.
pub fn build_mutual_graph<P: AsRef<[f64]>>(
    points: &[P],
    weights: Option<&[Vec<f64>]>,
    transform: &TransformState,
) -> Result<NeighborGraph, GraphError> {
    if points.len() < 2 {
        return Err(GraphError::Degenerate(points.len()));
    }
    let mut z = Vec::with_capacity(points.len());
    for p in points {
        let p = p.as_ref();
        if p.len() != transform.dim() {
            return Err(GraphError::DimensionMismatch {
                expected: transform.dim(),
                got: p.len(),
            });
        }
        let mut out = vec![0.0; p.len()];
        transform.apply_into(p, &mut out);
        z.push(out);
    }
    build_mutual_graph_transformed(&z, weights, transform.gamma)
}
