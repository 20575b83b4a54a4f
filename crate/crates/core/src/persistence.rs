//! Density-guided 0-dimensional persistence over a node graph.
//!
//! Nodes are swept in descending density (ties: ascending index). A node with
//! no already-active neighbour births a mode; otherwise it joins the mode of
//! its densest active neighbour. Whenever the newly active node links two
//! distinct active components, the component whose mode was born lower dies
//! into the other, with persistence `birth - current level`. Modes that never
//! die have infinite persistence, one per connected component.

use serde::{Deserialize, Serialize};

use crate::knn::NeighborGraph;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PersistenceError {
    #[error("empty graph")]
    EmptyGraph,
    #[error("density table has {got} entries for {expected} nodes")]
    DensityCount { expected: usize, got: usize },
    #[error("non-finite density at node {0}")]
    NonFiniteDensity(usize),
}

/// One density mode of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Local node index that created the mode.
    pub node: usize,
    pub birth: f64,
    /// `birth - death level`, or `+inf` for survivors.
    pub persistence: f64,
    /// Mode this one died into.
    pub merged_into: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceTree {
    /// Mode each node joined when it was activated.
    pub node_mode: Vec<usize>,
    pub modes: Vec<Mode>,
    /// Distinct positive finite persistence values, ascending.
    pub finite_levels: Vec<f64>,
}

impl PersistenceTree {
    pub fn len(&self) -> usize {
        self.node_mode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_mode.is_empty()
    }

    pub fn infinite_mode_count(&self) -> usize {
        self.modes.iter().filter(|m| m.persistence.is_infinite()).count()
    }

    /// Persistence of the mode owning `node`.
    pub fn node_persistence(&self, node: usize) -> f64 {
        self.modes[self.node_mode[node]].persistence
    }
}

/// Partition of the graph nodes into raw persistence components.
#[derive(Debug, Clone, PartialEq)]
pub struct RawComponentPartition {
    pub component_of: Vec<usize>,
    pub components: Vec<Vec<usize>>,
    pub epsilon: f64,
}

impl RawComponentPartition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Build from a label per node; ids are renumbered by first appearance.
    pub fn from_labels(labels: &[usize], epsilon: f64) -> Self {
        let mut remap = std::collections::HashMap::new();
        let mut component_of = Vec::with_capacity(labels.len());
        let mut components: Vec<Vec<usize>> = Vec::new();
        for (node, &label) in labels.iter().enumerate() {
            let id = *remap.entry(label).or_insert_with(|| {
                components.push(Vec::new());
                components.len() - 1
            });
            components[id].push(node);
            component_of.push(id);
        }
        Self {
            component_of,
            components,
            epsilon,
        }
    }
}

struct Sets {
    parent: Vec<usize>,
    // surviving mode of each root
    mode: Vec<usize>,
}

impl Sets {
    fn find(&mut self, mut v: usize) -> usize {
        let mut root = v;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[v] != root {
            let next = self.parent[v];
            self.parent[v] = root;
            v = next;
        }
        root
    }
}

/// Run the descending-density sweep over `graph`.
pub fn run_persistence(
    graph: &NeighborGraph,
    densities: &[f64],
) -> Result<PersistenceTree, PersistenceError> {
    let n = graph.len();
    if n == 0 {
        return Err(PersistenceError::EmptyGraph);
    }
    if densities.len() != n {
        return Err(PersistenceError::DensityCount {
            expected: n,
            got: densities.len(),
        });
    }
    if let Some(i) = densities.iter().position(|d| !d.is_finite()) {
        return Err(PersistenceError::NonFiniteDensity(i));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| densities[b].total_cmp(&densities[a]).then(a.cmp(&b)));
    let mut rank = vec![0; n];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }

    let mut sets = Sets {
        parent: (0..n).collect(),
        mode: vec![usize::MAX; n],
    };
    let mut node_mode = vec![usize::MAX; n];
    let mut modes: Vec<Mode> = Vec::new();

    for &v in &order {
        let level = densities[v];
        // Active neighbours in activation order: the first is the densest.
        let mut active: Vec<usize> = graph
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&u| rank[u] < rank[v])
            .collect();
        active.sort_by_key(|&u| rank[u]);

        match active.first() {
            None => {
                modes.push(Mode {
                    node: v,
                    birth: level,
                    persistence: f64::INFINITY,
                    merged_into: None,
                });
                node_mode[v] = modes.len() - 1;
                sets.mode[v] = modes.len() - 1;
            }
            Some(&top) => {
                node_mode[v] = node_mode[top];
                let root = sets.find(top);
                sets.parent[v] = root;
            }
        }

        for &u in &active {
            let a = sets.find(v);
            let b = sets.find(u);
            if a == b {
                continue;
            }
            let (ma, mb) = (sets.mode[a], sets.mode[b]);
            // Lower birth dies; on equal births the later-created mode dies.
            let a_survives = modes[ma].birth > modes[mb].birth
                || (modes[ma].birth == modes[mb].birth && rank[modes[ma].node] < rank[modes[mb].node]);
            let (keep_root, lose_root, keep, lose) = if a_survives { (a, b, ma, mb) } else { (b, a, mb, ma) };
            modes[lose].persistence = (modes[lose].birth - level).max(0.0);
            modes[lose].merged_into = Some(keep);
            sets.parent[lose_root] = keep_root;
        }
    }

    let mut finite_levels: Vec<f64> = modes
        .iter()
        .map(|m| m.persistence)
        .filter(|p| p.is_finite() && *p > 0.0)
        .collect();
    finite_levels.sort_by(f64::total_cmp);
    finite_levels.dedup();

    Ok(PersistenceTree {
        node_mode,
        modes,
        finite_levels,
    })
}

/// Threshold just below the largest gap in `0 = a_0 < a_1 < ... < a_R`.
///
/// Returns 0 when `R <= 1`. Ties between equal gaps go to the larger upper level.
pub fn largest_gap_threshold(levels: &[f64]) -> f64 {
    if levels.len() <= 1 {
        return 0.0;
    }
    let mut best_gap = f64::NEG_INFINITY;
    let mut best_lower = 0.0;
    let mut prev = 0.0;
    for &a in levels {
        let gap = a - prev;
        if gap >= best_gap {
            best_gap = gap;
            best_lower = prev;
        }
        prev = a;
    }
    best_lower
}

/// Label every node by the first ancestor mode whose persistence exceeds `epsilon`.
pub fn extract_components(tree: &PersistenceTree, epsilon: f64) -> RawComponentPartition {
    let labels: Vec<usize> = tree
        .node_mode
        .iter()
        .map(|&start| {
            let mut m = start;
            while tree.modes[m].persistence <= epsilon {
                match tree.modes[m].merged_into {
                    Some(next) => m = next,
                    None => break,
                }
            }
            m
        })
        .collect();
    RawComponentPartition::from_labels(&labels, epsilon)
}
