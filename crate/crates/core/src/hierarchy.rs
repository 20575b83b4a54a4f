//! Persistence-constrained agglomeration of raw components.
//!
//! Raw components are never split. They are merged pairwise along the edges
//! of a mutual kNN graph built over their support-weighted centroids, always
//! taking the adjacent pair with the smallest Ward-form height
//! `W_A W_B / (W_A + W_B) * |mu_A - mu_B|^2`. Merging stops once `c_min`
//! groups remain or no adjacent pair is left, and the output partition is the
//! level right before the largest jump between consecutive merge heights.

use std::collections::BTreeSet;

use crate::knn::{build_mutual_graph_transformed, GraphError, NeighborGraph};
use crate::persistence::{PersistenceTree, RawComponentPartition};
use crate::stats::hazen_median;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HierarchyError {
    #[error("no components to agglomerate")]
    Empty,
    #[error("masses must contain at least one positive value")]
    NoPositiveMass,
    #[error("component graph has {got} nodes for {expected} components")]
    GraphSize { expected: usize, got: usize },
    #[error("node {0} is not covered by the raw partition")]
    UncoveredNode(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSummary {
    pub members: Vec<usize>,
    pub support: u64,
    pub centroid: Vec<f64>,
    pub persistence: f64,
    pub merge_weight: f64,
}

/// Support-weighted mean persistence of the modes owning `members`.
///
/// Infinite persistences are replaced by `birth - min_density`.
pub fn persistence_summary(
    tree: &PersistenceTree,
    members: &[usize],
    supports: &[u64],
    densities: &[f64],
) -> f64 {
    let floor = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let mut acc = 0.0;
    let mut total = 0.0;
    for &v in members {
        let mode = &tree.modes[tree.node_mode[v]];
        let p = if mode.persistence.is_finite() {
            mode.persistence
        } else {
            (mode.birth - floor).max(0.0)
        };
        let w = supports[v] as f64;
        acc += w * p;
        total += w;
    }
    if total > 0.0 {
        acc / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableMasses {
    pub masses: Vec<f64>,
    /// True when the persistence-scaled masses were invalid and plain supports are used.
    pub fell_back: bool,
}

/// `S_a * pi_a / (pi_a + pi_ref)` with `pi_ref` the median positive persistence,
/// falling back to `S_a` for every component if any mass is non-finite or nonpositive.
pub fn ph_stable_masses(supports: &[f64], persistences: &[f64]) -> StableMasses {
    let positive: Vec<f64> = persistences
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > 0.0)
        .collect();
    let scaled = hazen_median(&positive).ok().map(|reference| {
        supports
            .iter()
            .zip(persistences)
            .map(|(s, p)| s * p / (p + reference))
            .collect::<Vec<f64>>()
    });
    match scaled {
        Some(m) if m.iter().all(|v| v.is_finite() && *v > 0.0) => StableMasses {
            masses: m,
            fell_back: false,
        },
        _ => StableMasses {
            masses: supports.to_vec(),
            fell_back: true,
        },
    }
}

/// `exp` of the Shannon entropy of the normalised masses.
pub fn entropy_effective_count(masses: &[f64]) -> Result<f64, HierarchyError> {
    let total: f64 = masses.iter().filter(|m| **m > 0.0).sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(HierarchyError::NoPositiveMass);
    }
    let h: f64 = masses
        .iter()
        .filter(|m| **m > 0.0)
        .map(|m| {
            let p = m / total;
            -p * p.ln()
        })
        .sum();
    Ok(h.exp().max(1.0))
}

pub fn min_retained_count(c_ent: f64, k_ph: usize) -> usize {
    let ceil = if c_ent.is_finite() { c_ent.ceil().max(1.0) as usize } else { k_ph };
    ceil.min(k_ph).max(1)
}

pub fn merge_height(weight_a: f64, weight_b: f64, centroid_a: &[f64], centroid_b: &[f64]) -> f64 {
    let d2: f64 = centroid_a
        .iter()
        .zip(centroid_b)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    weight_a * weight_b / (weight_a + weight_b) * d2
}

/// Recorded chain of partitions over raw components.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentHierarchy {
    /// `levels[l][a]` is the group of component `a` after `l` merges; a group
    /// is named by its smallest component id.
    pub levels: Vec<Vec<usize>>,
    /// Height of the merge producing `levels[l + 1]`.
    pub merge_heights: Vec<f64>,
    /// Group ids merged at each step.
    pub merges: Vec<(usize, usize)>,
    pub c_min: usize,
    pub selected_level: usize,
}

impl ComponentHierarchy {
    pub fn merge_count(&self) -> usize {
        self.merge_heights.len()
    }

    pub fn group_count(&self, level: usize) -> usize {
        self.levels[level].iter().collect::<BTreeSet<_>>().len()
    }
}

struct Group {
    weight: f64,
    centroid: Vec<f64>,
    neighbors: BTreeSet<usize>,
    alive: bool,
}

/// Greedy Ward-form agglomeration restricted to `component_graph` edges.
///
/// `selected_level` is left at 0; see [`select_cut`].
pub fn agglomerate(
    summaries: &[ComponentSummary],
    component_graph: &NeighborGraph,
    c_min: usize,
) -> Result<ComponentHierarchy, HierarchyError> {
    let k = summaries.len();
    if k == 0 {
        return Err(HierarchyError::Empty);
    }
    if component_graph.len() != k {
        return Err(HierarchyError::GraphSize {
            expected: k,
            got: component_graph.len(),
        });
    }
    let mut groups: Vec<Group> = summaries
        .iter()
        .enumerate()
        .map(|(a, s)| Group {
            weight: s.merge_weight,
            centroid: s.centroid.clone(),
            neighbors: component_graph.neighbors(a).iter().copied().collect(),
            alive: true,
        })
        .collect();
    let mut label: Vec<usize> = (0..k).collect();
    let mut levels = vec![label.clone()];
    let mut merge_heights = Vec::new();
    let mut merges = Vec::new();
    let mut alive = k;

    while alive > c_min.max(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..k {
            if !groups[a].alive {
                continue;
            }
            for &b in groups[a].neighbors.range(a + 1..) {
                let h = merge_height(groups[a].weight, groups[b].weight, &groups[a].centroid, &groups[b].centroid);
                // Strict comparison keeps the lexicographically smallest pair on ties.
                if best.is_none_or(|(bh, _, _)| h < bh) {
                    best = Some((h, a, b));
                }
            }
        }
        let Some((height, a, b)) = best else { break };

        let wa = groups[a].weight;
        let wb = groups[b].weight;
        let w = wa + wb;
        let centroid: Vec<f64> = groups[a]
            .centroid
            .iter()
            .zip(&groups[b].centroid)
            .map(|(x, y)| (wa * x + wb * y) / w)
            .collect();
        let b_neighbors = std::mem::take(&mut groups[b].neighbors);
        groups[b].alive = false;
        for &c in &b_neighbors {
            groups[c].neighbors.remove(&b);
            if c != a {
                groups[c].neighbors.insert(a);
                groups[a].neighbors.insert(c);
            }
        }
        groups[a].neighbors.remove(&b);
        groups[a].weight = w;
        groups[a].centroid = centroid;

        for l in label.iter_mut() {
            if *l == b {
                *l = a;
            }
        }
        levels.push(label.clone());
        merge_heights.push(height);
        merges.push((a, b));
        alive -= 1;
    }

    Ok(ComponentHierarchy {
        levels,
        merge_heights,
        merges,
        c_min,
        selected_level: 0,
    })
}

/// Level right before the largest forward gap between merge heights.
///
/// Level `l` (after `l` merges) has forward gap `q_{l+1} - q_l` with `q_0 = 0`;
/// only levels with at least `c_min` groups and a forward gap compete, and ties
/// go to the larger upper height. Without any merge the answer is level 0.
pub fn select_cut(hierarchy: &ComponentHierarchy, c_min: usize) -> usize {
    let q = &hierarchy.merge_heights;
    let mut best: Option<(f64, f64, usize)> = None;
    for l in 0..q.len() {
        if hierarchy.group_count(l) < c_min {
            continue;
        }
        let lower = if l == 0 { 0.0 } else { q[l - 1] };
        let upper = q[l];
        let gap = upper - lower;
        let better = match best {
            None => true,
            Some((bg, bu, _)) => gap > bg || (gap == bg && upper >= bu),
        };
        if better {
            best = Some((gap, upper, l));
        }
    }
    best.map_or(0, |(_, _, l)| l)
}

/// Expand the partition at `level` to a node labelling.
///
/// Labels are `0..C`, numbered in order of first appearance over the nodes.
pub fn expand_mapping(
    hierarchy: &ComponentHierarchy,
    level: usize,
    raw: &RawComponentPartition,
) -> Result<Vec<usize>, HierarchyError> {
    let groups = &hierarchy.levels[level];
    let mut remap = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(raw.component_of.len());
    for (node, &comp) in raw.component_of.iter().enumerate() {
        let group = *groups.get(comp).ok_or(HierarchyError::UncoveredNode(node))?;
        let next = remap.len();
        out.push(*remap.entry(group).or_insert(next));
    }
    Ok(out)
}

/// Everything produced when mapping raw components to output clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMapping {
    pub summaries: Vec<ComponentSummary>,
    pub masses: StableMasses,
    pub c_ent: f64,
    pub component_graph: NeighborGraph,
    pub hierarchy: ComponentHierarchy,
    /// Output cluster per node.
    pub node_cluster: Vec<usize>,
    pub cluster_count: usize,
}

/// Summarise raw components, agglomerate them and cut the hierarchy.
///
/// `transformed` holds node representatives in the transformed space, aligned
/// with the partition's node indices. Without a persistence tree every
/// component gets persistence 0 and the masses fall back to plain supports.
pub fn map_components(
    raw: &RawComponentPartition,
    tree: Option<&PersistenceTree>,
    transformed: &[Vec<f64>],
    supports: &[u64],
    densities: &[f64],
) -> Result<ComponentMapping, HierarchyError> {
    if raw.is_empty() {
        return Err(HierarchyError::Empty);
    }
    let dim = transformed.first().map_or(0, Vec::len);
    let mut summaries = Vec::with_capacity(raw.len());
    for members in &raw.components {
        let support: u64 = members.iter().map(|&v| supports[v]).sum();
        let mut centroid = vec![0.0; dim];
        for &v in members {
            let w = supports[v] as f64;
            for (c, x) in centroid.iter_mut().zip(&transformed[v]) {
                *c += w * x;
            }
        }
        for c in &mut centroid {
            *c /= support as f64;
        }
        let persistence = tree.map_or(0.0, |t| persistence_summary(t, members, supports, densities));
        summaries.push(ComponentSummary {
            members: members.clone(),
            support,
            centroid,
            persistence,
            merge_weight: support as f64,
        });
    }

    let support_totals: Vec<f64> = summaries.iter().map(|s| s.support as f64).collect();
    let persistences: Vec<f64> = summaries.iter().map(|s| s.persistence).collect();
    let masses = ph_stable_masses(&support_totals, &persistences);
    for (s, m) in summaries.iter_mut().zip(&masses.masses) {
        s.merge_weight = *m;
    }
    let c_ent = entropy_effective_count(&masses.masses)?;
    let c_min = min_retained_count(c_ent, summaries.len());

    let component_graph = if summaries.len() >= 2 {
        let centroids: Vec<Vec<f64>> = summaries.iter().map(|s| s.centroid.clone()).collect();
        build_mutual_graph_transformed(&centroids, None, 0.0)?
    } else {
        NeighborGraph::from_edges(1, [])
    };

    let mut hierarchy = agglomerate(&summaries, &component_graph, c_min)?;
    hierarchy.selected_level = select_cut(&hierarchy, c_min);
    let node_cluster = expand_mapping(&hierarchy, hierarchy.selected_level, raw)?;
    let cluster_count = node_cluster.iter().copied().max().map_or(0, |m| m + 1);

    Ok(ComponentMapping {
        summaries,
        masses,
        c_ent,
        component_graph,
        hierarchy,
        node_cluster,
        cluster_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(weight: f64, centroid: Vec<f64>) -> ComponentSummary {
        ComponentSummary {
            members: vec![],
            support: weight as u64,
            centroid,
            persistence: 0.0,
            merge_weight: weight,
        }
    }

    fn hierarchy_with_heights(q: &[f64], groups: usize) -> ComponentHierarchy {
        // Synthetic chain over `groups` components merging 0<-1, 0<-2, ...
        let mut label: Vec<usize> = (0..groups).collect();
        let mut levels = vec![label.clone()];
        for step in 0..q.len() {
            label[step + 1] = 0;
            levels.push(label.clone());
        }
        ComponentHierarchy {
            levels,
            merge_heights: q.to_vec(),
            merges: vec![],
            c_min: 1,
            selected_level: 0,
        }
    }

    #[test]
    fn stable_mass_examples() {
        let m = ph_stable_masses(&[10.0, 4.0], &[1.0, 1.0]);
        assert!(!m.fell_back);
        assert_eq!(m.masses, vec![5.0, 2.0]);

        let m = ph_stable_masses(&[10.0, 4.0], &[0.0, 0.0]);
        assert!(m.fell_back);
        assert_eq!(m.masses, vec![10.0, 4.0]);

        // pi_ref is the median of {3, 1}: with a third component at 1 the median is 1.
        let m = ph_stable_masses(&[10.0, 1.0, 1.0], &[3.0, 1.0, 1.0]);
        assert!((m.masses[0] - 7.5).abs() < 1e-12);

        // a single zero persistence makes one mass zero -> fallback for everyone
        let m = ph_stable_masses(&[10.0, 4.0], &[2.0, 0.0]);
        assert!(m.fell_back);
    }

    #[test]
    fn entropy_count_examples() {
        assert!((entropy_effective_count(&[2.0; 4]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(entropy_effective_count(&[7.0]).unwrap(), 1.0);
        let h = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((h - 0.562_335_144_618_9).abs() < 1e-12);
        let c = entropy_effective_count(&[3.0, 1.0]).unwrap();
        assert!((c - h.exp()).abs() < 1e-12);
        assert!((c - 1.7548).abs() < 1e-4);
        assert!(entropy_effective_count(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn min_retained_examples() {
        assert_eq!(min_retained_count(1.7548, 2), 2);
        assert_eq!(min_retained_count(5.0, 3), 3);
        assert_eq!(min_retained_count(1.0, 7), 1);
    }

    #[test]
    fn merge_height_examples() {
        assert_eq!(merge_height(1.0, 1.0, &[0.0, 0.0], &[2.0, 0.0]), 2.0);
        assert_eq!(merge_height(3.0, 5.0, &[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(merge_height(2.0, 2.0, &[0.0], &[1.0]), 1.0);
    }

    #[test]
    fn single_component_has_no_merges() {
        let h = agglomerate(&[summary(3.0, vec![0.0])], &NeighborGraph::from_edges(1, []), 1).unwrap();
        assert_eq!(h.levels.len(), 1);
        assert_eq!(select_cut(&h, 1), 0);
    }

    #[test]
    fn two_adjacent_components_merge_once() {
        let s = [summary(1.0, vec![0.0]), summary(1.0, vec![2.0])];
        let h = agglomerate(&s, &NeighborGraph::from_edges(2, [(0, 1)]), 1).unwrap();
        assert_eq!(h.merge_heights, vec![2.0]);
        assert_eq!(h.levels, vec![vec![0, 1], vec![0, 0]]);
    }

    #[test]
    fn path_merges_cheapest_adjacent_pair_first() {
        let s = [summary(1.0, vec![0.0]), summary(1.0, vec![1.0]), summary(1.0, vec![3.0])];
        let g = NeighborGraph::from_edges(3, [(0, 1), (1, 2)]);
        // brute-force scan over adjacent pairs
        let mut pairs: Vec<(f64, usize, usize)> = g
            .edges()
            .iter()
            .map(|&(a, b)| (merge_height(1.0, 1.0, &s[a].centroid, &s[b].centroid), a, b))
            .collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let h = agglomerate(&s, &g, 1).unwrap();
        assert_eq!(h.merges[0], (pairs[0].1, pairs[0].2));
        assert_eq!(h.merges[0], (0, 1));
        assert_eq!(h.merge_heights[0], 0.5);
    }

    #[test]
    fn disconnected_components_stop_early() {
        let s = [summary(1.0, vec![0.0]), summary(1.0, vec![1.0]), summary(1.0, vec![9.0])];
        let g = NeighborGraph::from_edges(3, [(0, 1)]);
        let h = agglomerate(&s, &g, 1).unwrap();
        assert_eq!(h.merge_count(), 1);
        assert_eq!(h.group_count(1), 2);
    }

    #[test]
    fn cut_examples() {
        let h = hierarchy_with_heights(&[1.0, 1.5, 5.0], 4);
        assert_eq!(select_cut(&h, 1), 2);
        // only level 0 has >= 4 groups
        assert_eq!(select_cut(&h, 4), 0);
        // equal gaps (1, 1): larger upper height wins
        let h = hierarchy_with_heights(&[1.0, 2.0], 3);
        assert_eq!(select_cut(&h, 1), 1);
        let h = hierarchy_with_heights(&[], 1);
        assert_eq!(select_cut(&h, 1), 0);
    }

    #[test]
    fn expand_examples() {
        let raw = RawComponentPartition::from_labels(&[5, 5, 7, 9, 7], 0.0);
        let h = hierarchy_with_heights(&[1.0, 2.0], 3);
        assert_eq!(expand_mapping(&h, 0, &raw).unwrap(), vec![0, 0, 1, 2, 1]);
        assert_eq!(expand_mapping(&h, 2, &raw).unwrap(), vec![0, 0, 0, 0, 0]);
    }
}
