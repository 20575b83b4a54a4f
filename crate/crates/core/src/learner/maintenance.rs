//! Node deletion, persistence rebuild and assignment view refresh.

use crate::assignment::AssignmentView;
use crate::hierarchy::map_components;
use crate::knn::{build_mutual_graph, NeighborGraph};
use crate::persistence::{extract_components, largest_gap_threshold, run_persistence, RawComponentPartition};
use crate::transform::TransformState;

use super::{LearnerError, ModelState, PhView};

const MIN_RETAINED: usize = 2;

impl ModelState {
    /// Rebuild the cached view. Returns whether a rebuild happened.
    ///
    /// Without new samples since the previous build the cached view is kept.
    pub(crate) fn maintenance_cycle(&mut self, final_build: bool) -> Result<bool, LearnerError> {
        if self.nodes.is_empty() {
            return Err(LearnerError::NoNodes);
        }
        let fresh = self.samples_at_last_build != Some(self.samples_seen);
        if !fresh && self.view.is_some() {
            return Ok(false);
        }
        if fresh {
            self.epoch += 1;
        }

        if self.flags.delete && fresh {
            let epoch = self.epoch;
            let eligible: Vec<u64> = self
                .nodes
                .iter()
                .filter(|n| n.created_epoch + 1 < epoch && n.support == 1 && !n.active)
                .map(|n| n.id)
                .collect();
            self.remove_nodes(&eligible);
        }

        let active: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].active).collect();
        let mut input = if active.len() >= MIN_RETAINED {
            active
        } else {
            (0..self.nodes.len()).collect()
        };

        let mut pruned = Vec::new();
        let view = if input.len() < MIN_RETAINED {
            self.trivial_view(&input)?
        } else {
            let (mut transform, mut graph) = self.graph_over(&input)?;
            if self.flags.prune_ph_input {
                let isolated = graph.isolated();
                if !isolated.is_empty() {
                    let mut keep: Vec<usize> = (0..input.len()).filter(|p| !isolated.contains(p)).collect();
                    if keep.len() < MIN_RETAINED {
                        let mut by_support = isolated.clone();
                        by_support.sort_by(|&a, &b| {
                            self.nodes[input[b]].support.cmp(&self.nodes[input[a]].support).then(a.cmp(&b))
                        });
                        for p in by_support {
                            if keep.len() >= MIN_RETAINED {
                                break;
                            }
                            keep.push(p);
                        }
                        keep.sort_unstable();
                    }
                    pruned = (0..input.len())
                        .filter(|p| keep.binary_search(p).is_err())
                        .map(|p| input[p])
                        .collect();
                    self.instrumentation.isolated_filtered += pruned.len() as u64;
                    input = keep.into_iter().map(|p| input[p]).collect();
                    (transform, graph) = self.graph_over(&input)?;
                }
            }
            self.persistence_view(&input, transform, &graph)?
        };
        self.view = Some(view);

        if self.flags.delete && fresh {
            let doomed: Vec<u64> = pruned
                .iter()
                .map(|&i| &self.nodes[i])
                .filter(|n| n.support == 1 && !n.active)
                .map(|n| n.id)
                .collect();
            self.remove_nodes(&doomed);
        }

        self.samples_at_last_build = Some(self.samples_seen);
        if final_build {
            self.instrumentation.final_builds += 1;
        } else {
            self.instrumentation.midstream_rebuilds += 1;
        }
        Ok(true)
    }

    /// Remove nodes by id, in order, never going below two nodes.
    fn remove_nodes(&mut self, ids: &[u64]) {
        let allowed = self.nodes.len().saturating_sub(MIN_RETAINED).min(ids.len());
        let doomed = &ids[..allowed];
        if doomed.is_empty() {
            return;
        }
        self.nodes.retain(|n| !doomed.contains(&n.id));
        self.instrumentation.deleted_nodes += doomed.len() as u64;
    }

    fn graph_over(&self, input: &[usize]) -> Result<(TransformState, NeighborGraph), LearnerError> {
        let reps: Vec<&[f64]> = input.iter().map(|&i| self.nodes[i].representative.as_slice()).collect();
        let transform = TransformState::fit(&reps)?;
        let graph = build_mutual_graph(&reps, None, &transform)?;
        Ok((transform, graph))
    }

    fn persistence_view(
        &self,
        input: &[usize],
        transform: TransformState,
        graph: &NeighborGraph,
    ) -> Result<PhView, LearnerError> {
        let supports: Vec<u64> = input.iter().map(|&i| self.nodes[i].support).collect();
        let densities: Vec<f64> = supports.iter().map(|&m| (m as f64).ln()).collect();
        let reps: Vec<Vec<f64>> = input.iter().map(|&i| self.nodes[i].representative.clone()).collect();
        let transformed = reps
            .iter()
            .map(|y| transform.apply(y))
            .collect::<Result<Vec<_>, _>>()?;

        let (raw, tree) = if self.flags.use_ph {
            let tree = run_persistence(graph, &densities)?;
            let epsilon = largest_gap_threshold(&tree.finite_levels);
            (extract_components(&tree, epsilon), Some(tree))
        } else {
            (RawComponentPartition::from_labels(&graph.connected_components(), 0.0), None)
        };
        let mapping = map_components(&raw, tree.as_ref(), &transformed, &supports, &densities)?;
        let node_ids: Vec<u64> = input.iter().map(|&i| self.nodes[i].id).collect();
        let assignment = AssignmentView::build(node_ids.clone(), &reps, &supports, &mapping.node_cluster, transform)?;
        Ok(PhView {
            node_ids,
            raw_component_count: raw.len(),
            raw_component_of: raw.component_of,
            graph_edges: graph.edges().to_vec(),
            graph_component_count: graph.component_count(),
            epsilon: raw.epsilon,
            c_ent: mapping.c_ent,
            c_min: mapping.hierarchy.c_min,
            merge_heights: mapping.hierarchy.merge_heights.clone(),
            selected_level: mapping.hierarchy.selected_level,
            masses_fell_back: mapping.masses.fell_back,
            used_ph: self.flags.use_ph,
            assignment,
        })
    }

    fn trivial_view(&self, input: &[usize]) -> Result<PhView, LearnerError> {
        let node = &self.nodes[input[0]];
        let transform = TransformState::fit(&[node.representative.as_slice()])?;
        let assignment = AssignmentView::build(
            vec![node.id],
            std::slice::from_ref(&node.representative),
            &[node.support],
            &[0],
            transform,
        )?;
        Ok(PhView {
            node_ids: vec![node.id],
            raw_component_of: vec![0],
            raw_component_count: 1,
            graph_edges: Vec::new(),
            graph_component_count: 1,
            epsilon: 0.0,
            c_ent: 1.0,
            c_min: 1,
            merge_heights: Vec::new(),
            selected_level: 0,
            masses_fell_back: false,
            used_ph: self.flags.use_ph,
            assignment,
        })
    }
}
