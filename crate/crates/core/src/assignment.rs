//! Out-of-sample assignment against a frozen clustering of learned nodes.
//!
//! For a multi-node cluster the score is `d_min + d_q`: the distance to the
//! nearest member plus the distance to the member at which the cumulative
//! support of the distance-ordered members first reaches `q * S_c`, where `q`
//! is the support concentration `sum p_c^2`. A singleton cluster scores the
//! squared distance to its only member. The smallest score wins; ties go to
//! the smallest cluster index.

use serde::{Deserialize, Serialize};

use crate::knn::euclidean;
use crate::stats::StatsError;
use crate::transform::TransformState;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssignmentError {
    #[error("assignment view needs at least one node")]
    Empty,
    #[error("{what} has {got} entries for {expected} nodes")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node {0} has zero support")]
    ZeroSupport(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentView {
    /// Stable ids of the nodes in the view, in view order.
    pub node_ids: Vec<u64>,
    pub node_cluster: Vec<usize>,
    /// Member positions (into `node_ids`) per output cluster.
    pub clusters: Vec<Vec<usize>>,
    pub transformed_reps: Vec<Vec<f64>>,
    pub node_supports: Vec<u64>,
    pub transform: TransformState,
    pub cluster_supports: Vec<u64>,
    pub concentration: f64,
}

impl AssignmentView {
    /// Freeze a labelling of nodes into a view.
    ///
    /// `mapping[i]` is the cluster of node `i`; labels must be `0..C` with
    /// every label used.
    pub fn build(
        node_ids: Vec<u64>,
        representatives: &[Vec<f64>],
        supports: &[u64],
        mapping: &[usize],
        transform: TransformState,
    ) -> Result<Self, AssignmentError> {
        let n = node_ids.len();
        if n == 0 {
            return Err(AssignmentError::Empty);
        }
        for (what, got) in [
            ("representative table", representatives.len()),
            ("support table", supports.len()),
            ("mapping", mapping.len()),
        ] {
            if got != n {
                return Err(AssignmentError::Length { what, expected: n, got });
            }
        }
        if let Some(i) = supports.iter().position(|&m| m == 0) {
            return Err(AssignmentError::ZeroSupport(i));
        }
        let count = mapping.iter().copied().max().unwrap_or(0) + 1;
        let mut clusters = vec![Vec::new(); count];
        let mut cluster_supports = vec![0u64; count];
        for (i, &c) in mapping.iter().enumerate() {
            clusters[c].push(i);
            cluster_supports[c] += supports[i];
        }
        if clusters.iter().any(Vec::is_empty) {
            return Err(AssignmentError::Length {
                what: "cluster label range",
                expected: count,
                got: clusters.iter().filter(|c| !c.is_empty()).count(),
            });
        }
        let shares: Vec<f64> = cluster_supports.iter().map(|&s| s as f64).collect();
        let transformed_reps = representatives
            .iter()
            .map(|y| transform.apply(y))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            node_ids,
            node_cluster: mapping.to_vec(),
            clusters,
            transformed_reps,
            node_supports: supports.to_vec(),
            transform,
            cluster_supports,
            concentration: concentration(&shares),
        })
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    /// Score of every cluster for a raw query.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, AssignmentError> {
        let z = self.transform.apply(x)?;
        Ok(self.scores_transformed(&z))
    }

    pub fn scores_transformed(&self, z: &[f64]) -> Vec<f64> {
        let dist: Vec<f64> = self.transformed_reps.iter().map(|y| euclidean(z, y)).collect();
        self.clusters
            .iter()
            .zip(&self.cluster_supports)
            .map(|(members, &total)| {
                if members.len() == 1 {
                    let d = dist[members[0]];
                    return d * d;
                }
                let mut order = members.clone();
                order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
                let target = self.concentration * total as f64;
                let mut cumulative = 0.0;
                let mut d_q = dist[*order.last().unwrap()];
                for &i in &order {
                    cumulative += self.node_supports[i] as f64;
                    if cumulative >= target {
                        d_q = dist[i];
                        break;
                    }
                }
                dist[order[0]] + d_q
            })
            .collect()
    }

    pub fn assign(&self, x: &[f64]) -> Result<usize, AssignmentError> {
        Ok(argmin_first(&self.scores(x)?))
    }
}

/// `sum_c p_c^2` with `p_c = S_c / sum S`.
pub fn concentration(cluster_supports: &[f64]) -> f64 {
    let total: f64 = cluster_supports.iter().sum();
    cluster_supports.iter().map(|s| (s / total).powi(2)).sum()
}

/// Index of the smallest value, preferring the lowest index on ties.
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if v.total_cmp(&values[best]).is_lt() {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_view(positions: &[f64], supports: &[u64], mapping: &[usize]) -> AssignmentView {
        let reps: Vec<Vec<f64>> = positions.iter().map(|p| vec![*p]).collect();
        AssignmentView::build(
            (0..positions.len() as u64).collect(),
            &reps,
            supports,
            mapping,
            TransformState::identity(1),
        )
        .unwrap()
    }

    #[test]
    fn concentration_examples() {
        assert_eq!(line_view(&[0.0, 1.0], &[3, 4], &[0, 0]).concentration, 1.0);
        assert_eq!(line_view(&[0.0, 1.0], &[1, 1], &[0, 1]).concentration, 0.5);
        assert_eq!(line_view(&[0.0, 1.0], &[3, 1], &[0, 1]).concentration, 0.625);
    }

    #[test]
    fn single_cluster_takes_everything() {
        let v = line_view(&[0.0, 5.0], &[2, 2], &[0, 0]);
        for x in [-100.0, 0.0, 3.0, 1e6] {
            assert_eq!(v.assign(&[x]).unwrap(), 0);
        }
    }

    #[test]
    fn equidistant_singletons_pick_lower_index() {
        let v = line_view(&[-1.0, 1.0], &[1, 1], &[0, 1]);
        assert_eq!(v.assign(&[0.0]).unwrap(), 0);
        let v = line_view(&[-1.0, 1.0], &[1, 1], &[1, 0]);
        assert_eq!(v.assign(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn support_radius_example() {
        // Cluster 0 = nodes at 0 (M=9) and 10 (M=1); cluster 1 = singleton at 6 (M=6).
        // S = (10, 6): q = (10/16)^2 + (6/16)^2 = 0.53125.
        let v = line_view(&[0.0, 10.0, 6.0], &[9, 1, 6], &[0, 0, 1]);
        assert!((v.concentration - 0.53125).abs() < 1e-15);
        let h = v.scores(&[0.0]).unwrap();
        assert_eq!(h, vec![0.0, 36.0]);
        assert_eq!(v.assign(&[0.0]).unwrap(), 0);
        // Query at 7: cluster 0 has d_min = 3 and the node at 0 carries 9 >= 5.3125 -> d_q = 7.
        let h = v.scores(&[7.0]).unwrap();
        assert_eq!(h, vec![3.0 + 7.0, 1.0]);
    }

    #[test]
    fn query_at_member_bounds() {
        let v = line_view(&[0.0, 2.0, 3.0, 20.0], &[1, 5, 2, 4], &[0, 0, 0, 1]);
        let diameter = 3.0;
        for x in [0.0, 2.0, 3.0] {
            assert!(v.scores(&[x]).unwrap()[0] <= 2.0 * diameter);
        }
        assert_eq!(v.scores(&[20.0]).unwrap()[1], 0.0);
    }

    #[test]
    fn build_rejects_bad_input() {
        let t = TransformState::identity(1);
        assert_eq!(AssignmentView::build(vec![], &[], &[], &[], t.clone()), Err(AssignmentError::Empty));
        assert!(AssignmentView::build(vec![0], &[vec![0.0]], &[0], &[0], t.clone()).is_err());
        assert!(AssignmentView::build(vec![0, 1], &[vec![0.0], vec![1.0]], &[1, 1], &[0, 2], t).is_err());
    }
}
