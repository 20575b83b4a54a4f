//! Inverse-distance ART learner over a sample stream.
//!
//! Each sample is matched against the learned nodes in the adaptively
//! transformed space. The nearest node wins; if its similarity
//! `1 / (1 + alpha * d)` falls below the vigilance threshold a new node is
//! created, otherwise the winner moves towards the sample with rate `1/M` and
//! the runner-up may receive a damped secondary update. Every `lambda` samples
//! the threshold is re-estimated from the recent buffer and the persistence
//! view over the nodes is rebuilt.

mod maintenance;
pub mod vigilance;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignment::{argmin_first, AssignmentError, AssignmentView};
use crate::hierarchy::HierarchyError;
use crate::knn::{build_mutual_graph, euclidean, GraphError};
use crate::persistence::PersistenceError;
use crate::stats::{hazen_median, StatsError, WelfordState};
use crate::transform::TransformState;

pub use vigilance::VigilanceState;

const SCALE_FLOOR: f64 = 1e-6;
const COLD_START_NODES: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("sample has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("model has no learned nodes")]
    NoNodes,
    #[error("model has no assignment view; finalize it first")]
    NoView,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: u64,
    pub representative: Vec<f64>,
    pub support: u64,
    pub scale: f64,
    pub active: bool,
    pub created_epoch: u64,
    pub feature_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerFlags {
    pub refresh: bool,
    pub delete: bool,
    pub prune_ph_input: bool,
    pub use_ph: bool,
}

impl Default for LearnerFlags {
    fn default() -> Self {
        Variant::Full.flags()
    }
}

/// Named ablation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoPh,
    NoRefresh,
    NoDelete,
    NoPrune,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoPh,
        Variant::NoRefresh,
        Variant::NoDelete,
        Variant::NoPrune,
    ];

    pub fn flags(self) -> LearnerFlags {
        let full = LearnerFlags {
            refresh: true,
            delete: true,
            prune_ph_input: true,
            use_ph: true,
        };
        match self {
            Variant::Full => full,
            Variant::NoPh => LearnerFlags { use_ph: false, ..full },
            Variant::NoRefresh => LearnerFlags { refresh: false, ..full },
            Variant::NoDelete => LearnerFlags { delete: false, ..full },
            Variant::NoPrune => LearnerFlags {
                prune_ph_input: false,
                ..full
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPh => "noPH",
            Variant::NoRefresh => "noRefresh",
            Variant::NoDelete => "noDelete",
            Variant::NoPrune => "noPrune",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant `{s}` (expected full, noPH, noRefresh, noDelete or noPrune)"))
    }
}

/// Counters used to check the ablation switches.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrumentation {
    pub recalculations: u64,
    pub midstream_rebuilds: u64,
    pub final_builds: u64,
    pub isolated_filtered: u64,
    pub zeta_component_lookups: u64,
    pub deleted_nodes: u64,
}

/// Cached result of the last persistence build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhView {
    /// Ids of the nodes that entered the persistence step.
    pub node_ids: Vec<u64>,
    pub raw_component_of: Vec<usize>,
    pub raw_component_count: usize,
    /// Edges of the node graph the components were extracted from.
    pub graph_edges: Vec<(usize, usize)>,
    pub graph_component_count: usize,
    pub epsilon: f64,
    pub c_ent: f64,
    pub c_min: usize,
    pub merge_heights: Vec<f64>,
    pub selected_level: usize,
    pub masses_fell_back: bool,
    pub used_ph: bool,
    pub assignment: AssignmentView,
}

impl PhView {
    pub fn cluster_count(&self) -> usize {
        self.assignment.cluster_count()
    }

    pub fn raw_component_of_node(&self, id: u64) -> Option<usize> {
        self.node_ids
            .iter()
            .position(|&n| n == id)
            .map(|i| self.raw_component_of[i])
    }
}

/// What happened to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Created { node: u64 },
    Updated { winner: u64, runner: Option<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepReport {
    pub kind: StepKind,
    pub recalculated: bool,
    pub rebuilt: bool,
}

/// `1 / (1 + alpha * d)` with `alpha = 1 / max(scale, 1e-12)`, or `alpha = 1`
/// when the scale is not a positive finite number.
pub fn inverse_distance_similarity(distance: f64, scale: f64) -> f64 {
    let alpha = if scale.is_finite() && scale > 0.0 {
        1.0 / scale.max(1e-12)
    } else {
        1.0
    };
    1.0 / (1.0 + alpha * distance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    dim: usize,
    nodes: Vec<NodeState>,
    vigilance: VigilanceState,
    raw_welford: WelfordState,
    view: Option<PhView>,
    flags: LearnerFlags,
    samples_seen: u64,
    next_node_id: u64,
    epoch: u64,
    samples_at_last_build: Option<u64>,
    instrumentation: Instrumentation,
}

impl ModelState {
    pub fn new(dim: usize, flags: LearnerFlags) -> Self {
        Self {
            dim,
            nodes: Vec::new(),
            vigilance: VigilanceState::default(),
            raw_welford: WelfordState::new(dim),
            view: None,
            flags,
            samples_seen: 0,
            next_node_id: 0,
            epoch: 0,
            samples_at_last_build: None,
            instrumentation: Instrumentation::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn vigilance(&self) -> &VigilanceState {
        &self.vigilance
    }

    pub fn view(&self) -> Option<&PhView> {
        self.view.as_ref()
    }

    pub fn flags(&self) -> LearnerFlags {
        self.flags
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn instrumentation(&self) -> &Instrumentation {
        &self.instrumentation
    }

    pub fn raw_welford(&self) -> &WelfordState {
        &self.raw_welford
    }

    fn representatives(&self) -> Vec<&[f64]> {
        self.nodes.iter().map(|n| n.representative.as_slice()).collect()
    }

    fn create_node(&mut self, x: &[f64], scale: f64) -> u64 {
        let id = self.next_node_id;
        self.next_node_id += 1;
        self.nodes.push(NodeState {
            id,
            representative: x.to_vec(),
            support: 1,
            scale,
            active: false,
            created_epoch: self.epoch,
            feature_weights: None,
        });
        id
    }

    /// Learn from one raw sample.
    pub fn process_sample(&mut self, x: &[f64]) -> Result<StepReport, LearnerError> {
        if x.len() != self.dim {
            return Err(LearnerError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite);
        }
        self.vigilance.push(x);
        self.raw_welford.update(x)?;
        self.samples_seen += 1;
        let s_star = self
            .raw_welford
            .std()
            .into_iter()
            .fold(SCALE_FLOOR, f64::max);

        let kind = if self.nodes.len() < COLD_START_NODES {
            let node = self.create_node(x, s_star);
            if self.nodes.len() == 2 {
                self.nodes[0].scale = self.nodes[1].scale;
            }
            StepKind::Created { node }
        } else {
            self.match_and_learn(x, s_star)?
        };

        self.vigilance.recalc_counter += 1;
        let mut recalculated = false;
        let mut rebuilt = false;
        if self.vigilance.recalc_counter >= self.vigilance.lambda && self.nodes.len() > 2 {
            self.recalculate_vigilance()?;
            recalculated = true;
            if self.flags.refresh {
                rebuilt = self.maintenance_cycle(false)?;
            }
        }
        Ok(StepReport {
            kind,
            recalculated,
            rebuilt,
        })
    }

    fn match_and_learn(&mut self, x: &[f64], s_star: f64) -> Result<StepKind, LearnerError> {
        let transform = TransformState::fit(&self.representatives())?;
        let z = transform.apply(x)?;
        let mut zy = vec![0.0; self.dim];
        let dist: Vec<f64> = self
            .nodes
            .iter()
            .map(|n| {
                transform.apply_into(&n.representative, &mut zy);
                euclidean(&z, &zy)
            })
            .collect();
        let r = argmin_first(&dist);
        let a_r = inverse_distance_similarity(dist[r], self.nodes[r].scale);
        let tau = self.vigilance.tau;
        if a_r < tau {
            let node = self.create_node(x, s_star);
            return Ok(StepKind::Created { node });
        }

        let winner = &mut self.nodes[r];
        winner.support += 1;
        let eta = 1.0 / winner.support as f64;
        for (y, v) in winner.representative.iter_mut().zip(x) {
            *y += eta * (v - *y);
        }
        winner.scale = s_star;

        let mut b = if r == 0 { 1 } else { 0 };
        for i in 0..dist.len() {
            if i != r && dist[i].total_cmp(&dist[b]).is_lt() {
                b = i;
            }
        }
        let a_b = inverse_distance_similarity(dist[b], self.nodes[b].scale);
        let mut runner = None;
        if a_b > tau && self.zeta(r, b) {
            let chi = ((a_b - tau) / (1.0 - tau).max(1e-12)).clamp(0.0, 1.0);
            let node = &mut self.nodes[b];
            node.support += 1;
            let eta2 = chi / node.support as f64;
            for (y, v) in node.representative.iter_mut().zip(x) {
                *y += eta2 * (v - *y);
            }
            runner = Some(node.id);
        }

        let multi: Vec<f64> = self
            .nodes
            .iter()
            .filter(|n| n.support > 1)
            .map(|n| n.support as f64)
            .collect();
        let median = hazen_median(&multi)?;
        if self.nodes[r].support as f64 >= median {
            self.nodes[r].active = true;
        }
        Ok(StepKind::Updated {
            winner: self.nodes[r].id,
            runner,
        })
    }

    /// Compatibility of winner `r` and runner-up `b` with the cached view.
    fn zeta(&mut self, r: usize, b: usize) -> bool {
        if !self.flags.use_ph {
            return true;
        }
        let Some(view) = &self.view else { return true };
        if view.raw_component_count < 2 {
            return true;
        }
        if self.nodes.len() < (2 * self.vigilance.lambda).max(8) {
            return true;
        }
        self.instrumentation.zeta_component_lookups += 1;
        match (
            view.raw_component_of_node(self.nodes[r].id),
            view.raw_component_of_node(self.nodes[b].id),
        ) {
            (Some(a), Some(c)) => a == c,
            _ => false,
        }
    }

    /// Cluster count used for the cluster-to-node ratio.
    ///
    /// Falls back from the cached output count to the component count of a
    /// graph over all nodes, then to the exp-entropy of node supports.
    fn ratio_cluster_count(&self, transform: &TransformState) -> f64 {
        if let Some(view) = &self.view {
            return view.cluster_count() as f64;
        }
        let reps = self.representatives();
        if let Ok(graph) = build_mutual_graph(&reps, None, transform) {
            return graph.component_count() as f64;
        }
        let supports: Vec<f64> = self.nodes.iter().map(|n| n.support as f64).collect();
        crate::hierarchy::entropy_effective_count(&supports).unwrap_or(1.0)
    }

    fn recalculate_vigilance(&mut self) -> Result<(), LearnerError> {
        let transform = TransformState::fit(&self.representatives())?;
        let scales: Vec<f64> = self.nodes.iter().map(|n| n.scale).collect();
        let c = self.ratio_cluster_count(&transform);
        let ctx = vigilance::RecalcContext {
            transform: &transform,
            alpha: vigilance::buffer_alpha(&scales),
            ratio: (c / self.nodes.len() as f64).clamp(0.0, 1.0),
        };
        let outcome = self.vigilance.scan(&ctx);
        self.vigilance.commit(outcome);
        self.instrumentation.recalculations += 1;
        Ok(())
    }

    /// Final build of the assignment view; a no-op when nothing changed since the last build.
    pub fn finalize(&mut self) -> Result<&PhView, LearnerError> {
        if self.nodes.is_empty() {
            return Err(LearnerError::NoNodes);
        }
        self.maintenance_cycle(true)?;
        self.view.as_ref().ok_or(LearnerError::NoView)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, LearnerError> {
        let view = self.view.as_ref().ok_or(LearnerError::NoView)?;
        Ok(view.assignment.assign(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_examples() {
        assert_eq!(inverse_distance_similarity(0.0, 3.0), 1.0);
        assert_eq!(inverse_distance_similarity(1.0, 1.0), 0.5);
        assert_eq!(inverse_distance_similarity(1.0, f64::NAN), 0.5);
        assert_eq!(inverse_distance_similarity(1.0, -2.0), 0.5);
        assert_eq!(inverse_distance_similarity(2.0, 2.0), 0.5);
    }

    #[test]
    fn cold_start_creates_three_nodes() {
        let mut m = ModelState::new(2, LearnerFlags::default());
        for x in [[0.0, 0.0], [0.0, 0.0], [5.0, 5.0]] {
            assert!(matches!(m.process_sample(&x).unwrap().kind, StepKind::Created { .. }));
        }
        assert_eq!(m.node_count(), 3);
        // second node created with s* = sqrt(0) floored; first node copies it
        assert_eq!(m.nodes()[0].scale, m.nodes()[1].scale);
        assert_eq!(m.nodes()[1].scale, 1e-6);
    }

    #[test]
    fn fourth_sample_on_a_node_increments_support() {
        let mut m = ModelState::new(1, Variant::NoRefresh.flags());
        for x in [0.0, 10.0, 20.0] {
            m.process_sample(&[x]).unwrap();
        }
        let tau = m.vigilance().tau;
        let step = m.process_sample(&[10.0]).unwrap();
        assert!(tau <= 1.0);
        match step.kind {
            StepKind::Updated { winner, .. } => assert_eq!(winner, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(m.nodes()[1].support, 2);
        assert_eq!(m.nodes()[1].representative, vec![10.0]);
    }

    #[test]
    fn winner_moves_to_midpoint() {
        let mut m = ModelState::new(1, Variant::NoRefresh.flags());
        for x in [0.0, 10.0, 20.0] {
            m.process_sample(&[x]).unwrap();
        }
        m.vigilance.tau = 0.0;
        m.process_sample(&[12.0]).unwrap();
        assert_eq!(m.nodes()[1].representative, vec![11.0]);
        assert_eq!(m.nodes()[1].scale, m.raw_welford().std()[0]);
    }

    #[test]
    fn dimension_and_finiteness_checked() {
        let mut m = ModelState::new(2, LearnerFlags::default());
        assert!(m.process_sample(&[1.0]).is_err());
        assert!(m.process_sample(&[1.0, f64::NAN]).is_err());
        assert_eq!(m.samples_seen(), 0);
        assert_eq!(m.finalize().unwrap_err(), LearnerError::NoNodes);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
        assert!(!Variant::NoPh.flags().use_ph);
    }
}
