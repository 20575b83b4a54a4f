//! Online prototype clustering with a persistence-constrained mapping from
//! learned nodes to output clusters.
//!
//! Samples stream into an inverse-distance ART learner ([`learner`]). A
//! maintenance cycle periodically builds a mutual kNN graph over the learned
//! nodes ([`knn`]), runs a density-guided 0-dimensional persistence sweep
//! ([`persistence`]), and agglomerates the resulting raw components without
//! ever splitting one ([`hierarchy`]). Queries are assigned through a frozen
//! [`assignment::AssignmentView`].

pub mod assignment;
pub mod harness;
pub mod hierarchy;
pub mod knn;
pub mod learner;
pub mod metrics;
pub mod persistence;
pub mod rng;
pub mod snapshot;
pub mod stats;
pub mod synthetic;
pub mod transform;

pub use assignment::AssignmentView;
pub use knn::NeighborGraph;
pub use learner::{LearnerFlags, ModelState, Variant};
pub use persistence::{PersistenceTree, RawComponentPartition};
pub use transform::TransformState;
