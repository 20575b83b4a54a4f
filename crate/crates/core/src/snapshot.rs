//! Versioned JSON model snapshots.
//!
//! A snapshot is a single JSON object:
//!
//! ```text
//! {
//!   "format": "phida-model",
//!   "version": 1,
//!   "dim": <feature dimension>,
//!   "feature_names": [...],
//!   "class_names": [...],        // training labels, informational
//!   "scaler": null | {"min": [...], "max": [...]},
//!   "model": { nodes, vigilance, raw_welford, view, flags, counters }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so a loaded model predicts
//! exactly like the saved one.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::dataset::MinMaxScaler;
use crate::learner::{LearnerError, ModelState};

pub const FORMAT: &str = "phida-model";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed snapshot: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a model snapshot (format `{0}`)")]
    Format(String),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot header says dimension {header}, model has {model}")]
    Dimension { header: usize, model: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub scaler: Option<MinMaxScaler>,
    pub model: ModelState,
}

impl Snapshot {
    pub fn new(model: ModelState, feature_names: Vec<String>, class_names: Vec<String>, scaler: Option<MinMaxScaler>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            dim: model.dim(),
            feature_names,
            class_names,
            scaler,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, SnapshotError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SnapshotError> {
        let snap: Snapshot = serde_json::from_str(text)?;
        if snap.format != FORMAT {
            return Err(SnapshotError::Format(snap.format));
        }
        if snap.version != VERSION {
            return Err(SnapshotError::Version(snap.version));
        }
        if snap.dim != snap.model.dim() {
            return Err(SnapshotError::Dimension {
                header: snap.dim,
                model: snap.model.dim(),
            });
        }
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        fs::write(path, self.to_json()?).map_err(|source| SnapshotError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        let text = fs::read_to_string(path).map_err(|source| SnapshotError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Apply the stored scaler, then assign.
    pub fn predict(&self, x: &[f64]) -> Result<usize, SnapshotError> {
        let scaled;
        let x = match &self.scaler {
            Some(s) => {
                scaled = s.apply(x);
                &scaled
            }
            None => x,
        };
        Ok(self.model.predict(x)?)
    }

    pub fn summary(&self) -> ModelSummary {
        let model = &self.model;
        let clusters = model
            .view()
            .map(|v| {
                let a = &v.assignment;
                a.clusters
                    .iter()
                    .zip(&a.cluster_supports)
                    .map(|(members, &support)| ClusterSummary {
                        nodes: members.len(),
                        support,
                    })
                    .collect()
            })
            .unwrap_or_default();
        ModelSummary {
            dim: model.dim(),
            flags: format!("{:?}", model.flags()),
            samples_seen: model.samples_seen(),
            node_count: model.node_count(),
            active_nodes: model.nodes().iter().filter(|n| n.active).count(),
            total_support: model.nodes().iter().map(|n| n.support).sum(),
            tau: model.vigilance().tau,
            lambda: model.vigilance().lambda,
            raw_components: model.view().map(|v| v.raw_component_count),
            clusters,
            scaled: self.scaler.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub nodes: usize,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub dim: usize,
    pub flags: String,
    pub samples_seen: u64,
    pub node_count: usize,
    pub active_nodes: usize,
    pub total_support: u64,
    pub tau: f64,
    pub lambda: usize,
    pub raw_components: Option<usize>,
    pub clusters: Vec<ClusterSummary>,
    pub scaled: bool,
}

impl fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dimension:      {}", self.dim)?;
        writeln!(f, "flags:          {}", self.flags)?;
        writeln!(f, "input scaling:  {}", if self.scaled { "minmax" } else { "none" })?;
        writeln!(f, "samples seen:   {}", self.samples_seen)?;
        writeln!(f, "nodes:          {} ({} active)", self.node_count, self.active_nodes)?;
        writeln!(f, "total support:  {}", self.total_support)?;
        writeln!(f, "vigilance:      tau={:.6} lambda={}", self.tau, self.lambda)?;
        match self.raw_components {
            Some(r) => writeln!(f, "raw components: {r}")?,
            None => writeln!(f, "raw components: none (no view built)")?,
        }
        writeln!(f, "clusters:       {}", self.clusters.len())?;
        for (c, s) in self.clusters.iter().enumerate() {
            writeln!(f, "  cluster {c}: {} nodes, support {}", s.nodes, s.support)?;
        }
        Ok(())
    }
}
