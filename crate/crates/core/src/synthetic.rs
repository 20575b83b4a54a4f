//! Seeded synthetic datasets.
//!
//! All randomness comes from [`SeededRng`] (PCG32 with the samplers
//! documented there), so every generator is a pure function of its
//! arguments.

use crate::harness::dataset::Dataset;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyntheticError {
    #[error("blob spec needs at least one blob")]
    NoBlobs,
    #[error("blob spec fields have different lengths")]
    Length,
    #[error("blob {0} has a zero count")]
    ZeroCount(usize),
    #[error("blob {0} has a non-positive standard deviation")]
    BadStd(usize),
    #[error("blob {0} has a different dimension")]
    Dimension(usize),
    #[error("mode support {mode} must exceed bridge support {gap}")]
    Supports { gap: usize, mode: usize },
}

/// Isotropic Gaussian blobs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub centers: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
    pub counts: Vec<usize>,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.centers.is_empty() {
            return Err(SyntheticError::NoBlobs);
        }
        if self.stds.len() != self.centers.len() || self.counts.len() != self.centers.len() {
            return Err(SyntheticError::Length);
        }
        let dim = self.centers[0].len();
        for b in 0..self.centers.len() {
            if self.centers[b].len() != dim || dim == 0 {
                return Err(SyntheticError::Dimension(b));
            }
            if self.counts[b] == 0 {
                return Err(SyntheticError::ZeroCount(b));
            }
            if !(self.stds[b] > 0.0 && self.stds[b].is_finite()) {
                return Err(SyntheticError::BadStd(b));
            }
        }
        Ok(())
    }
}

fn feature_names(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("x{j}")).collect()
}

/// Samples in blob order; label `b` for blob `b`.
pub fn generate_blobs(spec: &BlobSpec) -> Result<Dataset, SyntheticError> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let dim = spec.centers[0].len();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (b, center) in spec.centers.iter().enumerate() {
        for _ in 0..spec.counts[b] {
            features.push(center.iter().map(|c| c + spec.stds[b] * rng.standard_normal()).collect());
            labels.push(b);
        }
    }
    Ok(Dataset {
        name: "blobs".into(),
        feature_names: feature_names(dim),
        features,
        labels,
        class_names: (0..spec.centers.len()).map(|b| format!("blob{b}")).collect(),
    })
}

/// Centers of `k` blobs on a regular simplex-like layout in `k` dimensions,
/// pairwise `separation` apart.
pub fn separated_centers(k: usize, separation: f64) -> Vec<Vec<f64>> {
    let side = separation / std::f64::consts::SQRT_2;
    (0..k)
        .map(|b| (0..k).map(|j| if j == b { side } else { 0.0 }).collect())
        .collect()
}

/// Distance between the two mode centers.
pub const BRIDGE_SPAN: f64 = 10.0;
/// Standard deviation of each mode.
pub const MODE_STD: f64 = 0.5;
/// Jitter applied to each bridge point.
pub const BRIDGE_JITTER: f64 = 0.05;

/// Two dense 1-D Gaussian modes at 0 and [`BRIDGE_SPAN`], joined by
/// `gap_support` evenly spaced bridge points.
///
/// Mode samples are labelled 0 and 1; bridge points take the label of the
/// nearer mode.
pub fn generate_bridged_modes(gap_support: usize, mode_support: usize, seed: u64) -> Result<Dataset, SyntheticError> {
    if mode_support <= gap_support {
        return Err(SyntheticError::Supports {
            gap: gap_support,
            mode: mode_support,
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut features = Vec::with_capacity(2 * mode_support + gap_support);
    let mut labels = Vec::with_capacity(features.capacity());
    for (label, center) in [(0, 0.0), (1, BRIDGE_SPAN)] {
        for _ in 0..mode_support {
            features.push(vec![center + MODE_STD * rng.standard_normal()]);
            labels.push(label);
        }
    }
    for i in 0..gap_support {
        let x = BRIDGE_SPAN * (i + 1) as f64 / (gap_support + 1) as f64;
        features.push(vec![x + BRIDGE_JITTER * rng.standard_normal()]);
        labels.push(usize::from(x > BRIDGE_SPAN / 2.0));
    }
    Ok(Dataset {
        name: "bridged".into(),
        feature_names: feature_names(1),
        features,
        labels,
        class_names: vec!["left".into(), "right".into()],
    })
}

/// Append `copies` exact duplicates of every sample.
pub fn with_duplicates(ds: &Dataset, copies: usize) -> Dataset {
    let mut out = ds.clone();
    for _ in 0..copies {
        out.features.extend(ds.features.iter().cloned());
        out.labels.extend(ds.labels.iter().copied());
    }
    out
}

/// Append `count` points drawn uniformly from the bounding box of `ds`
/// inflated by `margin` on every side, under a new `outlier` class.
pub fn with_outliers(ds: &Dataset, count: usize, margin: f64, seed: u64) -> Dataset {
    let mut out = ds.clone();
    if ds.is_empty() || count == 0 {
        return out;
    }
    let d = ds.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in &ds.features {
        for j in 0..d {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    let mut rng = SeededRng::new(seed);
    let label = out.class_names.len();
    out.class_names.push("outlier".into());
    for _ in 0..count {
        let x = (0..d)
            .map(|j| lo[j] - margin + rng.uniform() * (hi[j] - lo[j] + 2.0 * margin))
            .collect();
        out.features.push(x);
        out.labels.push(label);
    }
    out
}
