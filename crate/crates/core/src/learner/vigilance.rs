//! Adaptive vigilance: buffer stability via Cholesky and the quantile threshold.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::knn::euclidean;
use crate::stats::hazen_quantile;
use crate::transform::TransformState;

/// Smallest accepted determinant proxy for a stable window.
pub const STABILITY_DETERMINANT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VigilanceState {
    pub lambda: usize,
    pub tau: f64,
    /// `None` until the first ratio has been observed.
    pub smoothed_ratio: Option<f64>,
    pub recalc_counter: usize,
    /// Recent raw samples, oldest first.
    pub buffer: VecDeque<Vec<f64>>,
    /// Set after the first recalculation; the buffer is untrimmed before that.
    pub trimming: bool,
}

impl Default for VigilanceState {
    fn default() -> Self {
        Self {
            lambda: 2,
            tau: 0.0,
            smoothed_ratio: None,
            recalc_counter: 0,
            buffer: VecDeque::new(),
            trimming: false,
        }
    }
}

impl VigilanceState {
    pub fn retention(&self) -> usize {
        2 * self.lambda
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        self.buffer.push_back(x.to_vec());
        self.trim();
    }

    fn trim(&mut self) {
        if self.trimming {
            while self.buffer.len() > self.retention() {
                self.buffer.pop_front();
            }
        }
    }

    /// The `m` most recent samples, oldest first.
    fn window(&self, m: usize) -> Vec<&[f64]> {
        let skip = self.buffer.len() - m;
        self.buffer.iter().skip(skip).map(Vec::as_slice).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stability {
    Stable { determinant: f64 },
    Unstable,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        matches!(self, Stability::Stable { .. })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("stability test needs at least two samples, got {0}")]
pub struct WindowTooShort(pub usize);

/// `1 / max(s_max, 1e-12)`, with `s_max = 1` when no scale is usable.
pub fn buffer_alpha(node_scales: &[f64]) -> f64 {
    let s_max = node_scales
        .iter()
        .copied()
        .filter(|s| s.is_finite() && *s > 0.0)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
        .unwrap_or(1.0);
    1.0 / s_max.max(1e-12)
}

fn similarity_matrix(window: &[&[f64]], transform: &TransformState, alpha: f64) -> DMatrix<f64> {
    let z: Vec<Vec<f64>> = window
        .iter()
        .map(|v| {
            let mut out = vec![0.0; v.len()];
            transform.apply_into(v, &mut out);
            out
        })
        .collect();
    let m = z.len();
    DMatrix::from_fn(m, m, |p, q| 1.0 / (1.0 + alpha * euclidean(&z[p], &z[q])))
}

/// Cholesky stability of the window's similarity matrix.
pub fn stability_test<V: AsRef<[f64]>>(
    window: &[V],
    transform: &TransformState,
    alpha: f64,
) -> Result<Stability, WindowTooShort> {
    if window.len() < 2 {
        return Err(WindowTooShort(window.len()));
    }
    let w: Vec<&[f64]> = window.iter().map(AsRef::as_ref).collect();
    Ok(stability_of(&similarity_matrix(&w, transform, alpha)))
}

fn stability_of(r: &DMatrix<f64>) -> Stability {
    if r.iter().any(|v| !v.is_finite()) {
        return Stability::Unstable;
    }
    match Cholesky::new(r.clone()) {
        None => Stability::Unstable,
        Some(chol) => {
            let l = chol.l_dirty();
            let mut prod = 1.0;
            for i in 0..l.nrows() {
                let pivot = l[(i, i)];
                if !pivot.is_finite() || pivot <= 0.0 {
                    return Stability::Unstable;
                }
                prod *= pivot;
            }
            let determinant = prod * prod;
            if determinant >= STABILITY_DETERMINANT {
                Stability::Stable { determinant }
            } else {
                Stability::Unstable
            }
        }
    }
}

/// Nearest-neighbour similarity of each window sample (`max_{q != p} R[p, q]`).
pub fn window_nn_similarities<V: AsRef<[f64]>>(
    window: &[V],
    transform: &TransformState,
    alpha: f64,
) -> Vec<f64> {
    let w: Vec<&[f64]> = window.iter().map(AsRef::as_ref).collect();
    nn_similarities(&similarity_matrix(&w, transform, alpha))
}

fn nn_similarities(r: &DMatrix<f64>) -> Vec<f64> {
    let m = r.nrows();
    (0..m)
        .map(|p| {
            (0..m)
                .filter(|&q| q != p)
                .map(|q| r[(p, q)])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// `clip(r / L + (1 - 1/L) * previous, 0, 1)`; the first observation is taken as is.
pub fn smooth_ratio(ratio: f64, previous: Option<f64>, l_mix: usize) -> f64 {
    let prev = previous.unwrap_or(ratio);
    let l = l_mix.max(1) as f64;
    (ratio / l + (1.0 - 1.0 / l) * prev).clamp(0.0, 1.0)
}

/// Inputs shared by every window evaluated during one recalculation.
pub(crate) struct RecalcContext<'a> {
    pub transform: &'a TransformState,
    pub alpha: f64,
    /// Current cluster-to-node ratio `clip(C/K, 0, 1)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecalcOutcome {
    pub lambda: usize,
    pub tau: f64,
    pub smoothed_ratio: Option<f64>,
}

impl VigilanceState {
    fn matrix(&self, m: usize, ctx: &RecalcContext<'_>) -> DMatrix<f64> {
        similarity_matrix(&self.window(m), ctx.transform, ctx.alpha)
    }

    fn threshold(&self, m: usize, l_mix: usize, ctx: &RecalcContext<'_>) -> (f64, Option<f64>) {
        let u = nn_similarities(&self.matrix(m, ctx));
        let rbar = smooth_ratio(ctx.ratio, self.smoothed_ratio, l_mix);
        let tau = hazen_quantile(&u, rbar).expect("window has at least two samples");
        (tau.clamp(0.0, 1.0), Some(rbar))
    }

    fn stable(&self, m: usize, ctx: &RecalcContext<'_>) -> bool {
        stability_of(&self.matrix(m, ctx)).is_stable()
    }

    /// Decremental then incremental window scan; does not mutate `self`.
    pub(crate) fn scan(&self, ctx: &RecalcContext<'_>) -> RecalcOutcome {
        let lambda = self.lambda;
        let len = self.buffer.len();
        let keep = RecalcOutcome {
            lambda,
            tau: self.tau,
            smoothed_ratio: self.smoothed_ratio,
        };

        let m0 = lambda.min(len);
        let mut last = keep;
        for m in 2..=m0 {
            if !self.stable(m, ctx) {
                return last;
            }
            let (tau, rbar) = self.threshold(m, lambda, ctx);
            last = RecalcOutcome {
                lambda: m,
                tau,
                smoothed_ratio: rbar,
            };
        }

        if len <= lambda {
            return keep;
        }
        let m_max = (2 * lambda).min(len);
        let mut low = lambda;
        let mut high = (lambda + 1).min(m_max);
        let mut stride = 1;
        while high <= m_max {
            if !self.stable(high, ctx) {
                let (tau, rbar) = self.threshold(low, low, ctx);
                return RecalcOutcome {
                    lambda: low,
                    tau,
                    smoothed_ratio: rbar,
                };
            }
            low = high;
            stride = (2 * stride).min(m_max - lambda);
            let next = (lambda + stride).min(m_max);
            if next <= low {
                break;
            }
            high = next;
        }
        let (tau, rbar) = self.threshold(m_max, lambda, ctx);
        RecalcOutcome {
            lambda: m_max,
            tau,
            smoothed_ratio: rbar,
        }
    }

    pub(crate) fn commit(&mut self, outcome: RecalcOutcome) {
        self.lambda = outcome.lambda.max(1);
        self.tau = outcome.tau;
        self.smoothed_ratio = outcome.smoothed_ratio;
        self.trimming = true;
        self.recalc_counter = 0;
        self.trim();
    }
}
